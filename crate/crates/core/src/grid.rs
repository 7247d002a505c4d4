//! Grids, fields, media and sources.
//!
//! Every array is stored as a 3D `ndarray` in row-major order. A 2D grid of
//! shape `[a, b]` is held as `[1, a, b]`, so grid axis `i` maps to storage
//! axis `i + 3 - ndim`. The last grid axis is the propagation axis in every
//! scenario this crate builds, although slicing and sources accept any axis.

use ndarray::{Array2, Array3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{HoloError, Result};

pub type C64 = Complex64;

/// Smallest admissible extent along any grid axis.
pub const MIN_CELLS: usize = 8;

/// Minimum points per wavelength a scenario may be built with.
pub const MIN_POINTS_PER_WAVELENGTH: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    shape: Vec<usize>,
    dx: f64,
    absorber_width: usize,
}

/// Validate and build a [`Grid`].
pub fn make_grid(shape: &[usize], dx: f64, absorber_width: usize) -> Result<Grid> {
    Grid::new(shape, dx, absorber_width)
}

impl Grid {
    pub fn new(shape: &[usize], dx: f64, absorber_width: usize) -> Result<Self> {
        if !(shape.len() == 2 || shape.len() == 3) {
            return Err(HoloError::InvalidGrid(format!(
                "grid must have 2 or 3 axes, got {}",
                shape.len()
            )));
        }
        if let Some(&n) = shape.iter().find(|&&n| n < MIN_CELLS) {
            return Err(HoloError::InvalidGrid(format!(
                "every axis needs at least {MIN_CELLS} cells, got {n}"
            )));
        }
        if !(dx.is_finite() && dx > 0.0) {
            return Err(HoloError::InvalidGrid(format!("spacing must be positive, got {dx}")));
        }
        let min = *shape.iter().min().unwrap();
        if 2 * absorber_width >= min {
            return Err(HoloError::InvalidGrid(format!(
                "absorber width {absorber_width} must be below half the smallest extent ({min})"
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            dx,
            absorber_width,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn absorber_width(&self) -> usize {
        self.absorber_width
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Storage dimensions, padded to three axes with leading ones.
    pub fn dims3(&self) -> [usize; 3] {
        pad3(&self.shape, 1)
    }

    /// Storage axis for grid axis `axis`.
    pub fn axis3(&self, axis: usize) -> Result<usize> {
        if axis >= self.ndim() {
            return Err(HoloError::AxisOutOfRange {
                axis,
                ndim: self.ndim(),
            });
        }
        Ok(axis + 3 - self.ndim())
    }

    /// True if `index` along `axis` lies outside the absorbing layer.
    pub fn is_interior(&self, axis: usize, index: usize) -> bool {
        axis < self.ndim()
            && index >= self.absorber_width
            && index + self.absorber_width < self.shape[axis]
    }

    pub fn check_interior(&self, axis: usize, index: usize) -> Result<()> {
        self.axis3(axis)?;
        if self.is_interior(axis, index) {
            Ok(())
        } else {
            Err(HoloError::IndexInAbsorber { axis, index })
        }
    }

    /// Shape of a plane cut perpendicular to `axis`, in storage order.
    pub fn plane_shape(&self, axis: usize) -> Result<[usize; 2]> {
        Ok(plane_dims(self.dims3(), self.axis3(axis)?))
    }

    /// Physical extent along `axis` in meters.
    pub fn extent(&self, axis: usize) -> f64 {
        self.shape[axis] as f64 * self.dx
    }

    pub fn points_per_wavelength(&self, c_min: f64, frequency: f64) -> f64 {
        c_min / frequency / self.dx
    }

    pub fn check_resolution(&self, c_min: f64, frequency: f64) -> Result<()> {
        let ppw = self.points_per_wavelength(c_min, frequency);
        if ppw < MIN_POINTS_PER_WAVELENGTH {
            return Err(HoloError::InvalidGrid(format!(
                "{ppw:.2} points per wavelength, need at least {MIN_POINTS_PER_WAVELENGTH}"
            )));
        }
        Ok(())
    }
}

pub(crate) fn pad3(v: &[usize], fill: usize) -> [usize; 3] {
    let mut out = [fill; 3];
    let off = 3 - v.len();
    out[off..].copy_from_slice(v);
    out
}

/// The two storage axes left after removing `axis3`, in order.
pub(crate) fn plane_axes(axis3: usize) -> [usize; 2] {
    match axis3 {
        0 => [1, 2],
        1 => [0, 2],
        _ => [0, 1],
    }
}

pub(crate) fn plane_dims(dims3: [usize; 3], axis3: usize) -> [usize; 2] {
    let [a, b] = plane_axes(axis3);
    [dims3[a], dims3[b]]
}

/// Complex pressure on every cell of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    pub grid: Grid,
    pub values: Array3<C64>,
}

impl ComplexField {
    pub fn new(grid: Grid, values: Array3<C64>) -> Result<Self> {
        let dims = grid.dims3();
        if values.shape() != dims {
            return Err(HoloError::ShapeMismatch {
                expected: dims.to_vec(),
                found: values.shape().to_vec(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(HoloError::NonFinite("complex field"));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: &Grid) -> Self {
        Self {
            values: Array3::zeros(grid.dims3()),
            grid: grid.clone(),
        }
    }
}

/// Complex field on a plane. In 2D mode the plane is a line of shape `[1, n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneField {
    pub dx: f64,
    pub values: Array2<C64>,
}

impl PlaneField {
    pub fn new(dx: f64, values: Array2<C64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(HoloError::NonFinite("plane field"));
        }
        Ok(Self { dx, values })
    }

    pub fn shape(&self) -> [usize; 2] {
        [self.values.nrows(), self.values.ncols()]
    }

    pub fn amplitude(&self) -> AmplitudeImage {
        AmplitudeImage {
            dx: self.dx,
            values: self.values.mapv(|v| v.norm()),
        }
    }
}

/// Nonnegative amplitude image (|Q| or a target |Q0|).
#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeImage {
    pub dx: f64,
    pub values: Array2<f64>,
}

impl AmplitudeImage {
    pub fn new(dx: f64, values: Array2<f64>) -> Result<Self> {
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(HoloError::InvalidArgument(
                "amplitude images must be finite and nonnegative".into(),
            ));
        }
        Ok(Self { dx, values })
    }

    pub fn shape(&self) -> [usize; 2] {
        [self.values.nrows(), self.values.ncols()]
    }
}

/// Acoustic properties of one material: sound speed (m/s), density (kg/m³)
/// and absorption (Np/m at the design frequency).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Material {
    pub c: f64,
    pub rho: f64,
    pub alpha: f64,
}

impl Material {
    pub fn new(c: f64, rho: f64, alpha: f64) -> Result<Self> {
        let m = Self { c, rho, alpha };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c.is_finite() && self.c > 0.0) {
            return Err(HoloError::InvalidMedium(format!("sound speed must be positive, got {}", self.c)));
        }
        if !(self.rho.is_finite() && self.rho > 0.0) {
            return Err(HoloError::InvalidMedium(format!("density must be positive, got {}", self.rho)));
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(HoloError::InvalidMedium(format!(
                "absorption must be nonnegative, got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// Property arrays without a grid, used for lens and aberrator patches.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialBlock {
    pub c: Array3<f64>,
    pub rho: Array3<f64>,
    pub alpha: Array3<f64>,
}

impl MaterialBlock {
    pub fn uniform(dims3: [usize; 3], m: Material) -> Self {
        Self {
            c: Array3::from_elem(dims3, m.c),
            rho: Array3::from_elem(dims3, m.rho),
            alpha: Array3::from_elem(dims3, m.alpha),
        }
    }

    pub fn dims3(&self) -> [usize; 3] {
        let s = self.c.shape();
        [s[0], s[1], s[2]]
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.c.shape();
        if self.rho.shape() != d || self.alpha.shape() != d {
            return Err(HoloError::InvalidMedium("property arrays differ in shape".into()));
        }
        for ((&c, &rho), &alpha) in self.c.iter().zip(&self.rho).zip(&self.alpha) {
            Material { c, rho, alpha }.validate()?;
        }
        Ok(())
    }

    /// Distinct property triples present, in first-seen order.
    pub fn distinct_materials(&self) -> Vec<Material> {
        let mut out: Vec<Material> = Vec::new();
        for ((&c, &rho), &alpha) in self.c.iter().zip(&self.rho).zip(&self.alpha) {
            let m = Material { c, rho, alpha };
            if !out.contains(&m) {
                out.push(m);
            }
        }
        out
    }
}

/// Heterogeneous medium on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Medium {
    pub grid: Grid,
    pub props: MaterialBlock,
}

impl Medium {
    pub fn new(grid: Grid, props: MaterialBlock) -> Result<Self> {
        if props.dims3() != grid.dims3() {
            return Err(HoloError::ShapeMismatch {
                expected: grid.dims3().to_vec(),
                found: props.dims3().to_vec(),
            });
        }
        props.validate()?;
        Ok(Self { grid, props })
    }

    pub fn c(&self) -> &Array3<f64> {
        &self.props.c
    }

    pub fn rho(&self) -> &Array3<f64> {
        &self.props.rho
    }

    pub fn alpha(&self) -> &Array3<f64> {
        &self.props.alpha
    }

    pub fn min_sound_speed(&self) -> f64 {
        self.props.c.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Copy of the properties inside `region`.
    pub fn extract(&self, region: &Region) -> Result<MaterialBlock> {
        let (off, dims) = region.storage(&self.grid)?;
        let cut = |a: &Array3<f64>| {
            a.slice(ndarray::s![
                off[0]..off[0] + dims[0],
                off[1]..off[1] + dims[1],
                off[2]..off[2] + dims[2]
            ])
            .to_owned()
        };
        Ok(MaterialBlock {
            c: cut(&self.props.c),
            rho: cut(&self.props.rho),
            alpha: cut(&self.props.alpha),
        })
    }
}

/// Uniform medium filling `grid`.
pub fn homogeneous_medium(grid: &Grid, c0: f64, rho0: f64, alpha0: f64) -> Result<Medium> {
    let m = Material::new(c0, rho0, alpha0)?;
    Ok(Medium {
        grid: grid.clone(),
        props: MaterialBlock::uniform(grid.dims3(), m),
    })
}

/// Axis-aligned box of cells, in grid axis order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub offset: Vec<usize>,
    pub shape: Vec<usize>,
}

impl Region {
    pub fn new(offset: &[usize], shape: &[usize]) -> Self {
        Self {
            offset: offset.to_vec(),
            shape: shape.to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Offset and extent in storage axes, checked against `grid`.
    pub fn storage(&self, grid: &Grid) -> Result<([usize; 3], [usize; 3])> {
        let oob = || HoloError::OutOfBounds {
            offset: self.offset.clone(),
            shape: self.shape.clone(),
            grid: grid.shape().to_vec(),
        };
        if self.offset.len() != grid.ndim() || self.shape.len() != grid.ndim() {
            return Err(oob());
        }
        for i in 0..grid.ndim() {
            if self.shape[i] == 0 || self.offset[i] + self.shape[i] > grid.shape()[i] {
                return Err(oob());
            }
        }
        Ok((pad3(&self.offset, 0), pad3(&self.shape, 1)))
    }

    /// True if the cell at `idx3` (storage order) lies inside the region.
    pub fn contains3(&self, grid: &Grid, idx3: [usize; 3]) -> bool {
        match self.storage(grid) {
            Ok((o, d)) => (0..3).all(|i| idx3[i] >= o[i] && idx3[i] < o[i] + d[i]),
            Err(_) => false,
        }
    }
}

/// Replace the properties of `base` inside the box at `offset` with `patch`.
pub fn embed_region(base: &Medium, patch: &MaterialBlock, offset: &[usize]) -> Result<Medium> {
    let d = patch.dims3();
    let shape: Vec<usize> = d[3 - base.grid.ndim()..].to_vec();
    if d[..3 - base.grid.ndim()].iter().any(|&n| n != 1) {
        return Err(HoloError::OutOfBounds {
            offset: offset.to_vec(),
            shape: d.to_vec(),
            grid: base.grid.shape().to_vec(),
        });
    }
    let region = Region::new(offset, &shape);
    let (off, dims) = region.storage(&base.grid)?;
    patch.validate()?;
    let mut out = base.clone();
    let sl = ndarray::s![
        off[0]..off[0] + dims[0],
        off[1]..off[1] + dims[1],
        off[2]..off[2] + dims[2]
    ];
    out.props.c.slice_mut(sl).assign(&patch.c);
    out.props.rho.slice_mut(sl).assign(&patch.rho);
    out.props.alpha.slice_mut(sl).assign(&patch.alpha);
    Ok(out)
}

/// Single-frequency source on a grid plane.
///
/// Each in-plane cell carries a complex weight; a disc transducer has weight
/// `amplitude * exp(i phase)` on the aperture and zero elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct SourcePlane {
    pub axis: usize,
    pub index: usize,
    pub frequency: f64,
    pub mask: Array2<bool>,
    pub weights: Array2<C64>,
}

impl SourcePlane {
    /// Uniform disc (a segment in 2D) centred on the plane.
    pub fn disc(
        grid: &Grid,
        axis: usize,
        index: usize,
        diameter: f64,
        amplitude: f64,
        phase: f64,
        frequency: f64,
    ) -> Result<Self> {
        let mask = disc_mask(grid.plane_shape(axis)?, grid.dx(), diameter);
        let w = C64::from_polar(amplitude, phase);
        let weights = mask.mapv(|m| if m { w } else { C64::new(0.0, 0.0) });
        Self::from_parts(grid, axis, index, mask, weights, frequency)
    }

    /// Source whose aperture is the support of `weights`.
    pub fn from_weights(
        grid: &Grid,
        axis: usize,
        index: usize,
        weights: Array2<C64>,
        frequency: f64,
    ) -> Result<Self> {
        let mask = weights.mapv(|w| w.norm() > 0.0);
        Self::from_parts(grid, axis, index, mask, weights, frequency)
    }

    /// Source with an explicit aperture and complex profile. Weights outside
    /// the aperture are zeroed.
    pub fn from_parts(
        grid: &Grid,
        axis: usize,
        index: usize,
        mask: Array2<bool>,
        mut weights: Array2<C64>,
        frequency: f64,
    ) -> Result<Self> {
        grid.check_interior(axis, index)?;
        let expected = grid.plane_shape(axis)?;
        if weights.shape() != expected || mask.shape() != expected {
            return Err(HoloError::ShapeMismatch {
                expected: expected.to_vec(),
                found: weights.shape().to_vec(),
            });
        }
        if !(frequency.is_finite() && frequency > 0.0) {
            return Err(HoloError::InvalidSource(format!("frequency must be positive, got {frequency}")));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(HoloError::NonFinite("source weights"));
        }
        if !mask.iter().any(|&m| m) {
            return Err(HoloError::InvalidSource("source aperture is empty".into()));
        }
        ndarray::Zip::from(&mut weights).and(&mask).for_each(|w, &m| {
            if !m {
                *w = C64::new(0.0, 0.0);
            }
        });
        Ok(Self {
            axis,
            index,
            frequency,
            mask,
            weights,
        })
    }

    /// Single-cell source at `position` (grid axis order), on the plane
    /// perpendicular to the last axis.
    pub fn point(grid: &Grid, position: &[usize], amplitude: f64, frequency: f64) -> Result<Self> {
        let axis = grid.ndim() - 1;
        if position.len() != grid.ndim() || position.iter().zip(grid.shape()).any(|(p, n)| p >= n) {
            return Err(HoloError::InvalidSource(format!("point {position:?} outside grid")));
        }
        let ps = grid.plane_shape(axis)?;
        let mut w = Array2::zeros(ps);
        let p3 = pad3(&position[..grid.ndim()], 0);
        w[[p3[0], p3[1]]] = C64::new(amplitude, 0.0);
        Self::from_weights(grid, axis, position[axis], w, frequency)
    }

    pub fn aperture_mask(&self) -> &Array2<bool> {
        &self.mask
    }

    pub fn omega(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.frequency
    }

    /// Same geometry, weights multiplied by `a`.
    pub fn scaled(&self, a: C64) -> Self {
        Self {
            weights: self.weights.mapv(|w| w * a),
            ..self.clone()
        }
    }
}

/// Cells whose centres lie within `diameter / 2` of the plane centre.
pub fn disc_mask(shape: [usize; 2], dx: f64, diameter: f64) -> Array2<bool> {
    let c0 = (shape[0] as f64 - 1.0) / 2.0;
    let c1 = (shape[1] as f64 - 1.0) / 2.0;
    let r = diameter / 2.0;
    Array2::from_shape_fn(shape, |(i, j)| {
        let a = (i as f64 - c0) * dx;
        let b = (j as f64 - c1) * dx;
        (a * a + b * b).sqrt() <= r + 1e-12 * dx
    })
}
