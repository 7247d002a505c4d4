//! Plane extraction and angular-spectrum propagation through a homogeneous,
//! lossless background.

use ndarray::{s, Array2, Array3, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{HoloError, Result};
use crate::exec::Exec;
use crate::fft::{wavenumbers, FftPlan};
use crate::grid::{plane_dims, ComplexField, Grid, PlaneField, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvanescentPolicy {
    /// Evanescent components decay as `exp(-|kz| |d|)`.
    #[default]
    Decay,
    /// Evanescent components are removed.
    Zero,
}

#[derive(Debug, Clone)]
pub struct AsPlan {
    shape: [usize; 2],
    dx: f64,
    c0: f64,
    frequency: f64,
    policy: EvanescentPolicy,
    padded: bool,
    fft: FftPlan,
    /// `kz^2 = k^2 - kx^2 - ky^2` per bin of the (possibly padded) spectrum.
    kz2: Array2<f64>,
}

impl AsPlan {
    pub fn new(shape: [usize; 2], dx: f64, c0: f64, frequency: f64, policy: EvanescentPolicy) -> Result<Self> {
        Self::with_options(shape, dx, c0, frequency, policy, false, Exec::default())
    }

    /// `padded` doubles every non-trivial axis with zeros before the
    /// transform, which suppresses wrap-around.
    pub fn with_options(
        shape: [usize; 2],
        dx: f64,
        c0: f64,
        frequency: f64,
        policy: EvanescentPolicy,
        padded: bool,
        exec: Exec,
    ) -> Result<Self> {
        if !(c0.is_finite() && c0 > 0.0) {
            return Err(HoloError::InvalidArgument(format!("background sound speed must be positive, got {c0}")));
        }
        if !(frequency.is_finite() && frequency > 0.0) {
            return Err(HoloError::InvalidArgument(format!("frequency must be positive, got {frequency}")));
        }
        if !(dx.is_finite() && dx > 0.0) || shape.contains(&0) {
            return Err(HoloError::InvalidArgument("plane spacing and shape must be positive".into()));
        }
        let work = work_shape(shape, padded);
        let k = 2.0 * std::f64::consts::PI * frequency / c0;
        let k0 = wavenumbers(work[0], dx);
        let k1 = wavenumbers(work[1], dx);
        let kz2 = Array2::from_shape_fn(work, |(i, j)| k * k - k0[i] * k0[i] - k1[j] * k1[j]);
        Ok(Self {
            shape,
            dx,
            c0,
            frequency,
            policy,
            padded,
            fft: FftPlan::for_plane(work, exec),
            kz2,
        })
    }

    /// Plan matching the planes of `grid` perpendicular to `axis`.
    pub fn for_grid(grid: &Grid, axis: usize, c0: f64, frequency: f64, policy: EvanescentPolicy) -> Result<Self> {
        Self::new(grid.plane_shape(axis)?, grid.dx(), c0, frequency, policy)
    }

    /// Same plan with transforms run under `exec`.
    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.fft = FftPlan::for_plane(work_shape(self.shape, self.padded), exec);
        self
    }

    pub fn shape(&self) -> [usize; 2] {
        self.shape
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn c0(&self) -> f64 {
        self.c0
    }

    pub fn frequency(&self) -> f64 {
        self.frequency
    }

    pub fn policy(&self) -> EvanescentPolicy {
        self.policy
    }

    pub fn wavenumber(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.frequency / self.c0
    }

    /// Transfer function for distance `d` on the working spectrum.
    pub fn transfer(&self, d: f64) -> Array2<C64> {
        let policy = self.policy;
        self.kz2.mapv(|kz2| {
            if kz2 >= 0.0 {
                C64::from_polar(1.0, kz2.sqrt() * d)
            } else {
                match policy {
                    EvanescentPolicy::Decay => C64::new((-(-kz2).sqrt() * d.abs()).exp(), 0.0),
                    EvanescentPolicy::Zero => C64::new(0.0, 0.0),
                }
            }
        })
    }

    /// Mask of propagating bins on the working spectrum.
    pub fn propagating(&self) -> Array2<bool> {
        self.kz2.mapv(|v| v >= 0.0)
    }

    fn check(&self, plane: &PlaneField) -> Result<()> {
        if plane.shape() != self.shape {
            return Err(HoloError::ShapeMismatch {
                expected: self.shape.to_vec(),
                found: plane.shape().to_vec(),
            });
        }
        Ok(())
    }

    fn apply(&self, plane: &PlaneField, h: &Array2<C64>) -> Result<PlaneField> {
        self.check(plane)?;
        if h.iter().all(|&v| v == C64::new(1.0, 0.0)) {
            return Ok(plane.clone());
        }
        let mut work = self.pad(&plane.values);
        self.fft.forward2(&mut work);
        work.zip_mut_with(h, |a, &b| *a *= b);
        self.fft.inverse2(&mut work);
        PlaneField::new(plane.dx, self.crop(work))
    }

    /// Propagate `plane` by `d` metres (negative `d` propagates backwards).
    pub fn propagate(&self, plane: &PlaneField, d: f64) -> Result<PlaneField> {
        self.apply(plane, &self.transfer(d))
    }

    /// Source-plane weights whose one-way radiation reproduces `plane`.
    ///
    /// A thin source sheet radiates each propagating component with gain
    /// `k / kz`; this applies the inverse. Evanescent components are dropped.
    pub fn sheet_weights(&self, plane: &PlaneField) -> Result<PlaneField> {
        let k = self.wavenumber();
        let h = self
            .kz2
            .mapv(|kz2| if kz2 > 0.0 { C64::new(kz2.sqrt() / k, 0.0) } else { C64::new(0.0, 0.0) });
        self.apply(plane, &h)
    }

    /// Adjoint of [`AsPlan::propagate`]: the conjugate transfer function.
    pub fn propagate_adjoint(&self, plane: &PlaneField, d: f64) -> Result<PlaneField> {
        self.apply(plane, &self.transfer(d).mapv(|h| h.conj()))
    }

    /// Spectrum of `plane` on the working grid (unnormalized forward DFT).
    pub fn spectrum(&self, plane: &PlaneField) -> Result<Array2<C64>> {
        self.check(plane)?;
        let mut work = self.pad(&plane.values);
        self.fft.forward2(&mut work);
        Ok(work)
    }

    fn pad(&self, values: &Array2<C64>) -> Array2<C64> {
        if !self.padded {
            return values.clone();
        }
        let mut out = Array2::zeros(self.kz2.raw_dim());
        out.slice_mut(s![..self.shape[0], ..self.shape[1]]).assign(values);
        out
    }

    fn crop(&self, work: Array2<C64>) -> Array2<C64> {
        if !self.padded {
            return work;
        }
        work.slice(s![..self.shape[0], ..self.shape[1]]).to_owned()
    }
}

fn work_shape(shape: [usize; 2], padded: bool) -> [usize; 2] {
    if padded {
        shape.map(|n| if n > 1 { 2 * n } else { 1 })
    } else {
        shape
    }
}

/// Field values on the plane `index` perpendicular to grid axis `axis`.
pub fn extract_slice(field: &ComplexField, axis: usize, index: usize) -> Result<PlaneField> {
    let grid = &field.grid;
    grid.check_interior(axis, index)?;
    let a3 = grid.axis3(axis)?;
    PlaneField::new(grid.dx(), field.values.index_axis(Axis(a3), index).to_owned())
}

/// Transpose of [`extract_slice`]: a zero volume holding `plane` at `index`.
pub fn inject_slice(grid: &Grid, axis: usize, index: usize, plane: &Array2<C64>) -> Result<Array3<C64>> {
    grid.check_interior(axis, index)?;
    let a3 = grid.axis3(axis)?;
    let expected = plane_dims(grid.dims3(), a3);
    if plane.shape() != expected {
        return Err(HoloError::ShapeMismatch {
            expected: expected.to_vec(),
            found: plane.shape().to_vec(),
        });
    }
    let mut out = Array3::zeros(grid.dims3());
    out.index_axis_mut(Axis(a3), index).assign(plane);
    Ok(out)
}

/// `Q = A_d S_r P`: extract the plane at `index` and propagate it by `d`.
pub fn propagate_to_target(
    plan: &AsPlan,
    field: &ComplexField,
    axis: usize,
    index: usize,
    d: f64,
) -> Result<PlaneField> {
    let plane = extract_slice(field, axis, index)?;
    plan.propagate(&plane, d)
}
