//! Thin-element baseline: phase retrieval by alternating angular-spectrum
//! projections, phase-to-thickness conversion, voxelization, and phase
//! conjugation through an aberrating medium.

use std::f64::consts::TAU;

use ndarray::{s, Array2, Zip};

use crate::error::{HoloError, Result, SolveStage};
use crate::grid::{AmplitudeImage, ComplexField, Material, Medium, PlaneField, Region, SourcePlane, C64};
use crate::helmholtz::HelmholtzOperator;
use crate::objective::correlation;
use crate::propagation::{extract_slice, AsPlan};
use crate::scenario::Scenario;

/// Default number of projection cycles.
pub const DEFAULT_IASA_ITERATIONS: usize = 50;

/// Wrap into `[0, 2 pi)`.
pub fn wrap_phase(x: f64) -> f64 {
    let r = x.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Spacing of stored phases: the ulp of `2 pi`. On this lattice
/// `2 pi - p` is exact, so [`PhaseMap::conjugate`] is an involution.
const PHASE_QUANTUM: f64 = 1.0 / (1u64 << 50) as f64;

fn quantize(p: f64) -> f64 {
    let q = (p / PHASE_QUANTUM).round() * PHASE_QUANTUM;
    if q >= TAU {
        0.0
    } else {
        q
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseMap {
    pub dx: f64,
    pub phase: Array2<f64>,
    pub mask: Array2<bool>,
}

impl PhaseMap {
    pub fn new(dx: f64, phase: Array2<f64>, mask: Array2<bool>) -> Result<Self> {
        if phase.shape() != mask.shape() {
            return Err(HoloError::ShapeMismatch {
                expected: mask.shape().to_vec(),
                found: phase.shape().to_vec(),
            });
        }
        if phase.iter().any(|p| !p.is_finite()) {
            return Err(HoloError::NonFinite("phase map"));
        }
        let phase = Zip::from(&phase)
            .and(&mask)
            .map_collect(|&p, &m| if m { quantize(wrap_phase(p)) } else { 0.0 });
        Ok(Self { dx, phase, mask })
    }

    /// Phase `-phi`, wrapped.
    pub fn conjugate(&self) -> Self {
        Self {
            dx: self.dx,
            phase: self.phase.mapv(|p| if p == 0.0 { 0.0 } else { TAU - p }),
            mask: self.mask.clone(),
        }
    }

    /// `amplitude * exp(i phase)` on the aperture.
    pub fn field(&self, amplitude: &Array2<f64>) -> Array2<C64> {
        Zip::from(&self.phase)
            .and(&self.mask)
            .and(amplitude)
            .map_collect(|&p, &m, &a| if m { C64::from_polar(a, p) } else { C64::new(0.0, 0.0) })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThicknessMap {
    pub dx: f64,
    pub thickness: Array2<f64>,
    pub t_max: f64,
}

/// Result of phase retrieval with the per-cycle correlation history
/// (entry 0 is the starting phase).
#[derive(Debug, Clone)]
pub struct IasaResult {
    pub phase: PhaseMap,
    pub correlations: Vec<f64>,
}

fn keep_phase(v: C64, a: f64) -> C64 {
    let n = v.norm();
    if n > 0.0 {
        v * (a / n)
    } else {
        C64::new(a, 0.0)
    }
}

/// One projection cycle starting from the hologram-plane field `h`.
fn iasa_cycle(plan: &AsPlan, h: &Array2<C64>, q0: &Array2<f64>, source: &Array2<f64>, d: f64) -> Result<Array2<C64>> {
    let fwd = plan.propagate(&PlaneField::new(plan.dx(), h.clone())?, d)?;
    let at_target = Zip::from(&fwd.values).and(q0).map_collect(|&v, &a| keep_phase(v, a));
    let back = plan.propagate(&PlaneField::new(plan.dx(), at_target)?, -d)?;
    Ok(Zip::from(&back.values).and(source).map_collect(|&v, &a| keep_phase(v, a)))
}

/// Iterative angular-spectrum phase retrieval from zero initial phase.
pub fn iasa_design(plan: &AsPlan, q0: &AmplitudeImage, source_amplitude: &Array2<f64>, d: f64, n_iter: usize) -> Result<IasaResult> {
    if n_iter == 0 {
        return Err(HoloError::InvalidArgument("phase retrieval needs at least one iteration".into()));
    }
    if !(d.is_finite() && d > 0.0) {
        return Err(HoloError::InvalidArgument(format!("propagation distance must be positive, got {d}")));
    }
    if source_amplitude.shape() != q0.values.shape() {
        return Err(HoloError::ShapeMismatch {
            expected: q0.values.shape().to_vec(),
            found: source_amplitude.shape().to_vec(),
        });
    }
    if source_amplitude.iter().all(|&a| a == 0.0) {
        return Err(HoloError::ZeroNorm("source amplitude"));
    }
    let mask = source_amplitude.mapv(|a| a > 0.0);
    let score = |h: &Array2<C64>| -> Result<f64> {
        let q = plan.propagate(&PlaneField::new(plan.dx(), h.clone())?, d)?.amplitude();
        correlation(&q, q0)
    };
    let mut h = source_amplitude.mapv(|a| C64::new(a, 0.0));
    let mut correlations = vec![score(&h)?];
    for _ in 0..n_iter {
        h = iasa_cycle(plan, &h, &q0.values, source_amplitude, d)?;
        correlations.push(score(&h)?);
    }
    let phase = PhaseMap::new(plan.dx(), h.mapv(|v| v.arg()), mask)?;
    Ok(IasaResult { phase, correlations })
}

fn phase_rate(c_lens: f64, c0: f64, frequency: f64) -> Result<f64> {
    if !(c_lens > 0.0 && c0 > 0.0 && frequency > 0.0) {
        return Err(HoloError::InvalidArgument("sound speeds and frequency must be positive".into()));
    }
    if c_lens == c0 {
        return Err(HoloError::InvalidArgument("lens and background sound speeds are equal".into()));
    }
    Ok(TAU * frequency / c_lens - TAU * frequency / c0)
}

/// Column thickness whose relative phase `(k_lens - k0) t` equals `phi`
/// modulo `2 pi`, with `t` in `[0, 2 pi / |k_lens - k0|)`.
pub fn phase_to_thickness(phase: &PhaseMap, c_lens: f64, c0: f64, frequency: f64, t_max: f64) -> Result<ThicknessMap> {
    let dk = phase_rate(c_lens, c0, frequency)?;
    let period = TAU / dk.abs();
    if t_max < period {
        return Err(HoloError::InvalidArgument(format!(
            "maximum thickness {t_max:.3e} m is below one phase period {period:.3e} m"
        )));
    }
    let sign = dk.signum();
    let thickness = Zip::from(&phase.phase)
        .and(&phase.mask)
        .map_collect(|&p, &m| if m { wrap_phase(sign * p) / dk.abs() } else { 0.0 });
    Ok(ThicknessMap {
        dx: phase.dx,
        thickness,
        t_max,
    })
}

/// Relative transmission phase of each column.
pub fn thickness_to_phase(t: &ThicknessMap, mask: &Array2<bool>, c_lens: f64, c0: f64, frequency: f64) -> Result<PhaseMap> {
    let dk = phase_rate(c_lens, c0, frequency)?;
    PhaseMap::new(t.dx, t.thickness.mapv(|t| dk * t), mask.clone())
}

/// Voxelized column lens: in each column of `lens`, the first
/// `round(t / dx)` cells from the input face take `lens_material`; the rest
/// keep the properties of `base`.
pub fn thickness_to_medium(t: &ThicknessMap, base: &Medium, lens: &Region, lens_material: Material) -> Result<Medium> {
    let grid = &base.grid;
    let (off, dims) = lens.storage(grid)?;
    let axis3 = 2;
    let plane = grid.plane_shape(grid.ndim() - 1)?;
    if t.thickness.shape() != plane {
        return Err(HoloError::ShapeMismatch {
            expected: plane.to_vec(),
            found: t.thickness.shape().to_vec(),
        });
    }
    let depth = dims[axis3];
    let n_max = (t.t_max / grid.dx()).round() as usize;
    if n_max < 2 || n_max > depth {
        return Err(HoloError::InvalidArgument(format!(
            "lens of {depth} cells cannot represent a maximum thickness of {n_max} cells"
        )));
    }
    lens_material.validate()?;
    let mut out = base.clone();
    for i in 0..dims[0] {
        for j in 0..dims[1] {
            let tc = t.thickness[[off[0] + i, off[1] + j]];
            let n = ((tc / grid.dx()).round() as usize).min(depth);
            let sl = s![off[0] + i, off[1] + j, off[2]..off[2] + n];
            out.props.c.slice_mut(sl).fill(lens_material.c);
            out.props.rho.slice_mut(sl).fill(lens_material.rho);
            out.props.alpha.slice_mut(sl).fill(lens_material.alpha);
        }
    }
    Ok(out)
}

/// Phase on plane `hologram_index` that refocuses onto `q0` at `d` beyond
/// the extraction plane of `scenario`, found by radiating the conjugated
/// target back through `medium` and conjugating the field on the hologram
/// plane.
///
/// Target planes outside the grid are first carried back to the last
/// interior plane with the background angular spectrum.
pub fn phase_conjugate_design(
    q0: &AmplitudeImage,
    scenario: &Scenario,
    medium: &Medium,
    d: f64,
    hologram_index: usize,
    aperture: &Array2<bool>,
) -> Result<PhaseMap> {
    let grid = &medium.grid;
    let axis = grid.ndim() - 1;
    let n = grid.shape()[axis];
    let last = n - grid.absorber_width() - 1;
    let offset = (d / grid.dx()).round() as usize;
    let (index, residual) = if scenario.extraction_index + offset <= last {
        (scenario.extraction_index + offset, 0.0)
    } else {
        (last, d - (last - scenario.extraction_index) as f64 * grid.dx())
    };
    if index <= scenario.extraction_index || hologram_index >= index {
        return Err(HoloError::InvalidArgument("target plane must lie beyond the extraction and hologram planes".into()));
    }
    grid.check_interior(axis, hologram_index)?;
    let target = PlaneField::new(grid.dx(), q0.values.mapv(|a| C64::new(a, 0.0)))?;
    let at_source = if residual > 0.0 {
        scenario.plan.propagate(&target, residual)?
    } else {
        target
    };
    let weights = scenario.plan.sheet_weights(&at_source)?.values;
    let source = SourcePlane::from_weights(grid, axis, index, weights, scenario.source.frequency)?;
    let op = HelmholtzOperator::new(medium, source.frequency, &scenario.settings)?;
    let rhs = op.source_rhs(&source)?;
    let u = op.solve(&rhs, SolveStage::Forward)?.u;
    let p = ComplexField::new(grid.clone(), op.to_pressure(&u))?;
    let h = extract_slice(&p, axis, hologram_index)?;
    PhaseMap::new(grid.dx(), h.values.mapv(|v| -v.arg()), aperture.clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_stays_in_range() {
        for x in [-TAU, -1e-300, 0.0, 3.0, TAU, 7.0 * TAU + 0.5, -0.0] {
            let w = wrap_phase(x);
            assert!((0.0..TAU).contains(&w), "{x} -> {w}");
        }
    }

    #[test]
    fn half_speed_lens_gives_one_wavelength_for_pi() {
        let f = 1e6;
        let c0 = 1500.0;
        let p = PhaseMap::new(1e-4, Array2::from_elem([1, 3], std::f64::consts::PI), Array2::from_elem([1, 3], true)).unwrap();
        let t = phase_to_thickness(&p, 2.0 * c0, c0, f, 1e-2).unwrap();
        let k0 = TAU * f / c0;
        // pi / (k0 - k0 / 2) = 2 pi / k0, one background wavelength.
        let expect = std::f64::consts::PI / (k0 - k0 / 2.0);
        assert!(t.thickness.iter().all(|&v| (v - expect).abs() < 1e-15));
        assert!((expect - c0 / f).abs() < 1e-15);
    }

    #[test]
    fn zero_phase_gives_zero_thickness() {
        let p = PhaseMap::new(1e-4, Array2::zeros([2, 2]), Array2::from_elem([2, 2], true)).unwrap();
        let t = phase_to_thickness(&p, 2500.0, 1500.0, 1e6, 1e-2).unwrap();
        assert!(t.thickness.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn thickness_guards() {
        let p = PhaseMap::new(1e-4, Array2::zeros([2, 2]), Array2::from_elem([2, 2], true)).unwrap();
        assert!(phase_to_thickness(&p, 1500.0, 1500.0, 1e6, 1e-2).is_err());
        assert!(phase_to_thickness(&p, 2500.0, 1500.0, 1e6, 1e-4).is_err());
    }
}
