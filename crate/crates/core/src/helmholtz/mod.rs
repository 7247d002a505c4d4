//! Heterogeneous Helmholtz solver.
//!
//! The default scheme is the convergent Born series: with a complex centre
//! `k0^2` (`Im k0^2 >= 0`) and radius `eps > max |V - k0^2|`, the
//! preconditioned fixed-point iteration
//!
//! ```text
//! u <- u - gamma (u - G (Vs u - f)),   Vs = V - k0^2 - i eps,
//! G = (-L - k0^2 - i eps)^-1,          gamma = (i / eps) Vs
//! ```
//!
//! is a contraction whenever `Im V >= 0`. `G` is diagonal in Fourier space.
//! When the contraction condition does not hold, or the iteration runs out
//! of budget, restarted GMRES is applied to the same preconditioned system.

mod born;
mod krylov;
pub mod stencil;

use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::error::{HoloError, Result, SolveStage};
use crate::exec::Exec;
use crate::fft::FftPlan;
use crate::grid::{ComplexField, Medium, SourcePlane, C64};

const SHIFT_MARGIN: f64 = 1.1;

/// Centre of the bounding box of `V` in the complex plane, with the
/// imaginary part clamped at zero.
fn centre(v: &Array3<C64>) -> C64 {
    let mut lo = C64::new(f64::INFINITY, f64::INFINITY);
    let mut hi = C64::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for x in v {
        lo = C64::new(lo.re.min(x.re), lo.im.min(x.im));
        hi = C64::new(hi.re.max(x.re), hi.im.max(x.im));
    }
    let c = (lo + hi) * 0.5;
    C64::new(c.re, c.im.max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AbsorberProfile {
    /// Polynomial order of the layer profile.
    pub order: f64,
    /// Peak absorbing potential relative to the local `(omega / c)^2`.
    pub strength: f64,
}

impl Default for AbsorberProfile {
    fn default() -> Self {
        Self {
            order: 2.0,
            strength: 1.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverMethod {
    /// Born series, Krylov fallback.
    Auto,
    Born,
    Krylov,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HelmholtzSettings {
    pub max_iterations: usize,
    /// Relative residual `|A u - f| / |f|` at which the solve stops.
    pub tolerance: f64,
    pub absorber: AbsorberProfile,
    pub method: SolverMethod,
    /// Grid axes without an absorbing layer (periodic wrap).
    pub periodic_axes: Vec<usize>,
    /// Born iterations between true-residual evaluations.
    pub check_every: usize,
    pub krylov_restart: usize,
    /// Execution policy; not part of the serialized settings.
    #[serde(skip)]
    pub exec: Exec,
}

impl Default for HelmholtzSettings {
    fn default() -> Self {
        Self {
            max_iterations: 5000,
            tolerance: 1e-8,
            absorber: AbsorberProfile::default(),
            method: SolverMethod::Auto,
            periodic_axes: Vec::new(),
            check_every: 10,
            krylov_restart: 30,
            exec: Exec::default(),
        }
    }
}

impl HelmholtzSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0 && self.tolerance < 1.0) {
            return Err(HoloError::InvalidArgument(format!(
                "tolerance must lie in (0, 1), got {}",
                self.tolerance
            )));
        }
        if self.max_iterations == 0 || self.check_every == 0 || self.krylov_restart == 0 {
            return Err(HoloError::InvalidArgument(
                "iteration counts must be positive".into(),
            ));
        }
        if !(self.absorber.order > 0.0 && self.absorber.strength >= 0.0) {
            return Err(HoloError::InvalidArgument("invalid absorber profile".into()));
        }
        Ok(())
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }
}

/// Result of one linear solve in `u` variables.
#[derive(Debug, Clone)]
pub struct Solution {
    pub u: Array3<C64>,
    pub residual: f64,
    pub iterations: usize,
    pub history: Vec<f64>,
    pub used_krylov: bool,
}

/// Matrix-free discrete Helmholtz operator for one medium and frequency.
#[derive(Debug, Clone)]
pub struct HelmholtzOperator {
    medium: Medium,
    omega: f64,
    potential: Array3<C64>,
    absorber: Array3<f64>,
    laplacian: Array3<f64>,
    sqrt_rho: Array3<f64>,
    fft: FftPlan,
    k0sq: C64,
    eps: f64,
    green: Array3<C64>,
    settings: HelmholtzSettings,
}

impl HelmholtzOperator {
    pub fn new(medium: &Medium, frequency: f64, settings: &HelmholtzSettings) -> Result<Self> {
        settings.validate()?;
        medium.props.validate()?;
        if !(frequency.is_finite() && frequency > 0.0) {
            return Err(HoloError::InvalidArgument(format!("frequency must be positive, got {frequency}")));
        }
        let grid = &medium.grid;
        let dims = grid.dims3();
        let omega = 2.0 * std::f64::consts::PI * frequency;
        let mut absorbing = [true; 3];
        for &a in &settings.periodic_axes {
            absorbing[grid.axis3(a)?] = false;
        }
        let shape = stencil::absorber_shape(dims, grid.absorber_width(), absorbing, settings.absorber.order);
        let potential = stencil::potential(
            medium.c(),
            medium.rho(),
            medium.alpha(),
            omega,
            grid.dx(),
            &shape,
            settings.absorber.strength,
        );
        let laplacian = stencil::laplacian_eigenvalues(dims, grid.dx());

        let k0sq = centre(&potential);
        let spread = potential.iter().map(|v| (v - k0sq).norm()).fold(0.0, f64::max);
        // The floor keeps the shift positive for lossless homogeneous media;
        // the margin keeps gamma away from zero on the rim of the disc.
        let eps = spread.max(1e-2 * k0sq.re.abs()) * SHIFT_MARGIN;
        let reference = k0sq + C64::new(0.0, eps);
        let green = laplacian.mapv(|l| 1.0 / (-l - reference));

        Ok(Self {
            medium: medium.clone(),
            omega,
            potential,
            absorber: shape,
            laplacian,
            sqrt_rho: medium.rho().mapv(f64::sqrt),
            fft: FftPlan::new(dims, settings.exec),
            k0sq,
            eps,
            green,
            settings: settings.clone(),
        })
    }

    pub fn medium(&self) -> &Medium {
        &self.medium
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn potential(&self) -> &Array3<C64> {
        &self.potential
    }

    /// Absorbing-layer shape in `[0, 1]` per cell.
    pub fn absorber(&self) -> &Array3<f64> {
        &self.absorber
    }

    /// Pointwise `(dV/dc, dV/dalpha)` at the current medium.
    pub fn potential_partials(&self) -> (Array3<C64>, Array3<C64>) {
        stencil::potential_partials(
            self.medium.c(),
            self.medium.alpha(),
            self.omega,
            &self.absorber,
            self.settings.absorber.strength,
        )
    }

    pub fn sqrt_rho(&self) -> &Array3<f64> {
        &self.sqrt_rho
    }

    pub fn settings(&self) -> &HelmholtzSettings {
        &self.settings
    }

    pub fn fft(&self) -> &FftPlan {
        &self.fft
    }

    /// Born-series shift parameters `(k0^2, eps)`.
    pub fn shift(&self) -> (C64, f64) {
        (self.k0sq, self.eps)
    }

    /// `Vs = V - k0^2 - i eps` and `gamma = (i / eps) Vs`.
    pub(crate) fn scattering(&self) -> (Array3<C64>, Array3<C64>) {
        let shift = self.k0sq + C64::new(0.0, self.eps);
        let vs = self.potential.mapv(|v| v - shift);
        let gamma = vs.mapv(|v| C64::new(0.0, 1.0 / self.eps) * v);
        (vs, gamma)
    }

    /// True when `Im V >= 0` everywhere, the condition under which the Born
    /// iteration is a contraction.
    pub fn contraction_holds(&self) -> bool {
        self.potential.iter().all(|v| v.im >= -1e-12 * self.eps)
    }

    /// `A u = L u + V u`.
    pub fn apply(&self, u: &Array3<C64>) -> Array3<C64> {
        let mut lu = u.clone();
        self.fft.forward(&mut lu);
        self.settings.exec.zip_apply(
            lu.as_slice_mut().unwrap(),
            self.laplacian.as_slice().unwrap(),
            |x, &l| *x *= l,
        );
        self.fft.inverse(&mut lu);
        ndarray::Zip::from(&mut lu)
            .and(u)
            .and(&self.potential)
            .for_each(|out, &u, &v| *out += v * u);
        lu
    }

    /// Right-hand side for a source plane on this operator's grid.
    pub fn source_rhs(&self, source: &SourcePlane) -> Result<Array3<C64>> {
        let grid = &self.medium.grid;
        grid.check_interior(source.axis, source.index)?;
        let axis3 = grid.axis3(source.axis)?;
        let expected = grid.plane_shape(source.axis)?;
        if source.weights.shape() != expected {
            return Err(HoloError::ShapeMismatch {
                expected: expected.to_vec(),
                found: source.weights.shape().to_vec(),
            });
        }
        if (source.omega() - self.omega).abs() > 1e-9 * self.omega {
            return Err(HoloError::InvalidSource(
                "source frequency differs from the operator frequency".into(),
            ));
        }
        Ok(stencil::source_term(source, axis3, self.medium.c(), self.medium.rho(), grid.dx()))
    }

    /// Relative residual `|A u - f| / |f|`; `|A u|` relative to one when `f = 0`.
    pub fn residual(&self, u: &Array3<C64>, rhs: &Array3<C64>) -> f64 {
        let au = self.apply(u);
        let num = l2_diff(&au, rhs);
        let den = l2(rhs);
        if den > 0.0 {
            num / den
        } else {
            num
        }
    }

    /// Solve `A u = rhs`.
    pub fn solve(&self, rhs: &Array3<C64>, stage: SolveStage) -> Result<Solution> {
        if rhs.shape() != self.potential.shape() {
            return Err(HoloError::ShapeMismatch {
                expected: self.potential.shape().to_vec(),
                found: rhs.shape().to_vec(),
            });
        }
        if l2(rhs) == 0.0 {
            return Ok(Solution {
                u: Array3::zeros(rhs.raw_dim()),
                residual: 0.0,
                iterations: 0,
                history: vec![0.0],
                used_krylov: false,
            });
        }
        let tol = self.settings.tolerance;
        let mut history = Vec::new();
        let use_born = match self.settings.method {
            SolverMethod::Krylov => false,
            SolverMethod::Born => true,
            SolverMethod::Auto => self.contraction_holds(),
        };
        let mut u = Array3::zeros(rhs.raw_dim());
        let mut iterations = 0;
        if use_born {
            let (res, it) = born::iterate(self, rhs, &mut u, &mut history);
            iterations += it;
            if res <= tol {
                return Ok(Solution {
                    u,
                    residual: res,
                    iterations,
                    history,
                    used_krylov: false,
                });
            }
            if self.settings.method == SolverMethod::Born {
                return Err(HoloError::NonConvergence {
                    stage,
                    residual: res,
                    iterations,
                    history,
                });
            }
        }
        let (res, it) = krylov::gmres(self, rhs, &mut u, &mut history);
        iterations += it;
        if res <= tol {
            Ok(Solution {
                u,
                residual: res,
                iterations,
                history,
                used_krylov: true,
            })
        } else {
            Err(HoloError::NonConvergence {
                stage,
                residual: res,
                iterations,
                history,
            })
        }
    }

    /// Solve `A^H v = rhs` using `A^H = conj(A)`.
    pub fn solve_adjoint(&self, rhs: &Array3<C64>) -> Result<Solution> {
        let conj_rhs = rhs.mapv(|v| v.conj());
        let mut sol = self.solve(&conj_rhs, SolveStage::Adjoint)?;
        sol.u.mapv_inplace(|v| v.conj());
        Ok(sol)
    }

    /// Pressure `P = sqrt(rho) u`.
    pub fn to_pressure(&self, u: &Array3<C64>) -> Array3<C64> {
        let mut p = u.clone();
        ndarray::Zip::from(&mut p)
            .and(&self.sqrt_rho)
            .for_each(|p, &s| *p *= s);
        p
    }

    /// `u = P / sqrt(rho)`.
    pub fn from_pressure(&self, p: &Array3<C64>) -> Array3<C64> {
        let mut u = p.clone();
        ndarray::Zip::from(&mut u)
            .and(&self.sqrt_rho)
            .for_each(|u, &s| *u /= s);
        u
    }

    pub(crate) fn green(&self) -> &Array3<C64> {
        &self.green
    }
}

pub(crate) fn l2(a: &Array3<C64>) -> f64 {
    a.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

pub(crate) fn l2_diff(a: &Array3<C64>, b: &Array3<C64>) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

/// Steady-state pressure field radiated by `source` into `medium`.
pub fn solve_helmholtz(
    medium: &Medium,
    source: &SourcePlane,
    settings: &HelmholtzSettings,
) -> Result<ComplexField> {
    let op = HelmholtzOperator::new(medium, source.frequency, settings)?;
    let rhs = op.source_rhs(source)?;
    let sol = op.solve(&rhs, SolveStage::Forward)?;
    ComplexField::new(medium.grid.clone(), op.to_pressure(&sol.u))
}

/// Relative residual of a pressure field against the discrete operator.
pub fn dense_residual(medium: &Medium, source: &SourcePlane, field: &ComplexField) -> Result<f64> {
    if field.grid != medium.grid {
        return Err(HoloError::ShapeMismatch {
            expected: medium.grid.shape().to_vec(),
            found: field.grid.shape().to_vec(),
        });
    }
    let op = HelmholtzOperator::new(medium, source.frequency, &HelmholtzSettings::default())?;
    let rhs = op.source_rhs(source)?;
    Ok(op.residual(&op.from_pressure(&field.values), &rhs))
}

/// Settings variant used for residual evaluation with explicit absorber and
/// periodicity options.
pub fn residual_with(
    medium: &Medium,
    source: &SourcePlane,
    field: &ComplexField,
    settings: &HelmholtzSettings,
) -> Result<f64> {
    let op = HelmholtzOperator::new(medium, source.frequency, settings)?;
    let rhs = op.source_rhs(source)?;
    Ok(op.residual(&op.from_pressure(&field.values), &rhs))
}
