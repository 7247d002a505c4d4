//! Brute-force and closed-form references for testing the solver, the
//! propagator and the gradient. None of these share code with the
//! iterative solver beyond the stencil definition.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::error::{HoloError, Result};
use crate::fft::wavenumbers;
use crate::gradient::loss_and_gradient;
use crate::grid::{ComplexField, Grid, Medium, PlaneField, SourcePlane, C64};
use crate::helmholtz::stencil;
use crate::helmholtz::HelmholtzSettings;
use crate::material::DesignVariable;
use crate::objective::{loss, LossConfig};
use crate::scenario::Scenario;

/// Largest system the dense oracle will assemble.
pub const DENSE_LIMIT: usize = 4096;

/// Dense matrix and right-hand side of the discrete operator in `u`.
pub struct DenseSystem {
    pub matrix: DMatrix<C64>,
    pub rhs: DVector<C64>,
    pub dims3: [usize; 3],
}

fn flat(dims: [usize; 3], i: usize, j: usize, l: usize) -> usize {
    (i * dims[1] + j) * dims[2] + l
}

/// Assemble `A = L + diag(V)` with the spectral Laplacian written out as a
/// Kronecker sum of explicit 1D matrices.
pub fn assemble(medium: &Medium, source: &SourcePlane, settings: &HelmholtzSettings) -> Result<DenseSystem> {
    let grid = &medium.grid;
    let n = grid.len();
    if n > DENSE_LIMIT {
        return Err(HoloError::TooLarge {
            cells: n,
            limit: DENSE_LIMIT,
        });
    }
    settings.validate()?;
    let dims = grid.dims3();
    let omega = source.omega();
    let mut absorbing = [true; 3];
    for &a in &settings.periodic_axes {
        absorbing[grid.axis3(a)?] = false;
    }
    let shape = stencil::absorber_shape(dims, grid.absorber_width(), absorbing, settings.absorber.order);
    let v = stencil::potential(
        medium.c(),
        medium.rho(),
        medium.alpha(),
        omega,
        grid.dx(),
        &shape,
        settings.absorber.strength,
    );
    let lap: Vec<Vec<f64>> = dims.iter().map(|&m| stencil::laplacian_matrix_1d(m, grid.dx())).collect();
    let mut a = DMatrix::<C64>::zeros(n, n);
    for i in 0..dims[0] {
        for j in 0..dims[1] {
            for l in 0..dims[2] {
                let row = flat(dims, i, j, l);
                if dims[0] > 1 {
                    for p in 0..dims[0] {
                        a[(row, flat(dims, p, j, l))] += lap[0][i * dims[0] + p];
                    }
                }
                if dims[1] > 1 {
                    for p in 0..dims[1] {
                        a[(row, flat(dims, i, p, l))] += lap[1][j * dims[1] + p];
                    }
                }
                if dims[2] > 1 {
                    for p in 0..dims[2] {
                        a[(row, flat(dims, i, j, p))] += lap[2][l * dims[2] + p];
                    }
                }
                a[(row, row)] += v[[i, j, l]];
            }
        }
    }
    let axis3 = grid.axis3(source.axis)?;
    let f = stencil::source_term(source, axis3, medium.c(), medium.rho(), grid.dx());
    let rhs = DVector::from_iterator(n, f.iter().cloned());
    Ok(DenseSystem { matrix: a, rhs, dims3: dims })
}

/// Pressure field from an LU solve of the dense system.
pub fn dense_direct_solve(medium: &Medium, source: &SourcePlane, settings: &HelmholtzSettings) -> Result<ComplexField> {
    let sys = assemble(medium, source, settings)?;
    let grid = &medium.grid;
    if sys.rhs.iter().all(|v| v.norm() == 0.0) {
        return Ok(ComplexField::zeros(grid));
    }
    let lu = sys.matrix.clone().lu();
    let x = lu.solve(&sys.rhs).ok_or(HoloError::Singular { condition: f64::INFINITY })?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(HoloError::Singular {
            condition: condition_estimate(&sys.matrix),
        });
    }
    let u = Array3::from_shape_vec(sys.dims3, x.iter().cloned().collect()).expect("dims match");
    let p = ndarray::Zip::from(&u).and(medium.rho()).map_collect(|&u, &r| u * r.sqrt());
    ComplexField::new(grid.clone(), p)
}

/// Ratio of extreme singular values.
pub fn condition_estimate(m: &DMatrix<C64>) -> f64 {
    let sv = m.clone().singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    max / min
}

/// Relative residual `|A u - f| / |f|` of a pressure field in the dense system.
pub fn dense_residual(sys: &DenseSystem, field: &ComplexField, rho: &Array3<f64>) -> f64 {
    let u = DVector::from_iterator(
        sys.rhs.len(),
        field.values.iter().zip(rho).map(|(p, r)| p / r.sqrt()),
    );
    let r = &sys.matrix * u - &sys.rhs;
    let den = sys.rhs.norm();
    if den > 0.0 {
        r.norm() / den
    } else {
        r.norm()
    }
}

/// Central-difference loss gradient at `probes` (storage indices into the
/// design array).
pub fn fd_gradient(
    design: &DesignVariable,
    scenario: &Scenario,
    cfg: &LossConfig,
    probes: &[[usize; 3]],
    h: f64,
) -> Result<Vec<f64>> {
    if !(h.is_finite() && h > 0.0) {
        return Err(HoloError::InvalidArgument(format!("step must be positive, got {h}")));
    }
    let eval = |g: &Array3<f64>| -> Result<f64> {
        let d = design.with_gamma(g.clone())?;
        let q = scenario.target_field(&scenario.medium(&d)?)?.amplitude();
        loss(&q, &scenario.target, cfg)
    };
    probes
        .iter()
        .map(|&p| {
            if design.gamma.get(p).is_none() {
                return Err(HoloError::InvalidArgument(format!("probe {p:?} outside the lens")));
            }
            let mut plus = design.gamma.clone();
            plus[p] += h;
            let mut minus = design.gamma.clone();
            minus[p] -= h;
            Ok((eval(&plus)? - eval(&minus)?) / (2.0 * h))
        })
        .collect()
}

/// Adjoint gradient sampled at `probes`, for side-by-side comparison.
pub fn adjoint_samples(design: &DesignVariable, scenario: &Scenario, cfg: &LossConfig, probes: &[[usize; 3]]) -> Result<Vec<f64>> {
    let (_, g) = loss_and_gradient(design, scenario, cfg)?;
    Ok(probes.iter().map(|&p| g[p]).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnalyticKind {
    /// `exp(i k z)` along the last axis, `z` measured from the source index.
    Plane,
    /// Outgoing 2D Green's function `-(i/4) H0(kr)`.
    Point2d,
    /// Outgoing 3D Green's function `-exp(ikr) / (4 pi r)`.
    Point3d,
}

/// Closed-form lossless field on `grid`. Point kinds solve
/// `(lap + k^2) G = delta` and are set to zero on the source cell.
pub fn analytic_field(kind: AnalyticKind, grid: &Grid, c0: f64, frequency: f64, source: &[usize]) -> Result<ComplexField> {
    if source.len() != grid.ndim() {
        return Err(HoloError::InvalidArgument("source location must have one index per axis".into()));
    }
    match (kind, grid.ndim()) {
        (AnalyticKind::Point2d, 3) | (AnalyticKind::Point3d, 2) => {
            return Err(HoloError::InvalidArgument(format!("{kind:?} field needs a matching grid dimension")));
        }
        _ => {}
    }
    let k = 2.0 * std::f64::consts::PI * frequency / c0;
    let dx = grid.dx();
    let s3 = crate::grid::pad3(source, 0);
    let values = Array3::from_shape_fn(grid.dims3(), |(i, j, l)| {
        let d = [i as f64 - s3[0] as f64, j as f64 - s3[1] as f64, l as f64 - s3[2] as f64];
        let r = dx * (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        match kind {
            AnalyticKind::Plane => C64::from_polar(1.0, k * d[2] * dx),
            AnalyticKind::Point2d if r > 0.0 => C64::new(0.0, -0.25) * hankel1_0(k * r),
            AnalyticKind::Point3d if r > 0.0 => -C64::from_polar(1.0, k * r) / (4.0 * std::f64::consts::PI * r),
            _ => C64::new(0.0, 0.0),
        }
    });
    ComplexField::new(grid.clone(), values)
}

/// Hankel function of the first kind, order zero, for `x > 0`.
pub fn hankel1_0(x: f64) -> C64 {
    C64::new(bessel_j0(x), bessel_y0(x))
}

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Bessel `J0`: power series below 12, Hankel asymptotic expansion above.
pub fn bessel_j0(x: f64) -> f64 {
    let x = x.abs();
    if x < 12.0 {
        let q = -0.25 * x * x;
        let mut term = 1.0;
        let mut sum = 1.0;
        for m in 1..200 {
            term *= q / (m as f64 * m as f64);
            sum += term;
            if term.abs() < 1e-17 * sum.abs().max(1e-300) {
                break;
            }
        }
        sum
    } else {
        let (p, q) = asymptotic_pq(x);
        let chi = x - std::f64::consts::FRAC_PI_4;
        (2.0 / (std::f64::consts::PI * x)).sqrt() * (p * chi.cos() - q * chi.sin())
    }
}

/// Bessel `Y0` for `x > 0`.
pub fn bessel_y0(x: f64) -> f64 {
    if x < 12.0 {
        let q = -0.25 * x * x;
        let mut term = 1.0;
        let mut harmonic = 0.0;
        let mut sum = 0.0;
        for m in 1..200 {
            term *= q / (m as f64 * m as f64);
            harmonic += 1.0 / m as f64;
            let t = -term * harmonic;
            sum += t;
            if t.abs() < 1e-17 * sum.abs().max(1e-300) && m > 2 {
                break;
            }
        }
        let two_pi = 2.0 / std::f64::consts::PI;
        two_pi * ((0.5 * x).ln() + EULER_GAMMA) * bessel_j0(x) + two_pi * sum
    } else {
        let (p, q) = asymptotic_pq(x);
        let chi = x - std::f64::consts::FRAC_PI_4;
        (2.0 / (std::f64::consts::PI * x)).sqrt() * (p * chi.sin() + q * chi.cos())
    }
}

/// Asymptotic `P0(x)`, `Q0(x)`, summed until the terms stop shrinking.
fn asymptotic_pq(x: f64) -> (f64, f64) {
    let z = 8.0 * x;
    let (mut p, mut q) = (1.0, 0.0);
    let mut a = 1.0;
    for k in 1..60 {
        let odd = (2 * k - 1) as f64;
        let next = a * odd * odd / (k as f64 * z);
        if next >= a {
            break;
        }
        a = next;
        // P takes even k with sign (-1)^(k/2); Q odd k with sign (-1)^((k+1)/2).
        let sign = if (k / 2 + k % 2) % 2 == 0 { 1.0 } else { -1.0 };
        if k % 2 == 0 {
            p += sign * a;
        } else {
            q += sign * a;
        }
    }
    (p, q)
}

/// Homogeneous layer for [`layered_transfer`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Layer {
    pub c: f64,
    pub rho: f64,
    pub thickness: f64,
}

/// Transmitted and reflected planes from [`layered_transfer`].
#[derive(Debug, Clone)]
pub struct LayeredResult {
    pub transmitted: PlaneField,
    pub reflected: PlaneField,
}

/// Per-spatial-frequency transfer-matrix propagation of `q_in`, incident
/// from a background half-space `(c0, rho0)`, through `layers` into the
/// same background. The transmitted plane sits on the far face of the
/// stack; the reflected plane on the near face.
pub fn layered_transfer(q_in: &PlaneField, layers: &[Layer], c0: f64, rho0: f64, frequency: f64) -> Result<LayeredResult> {
    for l in layers {
        if !(l.c > 0.0 && l.rho > 0.0 && l.thickness >= 0.0) {
            return Err(HoloError::InvalidArgument("layers need positive c, rho and nonnegative thickness".into()));
        }
    }
    if !(c0 > 0.0 && rho0 > 0.0 && frequency > 0.0) {
        return Err(HoloError::InvalidArgument("background and frequency must be positive".into()));
    }
    let omega = 2.0 * std::f64::consts::PI * frequency;
    let shape = q_in.shape();
    let kx = wavenumbers(shape[0], q_in.dx);
    let ky = wavenumbers(shape[1], q_in.dx);
    let plan = crate::fft::FftPlan::for_plane(shape, crate::exec::Exec::Sequential);
    let mut spec = q_in.values.clone();
    plan.forward2(&mut spec);
    let kz = |c: f64, kt2: f64| -> C64 {
        let k = omega / c;
        // Branch with Im kz >= 0 so evanescent waves decay.
        C64::new(k * k - kt2, 0.0).sqrt()
    };
    let mut trans = Array2::zeros(spec.raw_dim());
    let mut refl = Array2::zeros(spec.raw_dim());
    let i = C64::new(0.0, 1.0);
    for a in 0..shape[0] {
        for b in 0..shape[1] {
            let kt2 = kx[a] * kx[a] + ky[b] * ky[b];
            let kz0 = kz(c0, kt2);
            let z0 = omega * rho0 / kz0;
            // Beyond e^-300 of decay the layer matrices overflow; nothing
            // gets through and the component is dropped.
            let decay: f64 = layers.iter().map(|l| kz(l.c, kt2).im * l.thickness).sum();
            if decay > 300.0 {
                continue;
            }
            let mut m = [[C64::new(1.0, 0.0), C64::new(0.0, 0.0)], [C64::new(0.0, 0.0), C64::new(1.0, 0.0)]];
            for l in layers {
                let kzl = kz(l.c, kt2);
                let zl = omega * l.rho / kzl;
                let (cs, sn) = ((kzl * l.thickness).cos(), (kzl * l.thickness).sin());
                let layer = [[cs, i * zl * sn], [i * sn / zl, cs]];
                m = matmul(layer, m);
            }
            // [T, T/z0] = M [1 + R, (1 - R)/z0] with det M = 1, so
            // [1 + R, (1 - R)/z0] = adj(M) [T, T/z0].
            let (m11, m12, m21, m22) = (m[0][0], m[0][1], m[1][0], m[1][1]);
            let t = 2.0 / (m11 + m22 - m12 / z0 - z0 * m21);
            let r = t * (m22 - m12 / z0) - 1.0;
            let s = spec[[a, b]];
            trans[[a, b]] = s * t;
            refl[[a, b]] = s * r;
        }
    }
    plan.inverse2(&mut trans);
    plan.inverse2(&mut refl);
    Ok(LayeredResult {
        transmitted: PlaneField::new(q_in.dx, trans)?,
        reflected: PlaneField::new(q_in.dx, refl)?,
    })
}

fn matmul(a: [[C64; 2]; 2], b: [[C64; 2]; 2]) -> [[C64; 2]; 2] {
    let mut out = [[C64::new(0.0, 0.0); 2]; 2];
    for r in 0..2 {
        for c in 0..2 {
            out[r][c] = a[r][0] * b[0][c] + a[r][1] * b[1][c];
        }
    }
    out
}
