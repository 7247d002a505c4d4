#![allow(dead_code)]

use std::path::{Path, PathBuf};

use holo_core::config::{load_config, parse_config, Setup};
use holo_core::error::SolveStage;
use holo_core::grid::{homogeneous_medium, make_grid, Grid, Medium, SourcePlane, C64};
use holo_core::helmholtz::{solve_helmholtz, HelmholtzOperator, HelmholtzSettings};
use holo_core::oracle::{analytic_field, AnalyticKind};
use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const F: f64 = 2e6;
pub const C0: f64 = 1480.0;
pub const RHO0: f64 = 1000.0;

pub fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

pub fn setup(name: &str) -> Setup {
    let dir = data_dir();
    load_config(&dir.join(name)).unwrap().build(&dir).unwrap()
}

/// Shipped config with `from` replaced by `to`.
pub fn setup_with(name: &str, from: &str, to: &str) -> Setup {
    let dir = data_dir();
    let text = std::fs::read_to_string(dir.join(name)).unwrap();
    assert!(text.contains(from), "{from}");
    parse_config(&text.replace(from, to)).unwrap().build(&dir).unwrap()
}

pub fn wavelength() -> f64 {
    C0 / F
}

pub fn water(shape: &[usize], ppw: f64, absorber: usize) -> (Grid, Medium) {
    let g = make_grid(shape, wavelength() / ppw, absorber).unwrap();
    let m = homogeneous_medium(&g, C0, RHO0, 0.0).unwrap();
    (g, m)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_c3(rng: &mut ChaCha8Rng, dims: [usize; 3]) -> Array3<C64> {
    Array3::from_shape_simple_fn(dims, || C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
}

pub fn random_c2(rng: &mut ChaCha8Rng, dims: [usize; 2]) -> Array2<C64> {
    Array2::from_shape_simple_fn(dims, || C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
}

pub fn norm<'a>(a: impl IntoIterator<Item = &'a C64>) -> f64 {
    a.into_iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

pub fn rel_l2<'a>(a: impl IntoIterator<Item = &'a C64>, b: impl IntoIterator<Item = &'a C64>) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (x, y) in a.into_iter().zip(b) {
        num += (x - y).norm_sqr();
        den += y.norm_sqr();
    }
    (num / den).sqrt()
}

pub fn dot<'a>(a: impl IntoIterator<Item = &'a C64>, b: impl IntoIterator<Item = &'a C64>) -> C64 {
    a.into_iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Random heterogeneous lossy medium on `grid`.
pub fn random_medium(grid: &Grid, seed: u64) -> Medium {
    let mut r = rng(seed);
    let mut m = homogeneous_medium(grid, C0, RHO0, 0.0).unwrap();
    for v in m.props.c.iter_mut() {
        *v = r.random_range(1400.0..1700.0);
    }
    for v in m.props.rho.iter_mut() {
        *v = r.random_range(950.0..1200.0);
    }
    for v in m.props.alpha.iter_mut() {
        *v = r.random_range(0.0..50.0);
    }
    m
}

pub fn plane_wave_setup(ppw: f64) -> (holo_core::grid::Medium, SourcePlane, HelmholtzSettings, usize) {
    let (g, m) = water(&[56, 240], ppw, 24);
    let plane = Array2::from_elem(g.plane_shape(1).unwrap(), C64::new(1.0, 0.0));
    let src = SourcePlane::from_weights(&g, 1, 40, plane, F).unwrap();
    let mut s = HelmholtzSettings::default().with_tolerance(1e-10);
    s.periodic_axes = vec![0];
    (m, src, s, 24)
}

/// Worst per-wavelength phase error in degrees of a plane wave in water,
/// and the transverse spread of its amplitude.
pub fn plane_wave_phase_error(ppw: f64) -> (f64, f64) {
    let (m, src, s, w) = plane_wave_setup(ppw);
    let p = solve_helmholtz(&m, &src, &s).unwrap();
    let k = 2.0 * std::f64::consts::PI / wavelength();
    let dx = m.grid.dx();
    let n = m.grid.shape()[1];
    let mut worst: f64 = 0.0;
    for z in 50..(n - w - 10) {
        let step = (p.values[[0, 2, z + 1]] / p.values[[0, 2, z]]).arg();
        worst = worst.max(((step - k * dx).abs() * ppw).to_degrees());
    }
    let spread = (p.values[[0, 0, 100]] - p.values[[0, 40, 100]]).norm() / p.values[[0, 0, 100]].norm();
    (worst, spread)
}

/// Relative L2 error of a point-source solve against the free-space Green's
/// function, outside three wavelengths and inside the absorber.
pub fn green_error(shape: &[usize], ppw: f64, absorber: usize) -> f64 {
    let (g, m) = water(shape, ppw, absorber);
    let centre: Vec<usize> = shape.iter().map(|n| n / 2).collect();
    let src = SourcePlane::point(&g, &centre, 1.0, F).unwrap();
    let s = HelmholtzSettings::default().with_tolerance(1e-8);
    let op = HelmholtzOperator::new(&m, F, &s).unwrap();
    let rhs = op.source_rhs(&src).unwrap();
    let u = op.solve(&rhs, SolveStage::Forward).unwrap().u;
    let c3 = g.dims3().map(|n| n / 2);
    let strength = rhs[c3] * g.dx().powi(shape.len() as i32);
    let kind = if shape.len() == 2 { AnalyticKind::Point2d } else { AnalyticKind::Point3d };
    let exact = analytic_field(kind, &g, C0, F, &centre).unwrap();
    let lam = wavelength();
    let dx = g.dx();
    let (mut num, mut den) = (0.0, 0.0);
    for ((i, j, l), &v) in u.indexed_iter() {
        let d = [i as f64 - c3[0] as f64, j as f64 - c3[1] as f64, l as f64 - c3[2] as f64];
        let r = dx * (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        let interior = [i, j, l]
            .iter()
            .zip(g.dims3())
            .all(|(&x, n)| n == 1 || (x >= absorber && x < n - absorber));
        if r >= 3.0 * lam && interior {
            let e = strength * exact.values[[i, j, l]];
            num += (v - e).norm_sqr();
            den += e.norm_sqr();
        }
    }
    (num / den).sqrt()
}
