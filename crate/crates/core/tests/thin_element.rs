mod common;

use std::f64::consts::{PI, TAU};

use common::*;
use holo_core::config::Setup;
use holo_core::grid::{homogeneous_medium, AmplitudeImage, Medium, PlaneField, C64};
use holo_core::oracle::{layered_transfer, Layer};
use holo_core::thin_element::{
    iasa_design, phase_conjugate_design, phase_to_thickness, thickness_to_medium, thickness_to_phase, wrap_phase,
    PhaseMap, ThicknessMap,
};
use ndarray::{Array2, Zip};
use proptest::prelude::*;

fn iasa_distance(s: &Setup) -> f64 {
    let l = &s.layout;
    l.target_distance - (l.hologram_index - l.source_index) as f64 * l.dx
}

fn keep_phase(v: C64, a: f64) -> C64 {
    if v.norm() > 0.0 {
        v * (a / v.norm())
    } else {
        C64::new(a, 0.0)
    }
}

#[test]
fn phase_retrieval_correlation_never_drops() {
    let s = setup("toy2d.toml");
    let sc = &s.scenario;
    let r = iasa_design(&sc.plan, &sc.target.q0, &s.source_amplitude(), iasa_distance(&s), 50).unwrap();
    assert_eq!(r.correlations.len(), 51);
    for w in r.correlations.windows(2) {
        assert!(w[1] >= w[0] - 1e-9, "{} -> {}", w[0], w[1]);
    }
}

#[test]
fn projections_never_move_away_from_the_target_amplitude() {
    let s = setup("toy2d.toml");
    let sc = &s.scenario;
    let d = iasa_distance(&s);
    let amp = s.source_amplitude();
    let q0 = &sc.target.q0.values;
    // Match the target's energy to the source so both constraint sets live
    // on the same sphere.
    let e_src = amp.iter().map(|a| a * a).sum::<f64>().sqrt();
    let e_q0 = q0.iter().map(|a| a * a).sum::<f64>().sqrt();
    let q0 = q0.mapv(|v| v * e_src / e_q0);
    let mut h = amp.mapv(|a| C64::new(a, 0.0));
    let mut last = f64::INFINITY;
    for _ in 0..30 {
        let fwd = sc.plan.propagate(&PlaneField::new(sc.plan.dx(), h.clone()).unwrap(), d).unwrap();
        let dist = Zip::from(&fwd.values).and(&q0).fold(0.0, |s, v, a| s + (v.norm() - a).powi(2)).sqrt();
        assert!(dist <= last * (1.0 + 1e-9), "{dist} after {last}");
        last = dist;
        let at_target = Zip::from(&fwd.values).and(&q0).map_collect(|&v, &a| keep_phase(v, a));
        let back = sc.plan.propagate(&PlaneField::new(sc.plan.dx(), at_target).unwrap(), -d).unwrap();
        h = Zip::from(&back.values).and(&amp).map_collect(|&v, &a| keep_phase(v, a));
    }
}

#[test]
fn free_propagation_target_is_a_fixed_point() {
    let s = setup("toy2d.toml");
    let sc = &s.scenario;
    let d = iasa_distance(&s);
    let amp = s.source_amplitude();
    let free = sc.plan.propagate(&PlaneField::new(sc.plan.dx(), amp.mapv(|a| C64::new(a, 0.0))).unwrap(), d).unwrap();
    let q0 = AmplitudeImage::new(sc.plan.dx(), free.amplitude().values).unwrap();
    let r = iasa_design(&sc.plan, &q0, &amp, d, 1).unwrap();
    assert!(r.correlations[1] > 0.999, "{:?}", r.correlations);
    let worst = Zip::from(&r.phase.phase)
        .and(&r.phase.mask)
        .fold(0.0f64, |m, &p, &on| if on { m.max(p.min(TAU - p)) } else { m });
    assert!(worst < 0.05, "phase departs from uniform by {worst} rad");
}

#[test]
fn one_iteration_is_one_projection_cycle() {
    let s = setup("toy2d.toml");
    let sc = &s.scenario;
    let d = iasa_distance(&s);
    let amp = s.source_amplitude();
    let q0 = &sc.target.q0;
    let p = |v: Array2<C64>, z: f64| sc.plan.propagate(&PlaneField::new(sc.plan.dx(), v).unwrap(), z).unwrap().values;
    let fwd = p(amp.mapv(|a| C64::new(a, 0.0)), d);
    let back = p(Zip::from(&fwd).and(&q0.values).map_collect(|&v, &a| keep_phase(v, a)), -d);
    let h = Zip::from(&back).and(&amp).map_collect(|&v, &a| keep_phase(v, a));
    let expect = PhaseMap::new(sc.plan.dx(), h.mapv(|v| v.arg()), amp.mapv(|a| a > 0.0)).unwrap();
    let r = iasa_design(&sc.plan, q0, &amp, d, 1).unwrap();
    assert_eq!(r.phase, expect);
}

#[test]
fn two_spot_retrieval_reaches_the_target() {
    let s = setup("toy2d.toml");
    let sc = &s.scenario;
    let r = iasa_design(&sc.plan, &sc.target.q0, &s.source_amplitude(), iasa_distance(&s), 50).unwrap();
    let c = *r.correlations.last().unwrap();
    assert!(c > 0.8, "{c}");
}

#[test]
fn retrieval_rejects_bad_input() {
    let s = setup("toy2d.toml");
    let sc = &s.scenario;
    let amp = s.source_amplitude();
    assert!(iasa_design(&sc.plan, &sc.target.q0, &amp, 1e-3, 0).is_err());
    assert!(iasa_design(&sc.plan, &sc.target.q0, &amp, -1e-3, 1).is_err());
    assert!(iasa_design(&sc.plan, &sc.target.q0, &amp.mapv(|_| 0.0), 1e-3, 1).is_err());
}

fn full_mask(shape: [usize; 2]) -> Array2<bool> {
    Array2::from_elem(shape, true)
}

#[test]
fn thickness_examples() {
    let lam = wavelength();
    let zero = PhaseMap::new(1e-4, Array2::zeros([1, 8]), full_mask([1, 8])).unwrap();
    let t = phase_to_thickness(&zero, 2.0 * C0, C0, F, 2.0 * lam).unwrap();
    assert!(t.thickness.iter().all(|&v| v == 0.0));

    let half = PhaseMap::new(1e-4, Array2::from_elem([1, 8], PI), full_mask([1, 8])).unwrap();
    let t = phase_to_thickness(&half, 2.0 * C0, C0, F, 2.0 * lam).unwrap();
    // pi / (k0 - k0 / 2) = lambda0
    assert!(t.thickness.iter().all(|&v| (v - lam).abs() < 1e-15), "{:?}", t.thickness);

    assert!(phase_to_thickness(&half, C0, C0, F, 1.0).is_err());
    assert!(phase_to_thickness(&half, 2.0 * C0, C0, F, 1.9 * lam).is_err());
}

#[test]
fn conjugating_twice_is_the_identity() {
    let mut r = rng(3);
    use rand::Rng;
    let phase = Array2::from_shape_simple_fn([16, 16], || r.random_range(-10.0..10.0));
    let mask = Array2::from_shape_fn([16, 16], |(i, j)| (i + j) % 5 != 0);
    let p = PhaseMap::new(1e-4, phase, mask).unwrap();
    assert_eq!(p.conjugate().conjugate(), p);
    assert!(p.conjugate().phase.iter().all(|&v| (0.0..TAU).contains(&v)));
    let sum = Zip::from(&p.phase).and(&p.conjugate().phase).map_collect(|a, b| wrap_phase(a + b));
    assert!(sum.iter().all(|&v| v.min(TAU - v) < 1e-14));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn thickness_and_phase_are_inverse(phases in prop::collection::vec(-20.0..20.0f64, 12), c_lens in 1600.0..3000.0f64) {
        let p = PhaseMap::new(1e-4, Array2::from_shape_vec([3, 4], phases).unwrap(), full_mask([3, 4])).unwrap();
        let t_max = TAU / (TAU * F / C0 - TAU * F / c_lens).abs();
        let t = phase_to_thickness(&p, c_lens, C0, F, t_max).unwrap();
        prop_assert!(t.thickness.iter().all(|&v| (0.0..t_max).contains(&v)));
        let back = thickness_to_phase(&t, &p.mask, c_lens, C0, F).unwrap();
        for (a, b) in back.phase.iter().zip(&p.phase) {
            let d = wrap_phase(a - b);
            prop_assert!(d.min(TAU - d) < 1e-12, "{} vs {}", a, b);
        }
    }
}

#[test]
fn column_voxelization() {
    let s = setup("toy2d.toml");
    let sc = &s.scenario;
    let lens = &sc.lens;
    let dx = sc.base.grid.dx();
    let depth = lens.shape[1];
    let t_max = depth as f64 * dx;
    let plane = sc.base.grid.plane_shape(1).unwrap();
    let m1 = sc.pair.material1;
    let voxels = |t: Array2<f64>| -> (Medium, usize) {
        let m = thickness_to_medium(&ThicknessMap { dx, thickness: t, t_max }, &sc.base, lens, m1).unwrap();
        let n = m.props.c.iter().zip(&sc.base.props.c).filter(|(a, b)| a != b).count();
        (m, n)
    };
    let (full, n) = voxels(Array2::from_elem(plane, t_max));
    assert_eq!(n, lens.len());
    let block = full.extract(lens).unwrap();
    assert!(block.c.iter().all(|&c| c == m1.c));
    assert_eq!(voxels(Array2::zeros(plane)).1, 0);

    let mut r = rng(5);
    use rand::Rng;
    let t = Array2::from_shape_simple_fn(plane, || r.random_range(0.0..t_max));
    let expect: usize = (lens.offset[0]..lens.offset[0] + lens.shape[0]).map(|i| (t[[0, i]] / dx).round() as usize).sum();
    assert_eq!(voxels(t).1, expect);

    let thin = ThicknessMap { dx, thickness: Array2::zeros(plane), t_max: dx };
    assert!(thickness_to_medium(&thin, &sc.base, lens, m1).is_err());
}

/// Phases agree up to a global offset, RMS over the aperture.
fn rms_phase_error(a: &PhaseMap, b: &Array2<f64>) -> f64 {
    let on: Vec<(f64, f64)> = Zip::from(&a.phase)
        .and(b)
        .and(&a.mask)
        .fold(Vec::new(), |mut v, &x, &y, &m| {
            if m {
                v.push((x, y));
            }
            v
        });
    let offset = on.iter().map(|(x, y)| C64::from_polar(1.0, x - y)).sum::<C64>().arg();
    let sq: f64 = on
        .iter()
        .map(|(x, y)| {
            let d = wrap_phase(x - y - offset);
            d.min(TAU - d).powi(2)
        })
        .sum();
    (sq / on.len() as f64).sqrt()
}

fn water_base(s: &Setup) -> Medium {
    let m = &s.config.medium;
    homogeneous_medium(&s.scenario.base.grid, m.c0, m.rho0, m.alpha0).unwrap()
}

// The toy's 48-cell transverse extent lets wide-angle content reach the
// side absorbers, which the periodic angular spectrum wraps instead.
const WIDE: (&str, &str) = ("transverse_size = 0.00394", "transverse_size = 0.012");

#[test]
fn conjugation_through_water_matches_backward_propagation() {
    let s = setup_with("toy2d.toml", WIDE.0, WIDE.1);
    let sc = &s.scenario;
    let l = &s.layout;
    let aperture = s.source_amplitude().mapv(|a| a > 0.0);
    let p = phase_conjugate_design(&sc.target.q0, sc, &water_base(&s), sc.target.depth, l.hologram_index, &aperture).unwrap();
    let back_dist = (l.extraction_index - l.hologram_index) as f64 * l.dx + sc.target.depth;
    let q0 = PlaneField::new(l.dx, sc.target.q0.values.mapv(|a| C64::new(a, 0.0))).unwrap();
    let reference = sc.plan.propagate(&q0, -back_dist).unwrap().values.mapv(|v| v.arg());
    let e = rms_phase_error(&p, &reference);
    assert!(e < 0.1, "RMS phase error {e} rad");
}

#[test]
fn conjugation_through_a_slab_matches_the_layered_oracle() {
    let s = setup_with("toy2d_aberrator.toml", WIDE.0, WIDE.1);
    let sc = &s.scenario;
    let l = &s.layout;
    let ab = l.aberrator.as_ref().unwrap();
    let (z0, z1) = (ab.offset[1], ab.offset[1] + ab.shape[1]);
    let slab = Layer { c: 1800.0, rho: 1100.0, thickness: (z1 - z0) as f64 * l.dx };
    let mut medium = water_base(&s);
    for z in z0..z1 {
        medium.props.c.slice_mut(ndarray::s![.., .., z]).fill(slab.c);
        medium.props.rho.slice_mut(ndarray::s![.., .., z]).fill(slab.rho);
    }
    let aperture = s.source_amplitude().mapv(|a| a > 0.0);
    let p = phase_conjugate_design(&sc.target.q0, sc, &medium, sc.target.depth, l.hologram_index, &aperture).unwrap();

    // Target plane -> far slab face -> through the slab -> hologram plane.
    let far_gap = (l.extraction_index - z1) as f64 * l.dx + sc.target.depth;
    let near_gap = (z0 - l.hologram_index) as f64 * l.dx;
    let q0 = PlaneField::new(l.dx, sc.target.q0.values.mapv(|a| C64::new(a, 0.0))).unwrap();
    let at_slab = sc.plan.propagate(&q0, far_gap).unwrap();
    let m = &s.config.medium;
    let through = layered_transfer(&at_slab, &[slab], m.c0, m.rho0, F).unwrap().transmitted;
    let h = sc.plan.propagate(&through, near_gap).unwrap();
    let reference = h.values.mapv(|v| -v.arg());
    let e = rms_phase_error(&p, &reference);
    assert!(e < 0.2, "RMS phase error {e} rad");
}
