mod common;

use std::f64::consts::PI;

use common::*;
use holo_core::grid::{make_grid, PlaneField, C64};
use holo_core::oracle::{
    adjoint_samples, analytic_field, bessel_j0, bessel_y0, fd_gradient, hankel1_0, layered_transfer, AnalyticKind, Layer,
};
use holo_core::propagation::{AsPlan, EvanescentPolicy};
use ndarray::Array2;

#[test]
fn bessel_reference_values() {
    // Abramowitz and Stegun table values.
    for (x, j0, y0) in [
        (1.0, 0.765_197_686_557_966_6, 0.088_256_964_215_676_96),
        (10.0, -0.245_935_764_451_348_3, 0.055_671_167_283_599_4),
        (20.0, 0.167_024_664_340_583_2, 0.062_640_596_809_383_8),
    ] {
        assert!((bessel_j0(x) - j0).abs() < 1e-12, "J0({x})");
        assert!((bessel_y0(x) - y0).abs() < 1e-12, "Y0({x})");
        assert_eq!(hankel1_0(x), C64::new(bessel_j0(x), bessel_y0(x)));
    }
}

#[test]
fn plane_kind_is_exact() {
    let g = make_grid(&[8, 40], 1e-4, 2).unwrap();
    let f = analytic_field(AnalyticKind::Plane, &g, C0, F, &[0, 5]).unwrap();
    let k = 2.0 * PI * F / C0;
    for ((_, _, l), v) in f.values.indexed_iter() {
        let expect = C64::from_polar(1.0, k * (l as f64 - 5.0) * 1e-4);
        assert!((v - expect).norm() < 1e-14);
    }
}

#[test]
fn point_3d_amplitude_falls_as_one_over_r() {
    let g = make_grid(&[9, 9, 41], 1e-4, 2).unwrap();
    let f = analytic_field(AnalyticKind::Point3d, &g, C0, F, &[4, 4, 0]).unwrap();
    for r in [3usize, 5, 10, 20] {
        let ratio = f.values[[4, 4, r]].norm() / f.values[[4, 4, 2 * r]].norm();
        assert!((ratio - 2.0).abs() < 1e-12, "{ratio}");
    }
}

#[test]
fn point_2d_far_field_decays_as_root_r() {
    let g = make_grid(&[8, 400], 1e-4, 2).unwrap();
    let f = analytic_field(AnalyticKind::Point2d, &g, C0, F, &[0, 0]).unwrap();
    let k = 2.0 * PI * F / C0;
    for l in 1..400 {
        let r = l as f64 * 1e-4;
        if k * r > 20.0 {
            let asymptotic = 0.25 * (2.0 / (PI * k * r)).sqrt();
            let got = f.values[[0, 0, l]].norm();
            assert!((got / asymptotic - 1.0).abs() < 0.01, "kr = {}", k * r);
        }
    }
    assert!(analytic_field(AnalyticKind::Point3d, &g, C0, F, &[0, 0]).is_err());
}

fn input(shape: [usize; 2]) -> PlaneField {
    // Smooth beam: low spatial frequencies only.
    let v = Array2::from_shape_fn(shape, |(i, j)| {
        let x = j as f64 - shape[1] as f64 / 2.0;
        let y = i as f64 - shape[0] as f64 / 2.0;
        C64::from_polar((-(x * x + y * y) / 60.0).exp(), 0.1 * x)
    });
    PlaneField::new(1.2e-4, v).unwrap()
}

#[test]
fn background_layer_is_free_propagation() {
    let q = input([1, 64]);
    let t = 2.4e-3;
    let out = layered_transfer(&q, &[Layer { c: C0, rho: RHO0, thickness: t }], C0, RHO0, F).unwrap();
    let p = AsPlan::new([1, 64], 1.2e-4, C0, F, EvanescentPolicy::Decay).unwrap();
    let r = p.propagate(&q, t).unwrap();
    assert!(rel_l2(out.transmitted.values.iter(), r.values.iter()) < 1e-10);
    assert!(norm(out.reflected.values.iter()) < 1e-12 * norm(q.values.iter()));
}

#[test]
fn identical_layers_compose() {
    let q = input([6, 32]);
    let l = Layer { c: 2100.0, rho: 1150.0, thickness: 0.7e-3 };
    let two = layered_transfer(&q, &[l, l], C0, RHO0, F).unwrap();
    let one = layered_transfer(&q, &[Layer { thickness: 1.4e-3, ..l }], C0, RHO0, F).unwrap();
    assert!(rel_l2(two.transmitted.values.iter(), one.transmitted.values.iter()) < 1e-10);
    assert!(rel_l2(two.reflected.values.iter(), one.reflected.values.iter()) < 1e-10);
}

#[test]
fn matched_impedance_does_not_reflect_at_normal_incidence() {
    let q = PlaneField::new(1e-4, Array2::from_elem([1, 16], C64::new(1.0, 0.0))).unwrap();
    let c = 2000.0;
    let l = Layer { c, rho: RHO0 * C0 / c, thickness: 1.3e-3 };
    let out = layered_transfer(&q, &[l], C0, RHO0, F).unwrap();
    assert!(norm(out.reflected.values.iter()) < 1e-12);
    // Unit magnitude, phase of the slab.
    let expect = C64::from_polar(1.0, 2.0 * PI * F / c * l.thickness);
    assert!(out.transmitted.values.iter().all(|v| (v - expect).norm() < 1e-12));

    let mismatched = layered_transfer(&q, &[Layer { rho: 2.0 * RHO0, ..l }], C0, RHO0, F).unwrap();
    assert!(norm(mismatched.reflected.values.iter()) > 1e-2);
}

#[test]
fn layers_are_validated() {
    let q = input([1, 16]);
    assert!(layered_transfer(&q, &[Layer { c: -1.0, rho: RHO0, thickness: 1e-3 }], C0, RHO0, F).is_err());
    assert!(layered_transfer(&q, &[], C0, 0.0, F).is_err());
}

#[test]
fn central_differences_converge_at_second_order() {
    let mut sc = setup("toy2d.toml").scenario;
    sc.settings.tolerance = 1e-13;
    let d = sc.initial_design(2).unwrap();
    let probes = [[0, 3, 5], [0, 10, 12]];
    let adj = adjoint_samples(&d, &sc, &sc.loss, &probes).unwrap();
    let err = |h: f64| -> Vec<f64> {
        let fd = fd_gradient(&d, &sc, &sc.loss, &probes, h).unwrap();
        fd.iter().zip(&adj).map(|(f, a)| (f - a).abs()).collect()
    };
    let (coarse, fine) = (err(0.5), err(0.05));
    for (c, f) in coarse.iter().zip(&fine) {
        let order = (c / f).log10();
        assert!((1.5..2.5).contains(&order), "observed order {order} ({c:e} -> {f:e})");
    }

    let saturated = d.with_gamma(d.gamma.mapv(|g| if g > 0.0 { 60.0 } else { -60.0 })).unwrap();
    let fd = fd_gradient(&saturated, &sc, &sc.loss, &probes, 1e-3).unwrap();
    assert!(fd.iter().all(|g| g.abs() < 1e-10), "{fd:?}");
    assert!(fd_gradient(&d, &sc, &sc.loss, &[[0, 0, 999]], 1e-3).is_err());
    assert!(fd_gradient(&d, &sc, &sc.loss, &probes, 0.0).is_err());
}
