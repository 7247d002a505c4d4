//! Adjoint-state gradient of the design loss with respect to `gamma`.
//!
//! With `A(theta) u = f`, `P = D u` (`D = sqrt(rho)`) and `Q = A_d S_r P`,
//! a real loss with cogradient `Q_bar` (so that `dL = Re <Q_bar, dQ>`)
//! pulls back as
//!
//! ```text
//! P_bar  = S_r^T A_d^H Q_bar
//! A^H l  = D P_bar
//! dL     = sum dD Re(conj(P_bar) u) - Re sum conj(l) u dV
//! ```
//!
//! and `dV` expands through `c`, `alpha` and the density potential, then
//! through the sigmoid mixture to `gamma`.

use ndarray::{s, Array2, Array3, Axis, Zip};

use crate::error::{HoloError, Result, SolveStage};
use crate::grid::{PlaneField, C64};
use crate::helmholtz::stencil::{density_potential_jvp, density_potential_vjp};
use crate::material::{mixture_derivative, mixture_vjp, DesignVariable};
use crate::objective::{loss_and_sensitivity, LossConfig};
use crate::propagation::inject_slice;
use crate::scenario::{ForwardSolution, Scenario};

/// Loss value and `dL/dgamma` over the lens region.
pub fn loss_and_gradient(design: &DesignVariable, scenario: &Scenario, cfg: &LossConfig) -> Result<(f64, Array3<f64>)> {
    let medium = scenario.medium(design)?;
    let fwd = scenario.solve(&medium)?;
    let q = fwd.q.amplitude();
    let (value, dq) = loss_and_sensitivity(&q, &scenario.target, cfg)?;
    let qbar = amplitude_cogradient(&fwd.q.values, &dq);
    let grad = vjp(design, scenario, &fwd, &qbar)?;
    Ok((value, grad))
}

/// `(dL/dq) Q / |Q|`, zero where `Q` vanishes.
pub fn amplitude_cogradient(q: &Array2<C64>, dq: &Array2<f64>) -> Array2<C64> {
    Zip::from(q).and(dq).map_collect(|&q, &d| {
        let n = q.norm();
        if n > 0.0 {
            q * (d / n)
        } else {
            C64::new(0.0, 0.0)
        }
    })
}

/// Pull a target-plane cogradient `qbar` back to `gamma`.
pub fn vjp(design: &DesignVariable, scenario: &Scenario, fwd: &ForwardSolution, qbar: &Array2<C64>) -> Result<Array3<f64>> {
    let op = &fwd.op;
    let grid = &scenario.base.grid;
    let axis = scenario.axis();
    let plane_bar = scenario.plan.propagate_adjoint(&PlaneField::new(grid.dx(), qbar.clone())?, scenario.target.depth)?;
    let p_bar = inject_slice(grid, axis, scenario.extraction_index, &plane_bar.values)?;
    let mut rhs = p_bar.clone();
    Zip::from(&mut rhs).and(op.sqrt_rho()).for_each(|r, &s| *r *= s);
    let lambda = op.solve_adjoint(&rhs)?;
    // s = conj(l) u; dL = -Re sum s dV
    let sens = Zip::from(&lambda.u).and(&fwd.u).map_collect(|&l, &u| l.conj() * u);
    let (dv_dc, dv_da) = op.potential_partials();
    let (off, dims) = scenario.lens_storage();
    let sl = s![off[0]..off[0] + dims[0], off[1]..off[1] + dims[1], off[2]..off[2] + dims[2]];

    let c_bar = Zip::from(sens.slice(sl))
        .and(dv_dc.slice(sl))
        .map_collect(|&s, &d| -(s * d).re);
    let a_bar = Zip::from(sens.slice(sl))
        .and(dv_da.slice(sl))
        .map_collect(|&s, &d| -(s * d).re);
    let w_bar = sens.mapv(|s| -s.re);
    let rho = op.medium().rho();
    let mut rho_bar = density_potential_vjp(rho, grid.dx(), &w_bar);
    // Pressure scaling D = sqrt(rho).
    Zip::from(&mut rho_bar)
        .and(&p_bar)
        .and(&fwd.u)
        .and(op.sqrt_rho())
        .for_each(|r, &pb, &u, &sq| *r += (pb.conj() * u).re * 0.5 / sq);
    let rho_bar = rho_bar.slice(sl).to_owned();
    Ok(mixture_vjp(design, [&c_bar, &rho_bar, &a_bar]))
}

/// Directional derivative of the complex target-plane field along `dgamma`.
pub fn jvp(design: &DesignVariable, scenario: &Scenario, fwd: &ForwardSolution, dgamma: &Array3<f64>) -> Result<Array2<C64>> {
    if dgamma.shape() != design.gamma.shape() {
        return Err(HoloError::ShapeMismatch {
            expected: design.gamma.shape().to_vec(),
            found: dgamma.shape().to_vec(),
        });
    }
    let op = &fwd.op;
    let grid = &scenario.base.grid;
    let (off, dims) = scenario.lens_storage();
    let sl = s![off[0]..off[0] + dims[0], off[1]..off[1] + dims[1], off[2]..off[2] + dims[2]];
    let [tc, tr, ta] = mixture_derivative(design);
    let mut dc = Array3::zeros(grid.dims3());
    let mut drho = Array3::zeros(grid.dims3());
    let mut da = Array3::zeros(grid.dims3());
    dc.slice_mut(sl).assign(&(&tc * dgamma));
    drho.slice_mut(sl).assign(&(&tr * dgamma));
    da.slice_mut(sl).assign(&(&ta * dgamma));

    let (dv_dc, dv_da) = op.potential_partials();
    let dw = density_potential_jvp(op.medium().rho(), grid.dx(), &drho);
    let mut rhs = Zip::from(&dc)
        .and(&da)
        .and(&dv_dc)
        .and(&dv_da)
        .map_collect(|&dc, &da, &vc, &va| vc * dc + va * da);
    Zip::from(&mut rhs)
        .and(&fwd.u)
        .and(&dw)
        .for_each(|r, &u, &dw| *r = -(*r + dw) * u);
    let du = op.solve(&rhs, SolveStage::Forward)?.u;
    let a3 = grid.axis3(scenario.axis())?;
    let k = scenario.extraction_index;
    let plane = Zip::from(du.index_axis(Axis(a3), k))
        .and(fwd.u.index_axis(Axis(a3), k))
        .and(drho.index_axis(Axis(a3), k))
        .and(op.sqrt_rho().index_axis(Axis(a3), k))
        .map_collect(|&du, &u, &dr, &sq| sq * du + u * (0.5 * dr / sq));
    let p = PlaneField::new(grid.dx(), plane)?;
    Ok(scenario.plan.propagate(&p, scenario.target.depth)?.values)
}
