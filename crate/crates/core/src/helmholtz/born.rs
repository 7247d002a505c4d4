use ndarray::{Array3, Zip};

use super::HelmholtzOperator;
use crate::grid::C64;

/// Run the preconditioned Born iteration from the current `u` until the
/// relative residual drops below tolerance or the budget is spent.
/// Returns `(residual, iterations)`.
pub(super) fn iterate(
    op: &HelmholtzOperator,
    rhs: &Array3<C64>,
    u: &mut Array3<C64>,
    history: &mut Vec<f64>,
) -> (f64, usize) {
    let settings = op.settings();
    let (scattering, gamma) = op.scattering();
    let green = op.green();
    let mut t = Array3::<C64>::zeros(rhs.raw_dim());

    let mut residual = op.residual(u, rhs);
    history.push(residual);
    let mut it = 0;
    while it < settings.max_iterations && residual > settings.tolerance {
        // t = G (Vs u - f)
        Zip::from(&mut t)
            .and(&scattering)
            .and(&*u)
            .and(rhs)
            .for_each(|t, &vs, &u, &f| *t = vs * u - f);
        op.fft().forward(&mut t);
        settings
            .exec
            .zip_apply(t.as_slice_mut().unwrap(), green.as_slice().unwrap(), |x, &g| *x *= g);
        op.fft().inverse(&mut t);
        // u <- u - gamma (u - t)
        Zip::from(&mut *u)
            .and(&t)
            .and(&gamma)
            .for_each(|u, &t, &g| *u -= g * (*u - t));
        it += 1;
        if it % settings.check_every == 0 || it == settings.max_iterations {
            residual = op.residual(u, rhs);
            history.push(residual);
            if !residual.is_finite() {
                break;
            }
        }
    }
    (residual, it)
}
