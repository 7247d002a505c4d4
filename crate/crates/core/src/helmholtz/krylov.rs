use ndarray::{Array3, Zip};

use super::{l2, HelmholtzOperator};
use crate::grid::C64;

struct Preconditioned<'a> {
    op: &'a HelmholtzOperator,
    scattering: Array3<C64>,
    gamma: Array3<C64>,
}

impl Preconditioned<'_> {
    /// `B x = gamma (x - G (Vs x))`
    fn apply(&self, x: &Array3<C64>) -> Array3<C64> {
        let mut t = Zip::from(&self.scattering).and(x).map_collect(|&vs, &x| vs * x);
        self.green(&mut t);
        Zip::from(&mut t)
            .and(x)
            .and(&self.gamma)
            .for_each(|t, &x, &g| *t = g * (x - *t));
        t
    }

    fn green(&self, t: &mut Array3<C64>) {
        self.op.fft().forward(t);
        Zip::from(&mut *t).and(self.op.green()).for_each(|x, &g| *x *= g);
        self.op.fft().inverse(t);
    }
}

fn dot(a: &Array3<C64>, b: &Array3<C64>) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Restarted GMRES on the Born-preconditioned system, starting from `u`.
/// Returns `(true relative residual, iterations)`.
pub(super) fn gmres(
    op: &HelmholtzOperator,
    rhs: &Array3<C64>,
    u: &mut Array3<C64>,
    history: &mut Vec<f64>,
) -> (f64, usize) {
    let settings = op.settings();
    let (scattering, gamma) = op.scattering();
    let pc = Preconditioned { op, scattering, gamma };

    // b = -gamma G f
    let mut b = rhs.clone();
    pc.green(&mut b);
    Zip::from(&mut b).and(&pc.gamma).for_each(|b, &g| *b = -g * *b);
    let b_norm = l2(&b);

    let m = settings.krylov_restart;
    let mut total = 0;
    let mut residual = op.residual(u, rhs);
    history.push(residual);
    while total < settings.max_iterations && residual > settings.tolerance {
        let bu = pc.apply(u);
        let r = &b - &bu;
        let beta = l2(&r);
        if beta == 0.0 {
            break;
        }
        let mut basis: Vec<Array3<C64>> = vec![r.mapv(|v| v / beta)];
        let mut h = vec![vec![C64::new(0.0, 0.0); m]; m + 1];
        let mut cs = vec![C64::new(0.0, 0.0); m];
        let mut sn = vec![C64::new(0.0, 0.0); m];
        let mut g = vec![C64::new(0.0, 0.0); m + 1];
        g[0] = C64::new(beta, 0.0);
        let mut k = 0;
        for j in 0..m {
            let mut w = pc.apply(&basis[j]);
            for (i, v) in basis.iter().enumerate() {
                let hij = dot(v, &w);
                h[i][j] = hij;
                Zip::from(&mut w).and(v).for_each(|w, &v| *w -= hij * v);
            }
            let hnext = l2(&w);
            h[j + 1][j] = C64::new(hnext, 0.0);
            for i in 0..j {
                let a = h[i][j];
                let bb = h[i + 1][j];
                h[i][j] = cs[i].conj() * a + sn[i].conj() * bb;
                h[i + 1][j] = -sn[i] * a + cs[i] * bb;
            }
            let a = h[j][j];
            let bb = h[j + 1][j];
            let den = (a.norm_sqr() + bb.norm_sqr()).sqrt();
            if den == 0.0 {
                cs[j] = C64::new(1.0, 0.0);
                sn[j] = C64::new(0.0, 0.0);
            } else {
                cs[j] = a / den;
                sn[j] = bb / den;
            }
            h[j][j] = cs[j].conj() * a + sn[j].conj() * bb;
            h[j + 1][j] = C64::new(0.0, 0.0);
            g[j + 1] = -sn[j] * g[j];
            g[j] = cs[j].conj() * g[j];
            total += 1;
            k = j + 1;
            let est = g[j + 1].norm() / b_norm.max(f64::MIN_POSITIVE);
            if est < 0.1 * settings.tolerance || hnext == 0.0 || total >= settings.max_iterations {
                break;
            }
            basis.push(w.mapv(|v| v / hnext));
        }
        // Back substitution on the k x k triangle.
        let mut y = vec![C64::new(0.0, 0.0); k];
        for i in (0..k).rev() {
            let mut s = g[i];
            for l in i + 1..k {
                s -= h[i][l] * y[l];
            }
            y[i] = s / h[i][i];
        }
        for (yi, v) in y.iter().zip(&basis) {
            Zip::from(&mut *u).and(v).for_each(|u, &v| *u += yi * v);
        }
        let prev = residual;
        residual = op.residual(u, rhs);
        history.push(residual);
        if !residual.is_finite() || (residual >= prev && k < m) {
            break;
        }
    }
    (residual, total)
}
