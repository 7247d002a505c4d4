//! The discrete Helmholtz operator, defined once for the solver, the gradient
//! and the dense oracle.
//!
//! The solved quantity is the density-scaled field `u = P / sqrt(rho)`, which
//! satisfies
//!
//! ```text
//! A u = L u + V u = f
//! V   = k^2 + W + i a
//! k   = omega / c + i alpha
//! W   = -(D g) / g,   g = rho^(-1/2)
//! ```
//!
//! * `L` is the spectral Laplacian on the periodic grid: the DFT diagonalizes
//!   it with eigenvalue `-(kx^2 + ky^2 + kz^2)` per bin. It is real symmetric.
//! * `D` is the second-order central difference Laplacian (periodic wrap),
//!   used only to form the density potential `W` from the local stencil.
//! * `a` is the absorbing-layer potential
//!   `strength * (omega / c)^2 * min(1, sum_axes s^order)`, with `s` the
//!   fractional depth into the layer (1 on the outermost cell).
//! * `f` is nonzero on the source plane only:
//!   `f = (2 i k_r / dx) * w / sqrt(rho)` with `k_r = omega / c`, so a full
//!   plane of weight `w` radiates plane waves of pressure amplitude `|w|`.
//!
//! Since `L` is symmetric and `V` diagonal, `A` is complex symmetric
//! (`A^T = A`), hence `A^H = conj(A)`.

use ndarray::{Array2, Array3, Zip};

use crate::fft::wavenumbers;
use crate::grid::{SourcePlane, C64};

/// Eigenvalues of the spectral Laplacian for every DFT bin.
pub fn laplacian_eigenvalues(dims3: [usize; 3], dx: f64) -> Array3<f64> {
    let k: Vec<Vec<f64>> = dims3.iter().map(|&n| wavenumbers(n, dx)).collect();
    Array3::from_shape_fn(dims3, |(i, j, l)| {
        -(k[0][i] * k[0][i] + k[1][j] * k[1][j] + k[2][l] * k[2][l])
    })
}

/// Dense `n x n` matrix of the 1D spectral Laplacian, row-major, assembled
/// from the eigenvalues by an explicit inverse DFT sum (no FFT).
pub fn laplacian_matrix_1d(n: usize, dx: f64) -> Vec<f64> {
    let k = wavenumbers(n, dx);
    let mut kernel = vec![0.0; n];
    for (d, out) in kernel.iter_mut().enumerate() {
        *out = k
            .iter()
            .enumerate()
            .map(|(m, km)| {
                -km * km * (2.0 * std::f64::consts::PI * (m * d) as f64 / n as f64).cos()
            })
            .sum::<f64>()
            / n as f64;
    }
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            m[i * n + j] = kernel[(i + n - j) % n];
        }
    }
    m
}

/// Complex wavenumber `omega / c + i alpha`.
pub fn complex_wavenumber(omega: f64, c: f64, alpha: f64) -> C64 {
    C64::new(omega / c, alpha)
}

fn neighbour_sum(g: &Array3<f64>, i: usize, j: usize, l: usize) -> (f64, usize) {
    let d = g.dim();
    let dims = [d.0, d.1, d.2];
    let idx = [i, j, l];
    let mut sum = 0.0;
    let mut count = 0;
    for axis in 0..3 {
        let n = dims[axis];
        if n < 2 {
            continue;
        }
        let mut p = idx;
        let mut m = idx;
        p[axis] = (idx[axis] + 1) % n;
        m[axis] = (idx[axis] + n - 1) % n;
        sum += g[p] + g[m];
        count += 2;
    }
    (sum, count)
}

/// Density potential `W = -(D g) / g` with `g = rho^(-1/2)`.
pub fn density_potential(rho: &Array3<f64>, dx: f64) -> Array3<f64> {
    let g = rho.mapv(|r| 1.0 / r.sqrt());
    let h2 = dx * dx;
    Array3::from_shape_fn(g.dim(), |(i, j, l)| {
        let (s, count) = neighbour_sum(&g, i, j, l);
        let gx = g[[i, j, l]];
        -(s - count as f64 * gx) / (h2 * gx)
    })
}

/// Pull back a sensitivity `dL/dW` to `dL/drho` through [`density_potential`].
pub fn density_potential_vjp(rho: &Array3<f64>, dx: f64, w_bar: &Array3<f64>) -> Array3<f64> {
    let g = rho.mapv(|r| 1.0 / r.sqrt());
    let h2 = dx * dx;
    // h_x = w_bar_x / (dx^2 g_x): weight each cell passes to its neighbours.
    let h = Zip::from(w_bar).and(&g).map_collect(|&w, &gx| w / (h2 * gx));
    Array3::from_shape_fn(g.dim(), |(i, j, l)| {
        let gy = g[[i, j, l]];
        let (s, _) = neighbour_sum(&g, i, j, l);
        let (hs, _) = neighbour_sum(&h, i, j, l);
        let dl_dg = w_bar[[i, j, l]] * s / (h2 * gy * gy) - hs;
        let r = rho[[i, j, l]];
        dl_dg * (-0.5 * r.powf(-1.5))
    })
}

/// Directional derivative of [`density_potential`] along `drho`.
pub fn density_potential_jvp(rho: &Array3<f64>, dx: f64, drho: &Array3<f64>) -> Array3<f64> {
    let g = rho.mapv(|r| 1.0 / r.sqrt());
    let dg = Zip::from(rho).and(drho).map_collect(|&r, &d| -0.5 * r.powf(-1.5) * d);
    let h2 = dx * dx;
    Array3::from_shape_fn(g.dim(), |(i, j, l)| {
        let gx = g[[i, j, l]];
        let (s, _) = neighbour_sum(&g, i, j, l);
        let (ds, _) = neighbour_sum(&dg, i, j, l);
        -ds / (h2 * gx) + s * dg[[i, j, l]] / (h2 * gx * gx)
    })
}

/// Absorbing-layer shape in `[0, 1]`: sum over absorbing axes of the
/// fractional layer depth raised to `order`, clamped at one so corners do
/// not widen the Born shift.
pub fn absorber_shape(dims3: [usize; 3], width: usize, absorbing: [bool; 3], order: f64) -> Array3<f64> {
    let depth = |i: usize, n: usize| -> f64 {
        if width == 0 {
            0.0
        } else if i < width {
            (width - i) as f64 / width as f64
        } else if i >= n - width {
            (i + width + 1 - n) as f64 / width as f64
        } else {
            0.0
        }
    };
    Array3::from_shape_fn(dims3, |(i, j, l)| {
        let idx = [i, j, l];
        (0..3)
            .filter(|&a| absorbing[a] && dims3[a] > 1)
            .map(|a| depth(idx[a], dims3[a]).powf(order))
            .sum::<f64>()
            .min(1.0)
    })
}

/// Total potential `V = k^2 + W + i a`.
pub fn potential(
    c: &Array3<f64>,
    rho: &Array3<f64>,
    alpha: &Array3<f64>,
    omega: f64,
    dx: f64,
    absorber: &Array3<f64>,
    strength: f64,
) -> Array3<C64> {
    let w = density_potential(rho, dx);
    let mut v = Array3::zeros(c.dim());
    Zip::from(&mut v)
        .and(c)
        .and(alpha)
        .and(&w)
        .and(absorber)
        .for_each(|v, &c, &alpha, &w, &a| {
            let k = complex_wavenumber(omega, c, alpha);
            let kr = omega / c;
            *v = k * k + w + C64::new(0.0, strength * kr * kr * a);
        });
    v
}

/// Pointwise `(dV/dc, dV/dalpha)` of [`potential`].
pub fn potential_partials(
    c: &Array3<f64>,
    alpha: &Array3<f64>,
    omega: f64,
    absorber: &Array3<f64>,
    strength: f64,
) -> (Array3<C64>, Array3<C64>) {
    let dc = Zip::from(c).and(alpha).and(absorber).map_collect(|&c, &alpha, &a| {
        let k = complex_wavenumber(omega, c, alpha);
        2.0 * k * (-omega / (c * c)) + C64::new(0.0, -2.0 * strength * omega * omega * a / (c * c * c))
    });
    let da = Zip::from(c)
        .and(alpha)
        .map_collect(|&c, &alpha| 2.0 * C64::new(0.0, 1.0) * complex_wavenumber(omega, c, alpha));
    (dc, da)
}

/// Weight applied to each source cell: `2 i (omega / c) / (dx sqrt(rho))`.
pub fn source_scale(omega: f64, c: f64, rho: f64, dx: f64) -> C64 {
    C64::new(0.0, 2.0 * omega / c / (dx * rho.sqrt()))
}

/// Right-hand side `f` for a source plane.
pub fn source_term(
    source: &SourcePlane,
    axis3: usize,
    c: &Array3<f64>,
    rho: &Array3<f64>,
    dx: f64,
) -> Array3<C64> {
    let mut f = Array3::zeros(c.dim());
    let omega = source.omega();
    let weights: &Array2<C64> = &source.weights;
    let mut plane = f.index_axis_mut(ndarray::Axis(axis3), source.index);
    let cp = c.index_axis(ndarray::Axis(axis3), source.index);
    let rp = rho.index_axis(ndarray::Axis(axis3), source.index);
    Zip::from(&mut plane)
        .and(weights)
        .and(&cp)
        .and(&rp)
        .for_each(|f, &w, &c, &r| *f = w * source_scale(omega, c, r, dx));
    f
}
