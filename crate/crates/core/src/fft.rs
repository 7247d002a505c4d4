//! Multi-dimensional FFTs over `ndarray` storage, built on `rustfft`.
//!
//! Axes of length one are skipped, so the same plan serves 2D grids held in
//! `[1, a, b]` storage. The inverse transform is normalized by `1/N`.

use std::sync::Arc;

use ndarray::{Array2, Array3, ArrayViewMut3, Axis, Zip};
use rustfft::{Fft, FftPlanner};

use crate::exec::Exec;
use crate::grid::C64;

#[derive(Clone)]
pub struct FftPlan {
    dims: [usize; 3],
    forward: [Option<Arc<dyn Fft<f64>>>; 3],
    inverse: [Option<Arc<dyn Fft<f64>>>; 3],
    exec: Exec,
}

impl std::fmt::Debug for FftPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FftPlan").field("dims", &self.dims).finish()
    }
}

impl FftPlan {
    pub fn new(dims: [usize; 3], exec: Exec) -> Self {
        let mut planner = FftPlanner::new();
        let mut forward: [Option<Arc<dyn Fft<f64>>>; 3] = [None, None, None];
        let mut inverse: [Option<Arc<dyn Fft<f64>>>; 3] = [None, None, None];
        for (k, &n) in dims.iter().enumerate() {
            if n > 1 {
                forward[k] = Some(planner.plan_fft_forward(n));
                inverse[k] = Some(planner.plan_fft_inverse(n));
            }
        }
        Self {
            dims,
            forward,
            inverse,
            exec,
        }
    }

    /// Plan for a plane of shape `[n0, n1]`.
    pub fn for_plane(shape: [usize; 2], exec: Exec) -> Self {
        Self::new([1, shape[0], shape[1]], exec)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn forward(&self, a: &mut Array3<C64>) {
        self.run(a.view_mut(), &self.forward);
    }

    pub fn inverse(&self, a: &mut Array3<C64>) {
        self.run(a.view_mut(), &self.inverse);
        let scale = 1.0 / self.len() as f64;
        a.mapv_inplace(|v| v * scale);
    }

    pub fn forward2(&self, a: &mut Array2<C64>) {
        self.run(a.view_mut().insert_axis(Axis(0)), &self.forward);
    }

    pub fn inverse2(&self, a: &mut Array2<C64>) {
        self.run(a.view_mut().insert_axis(Axis(0)), &self.inverse);
        let scale = 1.0 / self.len() as f64;
        a.mapv_inplace(|v| v * scale);
    }

    fn run(&self, mut a: ArrayViewMut3<C64>, plans: &[Option<Arc<dyn Fft<f64>>>; 3]) {
        assert_eq!(a.shape(), self.dims, "array does not match FFT plan");
        for (axis, plan) in plans.iter().enumerate() {
            if let Some(plan) = plan {
                transform_axis(&mut a, axis, plan.as_ref(), self.exec);
            }
        }
    }
}

fn transform_axis(a: &mut ArrayViewMut3<C64>, axis: usize, plan: &dyn Fft<f64>, exec: Exec) {
    let n = a.len_of(Axis(axis));
    if axis == 2 {
        if let Some(data) = a.as_slice_mut() {
            if exec.is_parallel() && data.len() >= crate::exec::PARALLEL_MIN_LEN {
                // Batches of rows keep per-task scratch allocation amortized.
                let rows_per_task = (crate::exec::PARALLEL_MIN_LEN / 4 / n).max(1);
                exec.for_each_chunk(data, rows_per_task * n, |_, chunk| plan.process(chunk));
            } else {
                plan.process(data);
            }
            return;
        }
    }
    #[cfg(feature = "parallel")]
    let total = a.len();
    let lanes = Zip::from(a.lanes_mut(Axis(axis)));
    #[cfg(feature = "parallel")]
    if exec.is_parallel() && total >= crate::exec::PARALLEL_MIN_LEN {
        lanes.par_for_each(|mut lane| {
            let mut buf: Vec<C64> = lane.iter().cloned().collect();
            plan.process(&mut buf);
            lane.iter_mut().zip(buf).for_each(|(d, s)| *d = s);
        });
        return;
    }
    let mut buf = vec![C64::new(0.0, 0.0); n];
    let mut scratch = vec![C64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
    lanes.for_each(|mut lane| {
        buf.iter_mut().zip(lane.iter()).for_each(|(d, s)| *d = *s);
        plan.process_with_scratch(&mut buf, &mut scratch);
        lane.iter_mut().zip(&buf).for_each(|(d, s)| *d = *s);
    });
}

/// Angular wavenumbers of the DFT bins for `n` samples at spacing `dx`,
/// in standard FFT order (non-negative first, Nyquist counted positive).
pub fn wavenumbers(n: usize, dx: f64) -> Vec<f64> {
    let scale = 2.0 * std::f64::consts::PI / (n as f64 * dx);
    (0..n)
        .map(|m| {
            let m = if m <= n / 2 { m as f64 } else { m as f64 - n as f64 };
            m * scale
        })
        .collect()
}
