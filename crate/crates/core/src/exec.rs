//! Execution policy for data-parallel loops.
//!
//! With the `parallel` feature (default) the [`Exec::Parallel`] policy runs
//! FFT lanes, pointwise field updates and batch evaluations on the rayon pool.
//! Without the feature every policy runs sequentially. Reductions are always
//! sequential so results are bit-identical across policies and thread counts.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Exec {
    Sequential,
    Parallel,
}

impl Default for Exec {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Exec::Parallel
        } else {
            Exec::Sequential
        }
    }
}

impl Exec {
    /// True when work will actually be distributed over threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }

    /// Map `f` over `items`, preserving order.
    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            use rayon::prelude::*;
            return items.par_iter().map(f).collect();
        }
        items.iter().map(f).collect()
    }

    /// Apply `f` to consecutive chunks of `data` (chunk index, chunk).
    pub fn for_each_chunk<T, F>(self, data: &mut [T], chunk: usize, f: F)
    where
        T: Send,
        F: Fn(usize, &mut [T]) + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() && data.len() >= PARALLEL_MIN_LEN {
            use rayon::prelude::*;
            data.par_chunks_mut(chunk)
                .enumerate()
                .for_each(|(i, c)| f(i, c));
            return;
        }
        for (i, c) in data.chunks_mut(chunk).enumerate() {
            f(i, c);
        }
    }

    /// Elementwise update of `dst` with a read-only companion slice.
    pub fn zip_apply<A, B, F>(self, dst: &mut [A], src: &[B], f: F)
    where
        A: Send,
        B: Sync,
        F: Fn(&mut A, &B) + Sync + Send,
    {
        assert_eq!(dst.len(), src.len());
        #[cfg(feature = "parallel")]
        if self.is_parallel() && dst.len() >= PARALLEL_MIN_LEN {
            use rayon::prelude::*;
            dst.par_iter_mut().zip(src.par_iter()).for_each(|(a, b)| f(a, b));
            return;
        }
        dst.iter_mut().zip(src).for_each(|(a, b)| f(a, b));
    }
}

/// Below this many elements, pointwise work is not worth a thread hop.
pub const PARALLEL_MIN_LEN: usize = 1 << 15;
