//! Multidimensional complex FFT on row-major buffers.
//!
//! Each axis is transformed as contiguous rows; between axes the buffer is
//! transposed so the next axis becomes the fastest one. After `n` passes the
//! layout is back to the original order.

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

pub type C64 = Complex<f64>;

pub struct FftNd {
    dims: Vec<usize>,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
}

impl FftNd {
    pub fn new(dims: &[usize]) -> Self {
        let mut planner = FftPlanner::new();
        FftNd {
            dims: dims.to_vec(),
            forward: dims.iter().map(|&d| planner.plan_fft_forward(d)).collect(),
            inverse: dims.iter().map(|&d| planner.plan_fft_inverse(d)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn forward(&self, data: &mut Vec<C64>) {
        self.run(data, &self.forward);
    }

    /// Unnormalized inverse transform.
    pub fn inverse(&self, data: &mut Vec<C64>) {
        self.run(data, &self.inverse);
    }

    fn run(&self, data: &mut Vec<C64>, plans: &[Arc<dyn Fft<f64>>]) {
        let nd = self.dims.len();
        let total = data.len();
        debug_assert_eq!(total, self.len());
        let mut buf = vec![C64::new(0.0, 0.0); total];
        // Axis currently stored last; it starts as the true last axis.
        let mut axis = nd - 1;
        for _ in 0..nd {
            let len = self.dims[axis];
            let plan = &plans[axis];
            let scratch_len = plan.get_inplace_scratch_len();
            data.par_chunks_mut(len).for_each_init(
                || vec![C64::new(0.0, 0.0); scratch_len],
                |scratch, row| plan.process_with_scratch(row, scratch),
            );
            if nd > 1 {
                transpose(data, &mut buf, total / len, len);
                std::mem::swap(data, &mut buf);
            }
            axis = (axis + nd - 1) % nd;
        }
    }
}

/// `out[j][i] = inp[i][j]` for an `rows x cols` matrix.
fn transpose(inp: &[C64], out: &mut [C64], rows: usize, cols: usize) {
    out.par_chunks_mut(rows).enumerate().for_each(|(j, col)| {
        for (i, o) in col.iter_mut().enumerate() {
            *o = inp[i * cols + j];
        }
    });
}

/// Smallest length `≥ m` whose prime factors are 2, 3 and 5.
pub fn fast_len(m: usize) -> usize {
    let mut k = m.max(1);
    loop {
        let mut r = k;
        for p in [2, 3, 5] {
            while r.is_multiple_of(p) {
                r /= p;
            }
        }
        if r == 1 {
            return k;
        }
        k += 1;
    }
}
