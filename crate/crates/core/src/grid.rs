//! Uniform periodic grid geometry and the multi-dimensional FFT used by the
//! spectral fields.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

/// `H^dim` nodes at spacing `length / H`, stored x-fastest.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub dim: usize,
    pub n: usize,
    pub length: f64,
}

impl Grid {
    pub fn new(dim: usize, n: usize, length: f64) -> Self {
        assert!(dim == 2 || dim == 3, "grid dimension must be 2 or 3");
        assert!(n >= 2 && n.is_multiple_of(2), "grid size must be even");
        Self { dim, n, length }
    }

    #[inline]
    pub fn cell(&self) -> f64 {
        self.length / self.n as f64
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Signed frequency of DFT slot `k`: `{0, .., H/2-1, -H/2, .., -1}`.
    #[inline]
    pub fn freq(&self, k: usize) -> i64 {
        if k < self.n / 2 {
            k as i64
        } else {
            k as i64 - self.n as i64
        }
    }

    /// Splits a flat index into per-axis indices.
    #[inline]
    pub fn unflatten(&self, mut idx: usize, out: &mut [usize]) {
        for o in out.iter_mut().take(self.dim) {
            *o = idx % self.n;
            idx /= self.n;
        }
    }

    #[inline]
    pub fn flatten(&self, ix: &[usize]) -> usize {
        let mut idx = 0;
        for &i in ix[..self.dim].iter().rev() {
            idx = idx * self.n + i;
        }
        idx
    }

    /// Squared frequency magnitude `|q|^2` at flat spectral index `idx`.
    pub fn freq_norm2(&self, idx: usize) -> f64 {
        let mut ix = [0usize; 3];
        self.unflatten(idx, &mut ix);
        ix[..self.dim].iter().map(|&k| (self.freq(k) as f64).powi(2)).sum()
    }

    /// Origin-relative coordinates of node `idx`.
    pub fn node(&self, idx: usize) -> [f64; 3] {
        let mut ix = [0usize; 3];
        self.unflatten(idx, &mut ix);
        let h = self.cell();
        let mut x = [0.0; 3];
        for j in 0..self.dim {
            x[j] = ix[j] as f64 * h;
        }
        x
    }
}

/// Forward and inverse complex FFT plans for one grid size.
pub struct FftPlan {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for FftPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FftPlan").field("n", &self.n).finish()
    }
}

impl FftPlan {
    pub fn new(n: usize) -> Arc<Self> {
        let mut planner = FftPlanner::new();
        Arc::new(Self { n, forward: planner.plan_fft_forward(n), inverse: planner.plan_fft_inverse(n) })
    }

    /// Unnormalized in-place transform over every axis of an `n^dim` array.
    pub fn transform(&self, data: &mut [Complex64], dim: usize, inverse: bool) {
        let n = self.n;
        let fft = if inverse { &self.inverse } else { &self.forward };
        let lines_fft = |buf: &mut [Complex64]| {
            buf.par_chunks_mut(n * 64.min(buf.len() / n)).for_each(|chunk| {
                let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
                fft.process_with_scratch(chunk, &mut scratch);
            });
        };
        // axis 0 is contiguous
        lines_fft(data);
        let total = data.len();
        let mut buf = vec![Complex64::default(); total];
        for axis in 1..dim {
            let inner = n.pow(axis as u32);
            let block = inner * n;
            // gather lines along `axis` into contiguous rows
            for (ob, chunk) in data.chunks(block).enumerate() {
                for i in 0..n {
                    for r in 0..inner {
                        buf[(ob * inner + r) * n + i] = chunk[i * inner + r];
                    }
                }
            }
            lines_fft(&mut buf);
            for (ob, chunk) in data.chunks_mut(block).enumerate() {
                for i in 0..n {
                    for r in 0..inner {
                        chunk[i * inner + r] = buf[(ob * inner + r) * n + i];
                    }
                }
            }
        }
    }
}
