//! Type-I discrete sine transforms on the interior nodes of a square grid.
//! Diagonalizes the 5-point Dirichlet Laplacian; used as the spectral
//! preconditioner of the stream-function block.

use crate::scalar::Scalar;
use num_complex::Complex;
use rayon::prelude::*;
use rustfft::{Fft, FftNum, FftPlanner};
use std::sync::Arc;

/// DST-I plan of length `n` (via a complex FFT of length `2(n+1)`).
/// Unnormalized: applying it twice multiplies by `(n+1)/2`.
pub struct Dst1<T> {
    n: usize,
    fft: Arc<dyn Fft<T>>,
}

impl<T: Scalar + FftNum> Dst1<T> {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(2 * (n + 1));
        Self { n, fft }
    }

    /// In-place DST-I of one row: `y_k = sum_j x_j sin(pi (j+1)(k+1)/(n+1))`.
    fn row(&self, x: &mut [T], scratch: &mut Vec<Complex<T>>) {
        let n = self.n;
        debug_assert_eq!(x.len(), n);
        let len = 2 * (n + 1);
        scratch.clear();
        scratch.resize(len, Complex::new(T::zero(), T::zero()));
        for j in 0..n {
            scratch[j + 1].re = x[j];
            scratch[len - 1 - j].re = -x[j];
        }
        self.fft.process(scratch);
        let half = T::of(0.5);
        for k in 0..n {
            x[k] = -scratch[k + 1].im * half;
        }
    }

    /// Separable 2D DST-I of an `n x n` interior block, row-major.
    pub fn transform_2d(&self, data: &mut [T]) {
        let n = self.n;
        assert_eq!(data.len(), n * n);
        data.par_chunks_mut(n).for_each_init(
            Vec::new,
            |scratch, row| {
                self.row(row, scratch);
            },
        );
        transpose_square(data, n);
        data.par_chunks_mut(n).for_each_init(
            Vec::new,
            |scratch, row| {
                self.row(row, scratch);
            },
        );
        transpose_square(data, n);
    }

    /// Eigenvalue of the 5-point Dirichlet Laplacian (spacing `h`, domain
    /// `(n+1) h` per side) for mode `p` in `1..=n`:
    /// `(2 - 2 cos(pi p/(n+1))) / h^2`.
    pub fn laplacian_eigenvalue(&self, p: usize, h: T) -> T {
        let arg = T::PI() * T::of(p as f64) / T::of((self.n + 1) as f64);
        (T::of(2.0) - T::of(2.0) * arg.cos()) / (h * h)
    }

    /// Normalization so that `transform_2d(transform_2d(x)) = x` after
    /// multiplying by this factor squared... i.e. one factor per 2D pass.
    pub fn norm_2d(&self) -> T {
        T::of(2.0) / T::of((self.n + 1) as f64)
    }
}

fn transpose_square<T: Copy>(data: &mut [T], n: usize) {
    for r in 0..n {
        for c in (r + 1)..n {
            data.swap(r * n + c, c * n + r);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dst_direct(x: &[f64]) -> Vec<f64> {
        let n = x.len();
        (0..n)
            .map(|k| {
                (0..n)
                    .map(|j| {
                        x[j] * (std::f64::consts::PI * ((j + 1) * (k + 1)) as f64
                            / (n + 1) as f64)
                            .sin()
                    })
                    .sum()
            })
            .collect()
    }

    #[test]
    fn matches_direct_sum() {
        let n = 13;
        let plan = Dst1::<f64>::new(n);
        let x: Vec<f64> = (0..n).map(|j| ((j * 7 + 3) % 11) as f64 - 5.0).collect();
        let mut y = x.clone();
        let mut scratch = Vec::new();
        plan.row(&mut y, &mut scratch);
        let want = dst_direct(&x);
        for (a, b) in y.iter().zip(want.iter()) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn involution_up_to_normalization() {
        let n = 9;
        let plan = Dst1::<f64>::new(n);
        let x: Vec<f64> = (0..n * n).map(|j| (j as f64 * 0.37).sin()).collect();
        let mut y = x.clone();
        plan.transform_2d(&mut y);
        plan.transform_2d(&mut y);
        let f = plan.norm_2d();
        for (a, b) in y.iter().zip(x.iter()) {
            assert!((a * f * f - b).abs() < 1e-11);
        }
    }

    #[test]
    fn diagonalizes_dirichlet_laplacian() {
        // apply the 5-point Laplacian to a sine mode and compare eigenvalue
        let n = 12;
        let h = 0.1_f64;
        let plan = Dst1::<f64>::new(n);
        let (p, q) = (3usize, 5usize);
        let mode = |i: usize, j: usize| {
            (std::f64::consts::PI * ((i + 1) * p) as f64 / (n + 1) as f64).sin()
                * (std::f64::consts::PI * ((j + 1) * q) as f64 / (n + 1) as f64).sin()
        };
        let get = |i: isize, j: isize| -> f64 {
            if i < 0 || j < 0 || i >= n as isize || j >= n as isize {
                0.0
            } else {
                mode(i as usize, j as usize)
            }
        };
        let lam = plan.laplacian_eigenvalue(p, h) + plan.laplacian_eigenvalue(q, h);
        for i in 0..n as isize {
            for j in 0..n as isize {
                let lap = (4.0 * get(i, j) - get(i + 1, j) - get(i - 1, j) - get(i, j + 1)
                    - get(i, j - 1))
                    / (h * h);
                assert!((lap - lam * get(i, j)).abs() < 1e-10);
            }
        }
    }
}
