//! The Abrikosov energy `F_R(v) = int (1/2)|v|^4 - |v|^2` minimized over the
//! lowest Landau level, the cell constant `c(R)`, and the extrapolation of
//! `c(R)/R^2` toward its large-cell limit.

use crate::error::{GlError, Result};
use crate::field::{Bc, ComplexField, Reduction};
use crate::optim::{ncg_minimize, NcgOptions};
use crate::scalar::Scalar;
use crate::spectral::{CellSpec, SpectralResult};
use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

#[derive(Clone, Debug)]
pub struct AbrikosovResult<T> {
    pub cell: CellSpec<T>,
    /// Minimizing coefficients in the eigenfield basis. Reported for
    /// reproducibility only; the gauge orbit makes them non-unique.
    pub coefficients: Vec<Complex<T>>,
    /// `c(R) = min F_R`, always <= 0 (the zero field is admissible).
    pub c_value: T,
    /// `R^2 int |v|^4 / (int |v|^2)^2` at the minimizer.
    pub beta_ratio: Option<T>,
    pub per_restart_energies: Vec<T>,
    pub grad_norm: T,
    pub iterations: usize,
    pub seed: u64,
}

impl<T: Scalar> AbrikosovResult<T> {
    pub fn c_over_r2(&self) -> T {
        let r = self.cell.side();
        self.c_value / (r * r)
    }

    /// Best-to-median restart dispersion, `|median - best| / |best|`.
    pub fn restart_dispersion(&self) -> T {
        if self.per_restart_energies.len() < 2 || self.c_value == T::zero() {
            return T::zero();
        }
        let mut sorted = self.per_restart_energies.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = sorted[sorted.len() / 2];
        (median - sorted[0]).abs() / sorted[0].abs()
    }
}

/// Basis access plus fused quadrature kernels in coefficient space.
struct LllBasis<'a, T> {
    fields: Vec<&'a [Complex<T>]>,
    h2: T,
    rows: usize,
}

impl<'a, T: Scalar> LllBasis<'a, T> {
    fn new(spec: &'a SpectralResult<T>) -> Self {
        let n = spec.lll_count;
        let fields: Vec<&[Complex<T>]> = (0..n).map(|k| spec.eigenfields[k].values()).collect();
        Self {
            fields,
            h2: spec.grid.cell_area(),
            rows: spec.grid.points_per_side(),
        }
    }

    #[inline]
    fn compose_at(&self, c: &[Complex<T>], k: usize) -> Complex<T> {
        let mut v = Complex::new(T::zero(), T::zero());
        for (f, ck) in self.fields.iter().zip(c.iter()) {
            v = v + *ck * f[k];
        }
        v
    }

    /// `(int |v|^2, int |v|^4)` for `v = sum c_k e_k`.
    fn moments(&self, c: &[Complex<T>]) -> (T, T) {
        let m = self.rows;
        let pair: Vec<(T, T)> = (0..m)
            .into_par_iter()
            .map(|j| {
                let mut s2 = T::zero();
                let mut s4 = T::zero();
                for i in 0..m {
                    let q = self.compose_at(c, j * m + i).norm_sqr();
                    s2 += q;
                    s4 += q * q;
                }
                (s2, s4)
            })
            .collect();
        let (a, b) = pair
            .into_iter()
            .fold((T::zero(), T::zero()), |(a, b), (x, y)| (a + x, b + y));
        (a * self.h2, b * self.h2)
    }

    fn energy(&self, c: &[Complex<T>]) -> T {
        let (q2, q4) = self.moments(c);
        q4 * T::of(0.5) - q2
    }

    /// Gradient `2 dF/d(conj c_k)` packed as `(re, im)` pairs.
    fn gradient(&self, c: &[Complex<T>], g: &mut [T]) {
        let m = self.rows;
        let n = self.fields.len();
        let partial: Vec<Vec<Complex<T>>> = (0..m)
            .into_par_iter()
            .map(|j| {
                let mut acc = vec![Complex::new(T::zero(), T::zero()); n];
                for i in 0..m {
                    let k = j * m + i;
                    let v = self.compose_at(c, k);
                    let w = v * (v.norm_sqr() - T::one());
                    for (a, f) in acc.iter_mut().zip(self.fields.iter()) {
                        *a = *a + f[k].conj() * w;
                    }
                }
                acc
            })
            .collect();
        let mut total = vec![Complex::new(T::zero(), T::zero()); n];
        for row in partial {
            for (t, v) in total.iter_mut().zip(row) {
                *t = *t + v;
            }
        }
        let two_h2 = self.h2 + self.h2;
        for (k, t) in total.iter().enumerate() {
            g[2 * k] = t.re * two_h2;
            g[2 * k + 1] = t.im * two_h2;
        }
    }
}

fn flat_to_coeffs<T: Scalar>(x: &[T]) -> Vec<Complex<T>> {
    x.chunks_exact(2).map(|p| Complex::new(p[0], p[1])).collect()
}

/// Rescale coefficients to the optimal amplitude for fixed direction:
/// `min_t F(t c)` is attained at `t^2 = q2 / q4`.
fn optimal_rescale<T: Scalar>(basis: &LllBasis<'_, T>, c: &mut [Complex<T>]) {
    let (q2, q4) = basis.moments(c);
    if q2 > T::zero() && q4 > T::zero() {
        let t = (q2 / q4).sqrt();
        for ck in c.iter_mut() {
            *ck = *ck * t;
        }
    }
}

/// Minimize the Abrikosov energy over the LLL span by conjugate gradient in
/// coefficient space, with seeded restarts; returns the best run.
pub fn minimize_abrikosov<T: Scalar>(
    spec: &SpectralResult<T>,
    restarts: usize,
    seed: u64,
) -> Result<AbrikosovResult<T>> {
    let n = spec.cell.n_flux() as usize;
    if spec.lll_count != n || n == 0 {
        return Err(GlError::InvalidParameter(format!(
            "LLL cluster has {} modes, expected the flux number {n}",
            spec.lll_count
        )));
    }
    let basis = LllBasis::new(spec);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(T, Vec<Complex<T>>, T, usize)> = None;
    let mut energies = Vec::with_capacity(restarts.max(1));
    let r = spec.cell.side();
    let amp0 = r / T::of((1.2 * n as f64).sqrt());

    let opts = NcgOptions {
        grad_tol_factor: T::of(1e-12),
        max_iters: 4000,
        ..NcgOptions::default()
    };
    for _ in 0..restarts.max(1) {
        let mut c0: Vec<Complex<T>> = (0..n)
            .map(|_| {
                Complex::new(
                    T::of(rng.gen_range(-1.0..1.0)),
                    T::of(rng.gen_range(-1.0..1.0)),
                ) * amp0
            })
            .collect();
        optimal_rescale(&basis, &mut c0);
        let x0: Vec<T> = c0.iter().flat_map(|z| [z.re, z.im]).collect();
        let out = ncg_minimize(
            x0,
            |x| basis.energy(&flat_to_coeffs(x)),
            |x, g| basis.gradient(&flat_to_coeffs(x), g),
            &opts,
        );
        energies.push(out.energy);
        let better = best.as_ref().map(|(e, ..)| out.energy < *e).unwrap_or(true);
        if better {
            best = Some((
                out.energy,
                flat_to_coeffs(&out.x),
                out.grad_norm,
                out.iterations,
            ));
        }
    }
    let (energy, coefficients, grad_norm, iterations) = best.unwrap();
    if energy > T::zero() {
        // v = 0 is admissible, so never report a positive minimum
        return Ok(AbrikosovResult {
            cell: spec.cell,
            coefficients: vec![Complex::new(T::zero(), T::zero()); n],
            c_value: T::zero(),
            beta_ratio: None,
            per_restart_energies: energies,
            grad_norm,
            iterations,
            seed,
        });
    }
    let (q2, q4) = basis.moments(&coefficients);
    let beta = if q2 > T::zero() {
        Some(r * r * q4 / (q2 * q2))
    } else {
        None
    };
    Ok(AbrikosovResult {
        cell: spec.cell,
        coefficients,
        c_value: energy,
        beta_ratio: beta,
        per_restart_energies: energies,
        grad_norm,
        iterations,
        seed,
    })
}

/// Closed-form single-mode minimum: `min_t F_R(t e_k) = -(int|e|^2)^2 / (2 int|e|^4)`,
/// with the mode's shape ratio `beta = R^2 int|e|^4 / (int|e|^2)^2`.
pub fn single_mode_minimum<T: Scalar>(spec: &SpectralResult<T>, k: usize) -> (T, T) {
    let e = &spec.eigenfields[k];
    let d2 = e.abs2();
    let q2 = crate::field::integrate(&d2, &spec.grid, Reduction::Ordered);
    let d4: Vec<T> = d2.iter().map(|&q| q * q).collect();
    let q4 = crate::field::integrate(&d4, &spec.grid, Reduction::Ordered);
    let r = spec.cell.side();
    (-q2 * q2 / (q4 + q4), r * r * q4 / (q2 * q2))
}

/// Compose the minimizer field from an [`AbrikosovResult`].
pub fn compose_minimizer<T: Scalar>(
    spec: &SpectralResult<T>,
    result: &AbrikosovResult<T>,
) -> ComplexField<T> {
    let mut v = ComplexField::zeros(spec.grid, Bc::MagneticPeriodic(spec.cell.n_flux()));
    for (k, c) in result.coefficients.iter().enumerate() {
        v.axpy(*c, &spec.eigenfields[k]);
    }
    v
}

/// Derivative-free oracle: scan a coarse coefficient lattice (one anchor
/// coefficient pinned per sweep), then refine locally by shrinking steps.
/// Every candidate is scored by the scalar-reduction closed form
/// `-(int|v|^2)^2 / (2 int|v|^4)`, so no gradient information enters.
pub fn brute_force_search<T: Scalar>(spec: &SpectralResult<T>) -> Result<AbrikosovResult<T>> {
    let n = spec.cell.n_flux() as usize;
    if spec.lll_count != n || n == 0 || n > 6 {
        return Err(GlError::InvalidParameter(format!(
            "brute-force oracle supports 1 <= N <= 6 with a resolved cluster, got {n}"
        )));
    }
    let basis = LllBasis::new(spec);
    let score = |c: &[Complex<T>]| -> T {
        let (q2, q4) = basis.moments(c);
        if q4 <= T::zero() || q2 <= T::zero() {
            return T::zero();
        }
        -q2 * q2 / (q4 + q4)
    };

    let lattice: Vec<T> = [-1.0, -0.5, 0.0, 0.5, 1.0].iter().map(|&v| T::of(v)).collect();
    let per_coeff: Vec<Complex<T>> = lattice
        .iter()
        .flat_map(|&re| lattice.iter().map(move |&im| Complex::new(re, im)))
        .collect();
    let combos = per_coeff.len().pow((n - 1) as u32);

    let mut best_c: Vec<Complex<T>> = vec![Complex::new(T::one(), T::zero()); n];
    let mut best_e = score(&best_c);
    for anchor in 0..n {
        let (e, c) = (0..combos)
            .into_par_iter()
            .map(|mut code| {
                let mut c = vec![Complex::new(T::zero(), T::zero()); n];
                c[anchor] = Complex::new(T::one(), T::zero());
                for k in 0..n {
                    if k == anchor {
                        continue;
                    }
                    c[k] = per_coeff[code % per_coeff.len()];
                    code /= per_coeff.len();
                }
                (score(&c), c)
            })
            .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap())
            .unwrap();
        if e < best_e {
            best_e = e;
            best_c = c;
        }
    }

    // local refinement: coordinate steps with shrinking radius
    let mut step = T::of(0.25);
    for _stage in 0..4 {
        let mut improved = true;
        while improved {
            improved = false;
            for k in 0..n {
                for (dr, di) in [
                    (T::one(), T::zero()),
                    (-T::one(), T::zero()),
                    (T::zero(), T::one()),
                    (T::zero(), -T::one()),
                    (T::one(), T::one()),
                    (T::one(), -T::one()),
                    (-T::one(), T::one()),
                    (-T::one(), -T::one()),
                ] {
                    let mut c = best_c.clone();
                    c[k] = c[k] + Complex::new(dr * step, di * step);
                    let e = score(&c);
                    if e < best_e {
                        best_e = e;
                        best_c = c;
                        improved = true;
                    }
                }
            }
        }
        step = step * T::of(0.5);
    }

    optimal_rescale(&basis, &mut best_c);
    let (q2, q4) = basis.moments(&best_c);
    let beta = if q2 > T::zero() {
        Some(spec.cell.side() * spec.cell.side() * q4 / (q2 * q2))
    } else {
        None
    };
    Ok(AbrikosovResult {
        cell: spec.cell,
        coefficients: best_c,
        c_value: best_e.min(T::zero()),
        beta_ratio: beta,
        per_restart_energies: vec![best_e],
        grad_norm: T::nan(),
        iterations: 0,
        seed: 0,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct EabEstimate {
    /// `(N, c(R)/R^2)` ordered by N.
    pub sequence: Vec<(u32, f64)>,
    pub extrapolated: f64,
    /// Absolute difference of the last two sequence values.
    pub uncertainty: f64,
}

/// Extrapolate `c(R)/R^2` to the large-cell limit: least-squares fit of
/// `y = E + a / N` over the sequence, reported with a last-two-difference
/// uncertainty.
pub fn estimate_eab<T: Scalar>(results: &[AbrikosovResult<T>]) -> Result<EabEstimate> {
    let mut seq: Vec<(u32, f64)> = results
        .iter()
        .map(|r| (r.cell.n_flux(), r.c_over_r2().f64()))
        .collect();
    seq.sort_by_key(|&(n, _)| n);
    seq.dedup_by_key(|&mut (n, _)| n);
    if seq.len() < 3 {
        return Err(GlError::InsufficientData(format!(
            "need >= 3 distinct flux values, got {}",
            seq.len()
        )));
    }
    let xs: Vec<f64> = seq.iter().map(|&(n, _)| 1.0 / n as f64).collect();
    let ys: Vec<f64> = seq.iter().map(|&(_, y)| y).collect();
    let m = xs.len() as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
    let denom = m * sxx - sx * sx;
    let extrapolated = if denom.abs() < 1e-14 {
        sy / m
    } else {
        let slope = (m * sxy - sx * sy) / denom;
        (sy - slope * sx) / m
    };
    let k = seq.len();
    let uncertainty = (seq[k - 1].1 - seq[k - 2].1).abs();
    Ok(EabEstimate {
        sequence: seq,
        extrapolated,
        uncertainty,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::solve_cell_spectrum;

    fn spectrum(n: u32, pps: usize) -> SpectralResult<f64> {
        let cell = CellSpec::new(n, 0.95).unwrap();
        let grid = cell.grid(pps).unwrap();
        solve_cell_spectrum(cell, grid, n as usize + 2, 1e-9, 0).unwrap()
    }

    #[test]
    fn n1_matches_closed_form() {
        let spec = spectrum(1, 24);
        let res = minimize_abrikosov(&spec, 3, 0).unwrap();
        let (c_closed, beta_closed) = single_mode_minimum(&spec, 0);
        assert!(
            (res.c_value - c_closed).abs() <= 1e-8 * c_closed.abs(),
            "optimizer {} vs closed form {}",
            res.c_value,
            c_closed
        );
        let beta = res.beta_ratio.unwrap();
        assert!((beta - beta_closed).abs() < 1e-6 * beta_closed);
        // square-lattice shape ratio
        assert!((beta - 1.18).abs() < 0.02, "beta = {beta}");
        assert!(res.c_over_r2() >= -0.5 && res.c_over_r2() < 0.0);
    }

    #[test]
    fn zero_vector_is_admissible_competitor() {
        let spec = spectrum(1, 16);
        let basis = LllBasis::new(&spec);
        let zero = vec![Complex::new(0.0, 0.0); 1];
        assert_eq!(basis.energy(&zero), 0.0);
        let res = minimize_abrikosov(&spec, 2, 1).unwrap();
        assert!(res.c_value <= 0.0);
    }

    #[test]
    fn coefficient_gradient_matches_fd() {
        let spec = spectrum(2, 16);
        let basis = LllBasis::new(&spec);
        let x = vec![0.9, -0.3, 0.2, 1.1];
        let dir = vec![0.3, 0.5, -0.7, 0.1];
        let err = crate::optim::gradient_check(
            &x,
            &|y: &[f64]| basis.energy(&flat_to_coeffs(y)),
            &|y: &[f64], g: &mut [f64]| basis.gradient(&flat_to_coeffs(y), g),
            &dir,
            1e-6,
        );
        assert!(err < 1e-7, "{err}");
    }

    #[test]
    fn restart_dispersion_small_for_n_le_2() {
        let spec = spectrum(2, 16);
        let res = minimize_abrikosov(&spec, 4, 7).unwrap();
        assert!(res.restart_dispersion() <= 0.01, "{:?}", res.per_restart_energies);
        assert!(res.c_over_r2() >= -0.5 && res.c_over_r2() < -0.40);
    }

    #[test]
    fn extrapolation_of_constant_sequence_is_constant() {
        let mk = |n: u32, v: f64| {
            let cell = CellSpec::new(n, 0.95).unwrap();
            let r = cell.side();
            AbrikosovResult {
                cell,
                coefficients: vec![],
                c_value: v * r * r,
                beta_ratio: None,
                per_restart_energies: vec![],
                grad_norm: 0.0,
                iterations: 0,
                seed: 0,
            }
        };
        let est = estimate_eab(&[mk(1, -0.43), mk(4, -0.43), mk(9, -0.43)]).unwrap();
        assert!((est.extrapolated + 0.43).abs() < 1e-12);
        assert!(est.uncertainty < 1e-12);
    }

    #[test]
    fn extrapolation_requires_three_points() {
        let cell = CellSpec::new(1, 0.95).unwrap();
        let r = AbrikosovResult {
            cell,
            coefficients: vec![],
            c_value: -1.0,
            beta_ratio: None,
            per_restart_energies: vec![],
            grad_norm: 0.0,
            iterations: 0,
            seed: 0,
        };
        assert!(estimate_eab(&[r.clone(), r]).is_err());
    }
}
