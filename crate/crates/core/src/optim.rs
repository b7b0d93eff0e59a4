//! Nonlinear conjugate gradient (Polak-Ribiere with restarts) over flat real
//! vectors, with Armijo backtracking. Shared by the cell and full-domain
//! minimizers.

use crate::scalar::Scalar;
use rayon::prelude::*;

#[derive(Clone, Copy, Debug)]
pub struct NcgOptions<T> {
    /// Convergence when `||g||_2 <= grad_tol_factor * max(1, |E|)`.
    pub grad_tol_factor: T,
    pub max_iters: usize,
    pub ls_backtracks: usize,
    pub ls_c1: T,
}

impl<T: Scalar> Default for NcgOptions<T> {
    fn default() -> Self {
        Self {
            grad_tol_factor: T::of(1e-8),
            max_iters: 20_000,
            ls_backtracks: 45,
            ls_c1: T::of(1e-4),
        }
    }
}

#[derive(Clone, Debug)]
pub struct NcgOutcome<T> {
    pub x: Vec<T>,
    pub energy: T,
    pub grad_norm: T,
    pub iterations: usize,
    pub converged: bool,
    pub direction_restarts: usize,
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    const CHUNK: usize = 8192;
    let partials: Vec<T> = a
        .par_chunks(CHUNK)
        .zip(b.par_chunks(CHUNK))
        .map(|(ca, cb)| {
            let mut acc = T::zero();
            for (x, y) in ca.iter().zip(cb.iter()) {
                acc += *x * *y;
            }
            acc
        })
        .collect();
    partials.into_iter().fold(T::zero(), |s, p| s + p)
}

fn norm<T: Scalar>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

/// Minimize `energy` starting from `x0`. `grad` writes the gradient of
/// `energy` at `x` into its second argument.
pub fn ncg_minimize<T, E, G>(x0: Vec<T>, energy: E, grad: G, opts: &NcgOptions<T>) -> NcgOutcome<T>
where
    T: Scalar,
    E: Fn(&[T]) -> T,
    G: Fn(&[T], &mut [T]),
{
    ncg_minimize_precond(x0, energy, grad, None, opts)
}

/// Preconditioned variant: `precond`, when given, applies an SPD
/// approximation of the inverse Hessian to the gradient.
pub fn ncg_minimize_precond<T, E, G>(
    x0: Vec<T>,
    energy: E,
    grad: G,
    precond: Option<&(dyn Fn(&[T], &mut [T]) + Sync)>,
    opts: &NcgOptions<T>,
) -> NcgOutcome<T>
where
    T: Scalar,
    E: Fn(&[T]) -> T,
    G: Fn(&[T], &mut [T]),
{
    let n = x0.len();
    let mut x = x0;
    let mut g = vec![T::zero(); n];
    let mut g_prev = vec![T::zero(); n];
    let mut y = vec![T::zero(); n];
    let mut y_prev = vec![T::zero(); n];
    let mut d = vec![T::zero(); n];
    let mut x_trial = vec![T::zero(); n];

    let apply_p = |g: &[T], y: &mut [T]| match precond {
        Some(p) => p(g, y),
        None => y.copy_from_slice(g),
    };

    // with a preconditioner, convergence is measured in its metric:
    // ||g||_P = sqrt(g . P^{-1} g)
    let measured_norm = |g: &[T], y: &[T]| -> T {
        if precond.is_some() {
            dot(g, y).max(T::zero()).sqrt()
        } else {
            norm(g)
        }
    };

    let mut e = energy(&x);
    grad(&x, &mut g);
    apply_p(&g, &mut y);
    let mut gnorm = measured_norm(&g, &y);
    let mut restarts = 0usize;
    let mut step = T::one() / (T::one() + gnorm);
    let mut iters = 0usize;

    for it in 0..opts.max_iters {
        iters = it;
        let tol = opts.grad_tol_factor * T::one().max(e.abs());
        if gnorm <= tol {
            return NcgOutcome {
                x,
                energy: e,
                grad_norm: gnorm,
                iterations: it,
                converged: true,
                direction_restarts: restarts,
            };
        }

        // direction: steepest on iteration 0 / after restart, PR+ otherwise
        if it == 0 {
            for k in 0..n {
                d[k] = -y[k];
            }
        } else {
            let gy_prev = dot(&g_prev, &y_prev);
            let mut beta = (dot(&g, &y) - dot(&g, &y_prev)) / gy_prev;
            if !beta.is_finite() || beta < T::zero() {
                beta = T::zero();
            }
            for k in 0..n {
                d[k] = -y[k] + beta * d[k];
            }
        }
        let mut slope = dot(&g, &d);
        if slope >= T::zero() {
            // not a descent direction: restart with (preconditioned) steepest
            restarts += 1;
            for k in 0..n {
                d[k] = -y[k];
            }
            slope = dot(&g, &d);
            if slope >= T::zero() {
                for k in 0..n {
                    d[k] = -g[k];
                }
                slope = dot(&g, &d);
            }
        }

        // Armijo backtracking from the previous accepted scale
        let mut t = step;
        let mut accepted = false;
        for _bt in 0..opts.ls_backtracks {
            for k in 0..n {
                x_trial[k] = x[k] + t * d[k];
            }
            let e_trial = energy(&x_trial);
            if e_trial <= e + opts.ls_c1 * t * slope {
                std::mem::swap(&mut x, &mut x_trial);
                if std::env::var_os("GL_TRACE_NCG").is_some() {
                    eprintln!(
                        "    ncg it {it}: e {:.12e} -> {:.12e}, slope {:.3e}, t {:.3e}, |g| {:.3e}",
                        e.f64(),
                        e_trial.f64(),
                        slope.f64(),
                        t.f64(),
                        gnorm.f64()
                    );
                }
                e = e_trial;
                accepted = true;
                break;
            }
            t = t * T::of(0.5);
        }
        if !accepted {
            // direction scale exhausted; restart once from steepest with a
            // fresh small step, otherwise give up
            if restarts > 64 {
                break;
            }
            restarts += 1;
            step = T::of(1e-2) / (T::one() + gnorm);
            for k in 0..n {
                d[k] = T::zero();
            }
            g_prev.copy_from_slice(&g);
            continue;
        }
        // grow the trial step slowly so the line search stays one-sided
        step = (t * T::of(2.0)).min(T::of(1e6));

        std::mem::swap(&mut g_prev, &mut g);
        std::mem::swap(&mut y_prev, &mut y);
        grad(&x, &mut g);
        apply_p(&g, &mut y);
        gnorm = measured_norm(&g, &y);
        if !e.is_finite() || !gnorm.is_finite() {
            break;
        }
    }
    NcgOutcome {
        x,
        energy: e,
        grad_norm: gnorm,
        iterations: iters + 1,
        converged: false,
        direction_restarts: restarts,
    }
}

/// Central finite-difference check of an analytic gradient along a random
/// direction; returns the relative error. Used by the hygiene tests of every
/// functional in the crate.
pub fn gradient_check<T, E, G>(x: &[T], energy: &E, grad: &G, dir: &[T], eps: T) -> T
where
    T: Scalar,
    E: Fn(&[T]) -> T,
    G: Fn(&[T], &mut [T]),
{
    let n = x.len();
    let mut g = vec![T::zero(); n];
    grad(x, &mut g);
    let analytic = dot(&g, dir);
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    for k in 0..n {
        xp[k] += eps * dir[k];
        xm[k] -= eps * dir[k];
    }
    let fd = (energy(&xp) - energy(&xm)) / (eps + eps);
    (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(T::of(1e-300))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn quadratic_bowl_converges() {
        let energy = |x: &[f64]| x.iter().enumerate().map(|(i, v)| (i + 1) as f64 * v * v).sum();
        let grad = |x: &[f64], g: &mut [f64]| {
            for (i, gi) in g.iter_mut().enumerate() {
                *gi = 2.0 * (i + 1) as f64 * x[i];
            }
        };
        let out = ncg_minimize(vec![1.0; 20], energy, grad, &NcgOptions::default());
        assert!(out.converged, "grad_norm {}", out.grad_norm);
        assert!(out.energy < 1e-14);
    }

    #[test]
    fn quartic_double_well() {
        // f = sum (x^2 - 1)^2; minima at +-1
        let energy = |x: &[f64]| x.iter().map(|v| (v * v - 1.0).powi(2)).sum();
        let grad = |x: &[f64], g: &mut [f64]| {
            for (gi, &v) in g.iter_mut().zip(x.iter()) {
                *gi = 4.0 * v * (v * v - 1.0);
            }
        };
        let out = ncg_minimize(vec![0.3, -0.4, 1.7], energy, grad, &NcgOptions::default());
        assert!(out.converged);
        for v in &out.x {
            assert!((v.abs() - 1.0).abs() < 1e-6, "{v}");
        }
    }

    #[test]
    fn gradient_check_flags_wrong_gradient() {
        let energy = |x: &[f64]| x.iter().map(|v| v * v).sum();
        let good = |x: &[f64], g: &mut [f64]| {
            for (gi, &v) in g.iter_mut().zip(x.iter()) {
                *gi = 2.0 * v;
            }
        };
        let bad = |x: &[f64], g: &mut [f64]| {
            for (gi, &v) in g.iter_mut().zip(x.iter()) {
                *gi = 2.1 * v;
            }
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..10).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let dir: Vec<f64> = (0..10).map(|_| rng.gen_range(-1.0..1.0)).collect();
        assert!(gradient_check(&x, &energy, &good, &dir, 1e-5) < 1e-9);
        assert!(gradient_check(&x, &energy, &bad, &dir, 1e-5) > 1e-3);
    }
}
