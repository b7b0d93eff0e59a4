//! Small dense complex linear algebra: a cyclic Jacobi eigensolver for
//! Hermitian matrices, modified Gram-Schmidt, and principal angles between
//! subspaces. Sized for Rayleigh-Ritz blocks and cross-Gram analyses (tens of
//! rows), not for the grid-sized operators.

use crate::scalar::Scalar;
use num_complex::Complex;
use rayon::prelude::*;

/// `sum conj(a) b` with a fixed-chunk deterministic reduction.
pub fn vdot<T: Scalar>(a: &[Complex<T>], b: &[Complex<T>]) -> Complex<T> {
    assert_eq!(a.len(), b.len());
    const CHUNK: usize = 4096;
    let partials: Vec<Complex<T>> = a
        .par_chunks(CHUNK)
        .zip(b.par_chunks(CHUNK))
        .map(|(ca, cb)| {
            let mut acc = Complex::new(T::zero(), T::zero());
            for (x, y) in ca.iter().zip(cb.iter()) {
                acc = acc + x.conj() * *y;
            }
            acc
        })
        .collect();
    partials
        .into_iter()
        .fold(Complex::new(T::zero(), T::zero()), |s, p| s + p)
}

pub fn vnorm<T: Scalar>(a: &[Complex<T>]) -> T {
    vdot(a, a).re.sqrt()
}

pub fn vaxpy<T: Scalar>(y: &mut [Complex<T>], alpha: Complex<T>, x: &[Complex<T>]) {
    for (yi, xi) in y.iter_mut().zip(x.iter()) {
        *yi = *yi + alpha * *xi;
    }
}

pub fn vscale<T: Scalar>(y: &mut [Complex<T>], alpha: T) {
    for yi in y.iter_mut() {
        *yi = Complex::new(yi.re * alpha, yi.im * alpha);
    }
}

/// Eigendecomposition of a Hermitian matrix (row-major, `n x n`) by cyclic
/// Jacobi rotations. Returns ascending eigenvalues and the matching
/// eigenvectors stored column-major (`vecs[k*n..(k+1)*n]` is eigenvector `k`).
pub fn hermitian_eigen<T: Scalar>(a_in: &[Complex<T>], n: usize) -> (Vec<T>, Vec<Complex<T>>) {
    assert_eq!(a_in.len(), n * n);
    let zero = Complex::new(T::zero(), T::zero());
    let mut a = vec![zero; n * n];
    // symmetrize against roundoff
    for r in 0..n {
        for c in 0..n {
            let v = (a_in[r * n + c] + a_in[c * n + r].conj()) * T::of(0.5);
            a[r * n + c] = v;
        }
    }
    let mut v = vec![zero; n * n];
    for k in 0..n {
        v[k * n + k] = Complex::new(T::one(), T::zero());
    }
    if n > 1 {
        let fro: T = a.iter().map(|x| x.norm_sqr()).sum::<T>().sqrt();
        let tol = T::epsilon() * T::of(n as f64) * (fro + T::one());
        for _sweep in 0..120 {
            let mut off = T::zero();
            for p in 0..n {
                for q in (p + 1)..n {
                    off += a[p * n + q].norm_sqr();
                }
            }
            if off.sqrt() <= tol {
                break;
            }
            for p in 0..n - 1 {
                for q in (p + 1)..n {
                    let apq = a[p * n + q];
                    let r = apq.norm();
                    if r <= T::epsilon() * fro {
                        continue;
                    }
                    let app = a[p * n + p].re;
                    let aqq = a[q * n + q].re;
                    // phase out the pivot, then a real rotation
                    let eib = apq / r;
                    let (re2, im2) = half_phase(eib);
                    let phase_half = Complex::new(re2, im2);
                    let tau = (aqq - app) / (r + r);
                    let t = if tau == T::zero() {
                        T::one()
                    } else {
                        let sign = if tau > T::zero() { T::one() } else { -T::one() };
                        sign / (tau.abs() + (T::one() + tau * tau).sqrt())
                    };
                    let c = T::one() / (T::one() + t * t).sqrt();
                    let s = t * c;
                    let u11 = phase_half * c;
                    let u12 = phase_half * s;
                    let u21 = phase_half.conj() * (-s);
                    let u22 = phase_half.conj() * c;
                    // A <- U^H A U : columns then rows
                    for k in 0..n {
                        let akp = a[k * n + p];
                        let akq = a[k * n + q];
                        a[k * n + p] = akp * u11 + akq * u21;
                        a[k * n + q] = akp * u12 + akq * u22;
                    }
                    for k in 0..n {
                        let apk = a[p * n + k];
                        let aqk = a[q * n + k];
                        a[p * n + k] = apk * u11.conj() + aqk * u21.conj();
                        a[q * n + k] = apk * u12.conj() + aqk * u22.conj();
                    }
                    for k in 0..n {
                        let vkp = v[p * n + k];
                        let vkq = v[q * n + k];
                        v[p * n + k] = vkp * u11 + vkq * u21;
                        v[q * n + k] = vkp * u12 + vkq * u22;
                    }
                }
            }
        }
    }
    // v is stored with eigenvector k occupying v[k*n..] after the loop above
    // operated on "columns" p,q of V^T; sort by eigenvalue.
    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<T> = (0..n).map(|k| a[k * n + k].re).collect();
    order.sort_by(|&i, &j| diag[i].partial_cmp(&diag[j]).unwrap());
    let mut vals = Vec::with_capacity(n);
    let mut vecs = vec![zero; n * n];
    for (col, &k) in order.iter().enumerate() {
        vals.push(diag[k]);
        vecs[col * n..(col + 1) * n].copy_from_slice(&v[k * n..(k + 1) * n]);
    }
    (vals, vecs)
}

/// Half-angle phase: given a unit complex `e^{i b}`, return `e^{i b/2}`.
fn half_phase<T: Scalar>(eib: Complex<T>) -> (T, T) {
    let half = T::of(0.5);
    let c = ((T::one() + eib.re) * half).max(T::zero()).sqrt();
    let s_abs = ((T::one() - eib.re) * half).max(T::zero()).sqrt();
    let s = if eib.im >= T::zero() { s_abs } else { -s_abs };
    (c, s)
}

/// Modified Gram-Schmidt with a single reorthogonalization pass under the
/// plain complex dot product. Vectors whose residual norm falls below
/// `drop_tol` times their original norm are removed; returns the retained
/// count.
pub fn mgs_orthonormalize<T: Scalar>(vecs: &mut Vec<Vec<Complex<T>>>, drop_tol: T) -> usize {
    let mut kept: Vec<Vec<Complex<T>>> = Vec::with_capacity(vecs.len());
    for mut w in vecs.drain(..) {
        let norm0 = vnorm(&w);
        if norm0 <= T::zero() {
            continue;
        }
        for _pass in 0..2 {
            for q in &kept {
                let c = vdot(q, &w);
                vaxpy(&mut w, -c, q);
            }
        }
        let norm1 = vnorm(&w);
        if norm1 > drop_tol * norm0 && norm1 > T::zero() {
            vscale(&mut w, T::one() / norm1);
            kept.push(w);
        }
    }
    let n = kept.len();
    *vecs = kept;
    n
}

/// Principal angles (radians, largest first) between the spans of two
/// orthonormal families given the inner product `weight * sum conj(a) b`.
pub fn principal_angles<T: Scalar>(
    u: &[Vec<Complex<T>>],
    v: &[Vec<Complex<T>>],
    weight: T,
) -> Vec<T> {
    assert_eq!(u.len(), v.len(), "subspace dimensions differ");
    let k = u.len();
    if k == 0 {
        return Vec::new();
    }
    let mut gram = vec![Complex::new(T::zero(), T::zero()); k * k];
    for (r, uu) in u.iter().enumerate() {
        for (c, vv) in v.iter().enumerate() {
            gram[r * k + c] = vdot(uu, vv) * weight;
        }
    }
    // singular values of G via eigenvalues of G^H G
    let mut gtg = vec![Complex::new(T::zero(), T::zero()); k * k];
    for r in 0..k {
        for c in 0..k {
            let mut acc = Complex::new(T::zero(), T::zero());
            for l in 0..k {
                acc = acc + gram[l * k + r].conj() * gram[l * k + c];
            }
            gtg[r * k + c] = acc;
        }
    }
    let (vals, _) = hermitian_eigen(&gtg, k);
    let mut angles: Vec<T> = vals
        .into_iter()
        .map(|lam| {
            let sigma = lam.max(T::zero()).sqrt().min(T::one());
            sigma.acos()
        })
        .collect();
    angles.sort_by(|a, b| b.partial_cmp(a).unwrap());
    angles
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    type C64 = Complex<f64>;

    fn random_hermitian(n: usize, seed: u64) -> Vec<C64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = vec![C64::new(0.0, 0.0); n * n];
        for r in 0..n {
            for c in r..n {
                if r == c {
                    a[r * n + c] = C64::new(rng.gen_range(-1.0..1.0), 0.0);
                } else {
                    let v = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                    a[r * n + c] = v;
                    a[c * n + r] = v.conj();
                }
            }
        }
        a
    }

    fn residual(a: &[C64], n: usize, vals: &[f64], vecs: &[C64]) -> f64 {
        let mut worst: f64 = 0.0;
        for k in 0..n {
            let v = &vecs[k * n..(k + 1) * n];
            for r in 0..n {
                let mut av = C64::new(0.0, 0.0);
                for c in 0..n {
                    av += a[r * n + c] * v[c];
                }
                worst = worst.max((av - v[r] * vals[k]).norm());
            }
        }
        worst
    }

    #[test]
    fn diagonalizes_random_hermitian() {
        for n in [2usize, 3, 7, 24] {
            let a = random_hermitian(n, 1000 + n as u64);
            let (vals, vecs) = hermitian_eigen(&a, n);
            assert!(vals.windows(2).all(|w| w[0] <= w[1] + 1e-14));
            assert!(residual(&a, n, &vals, &vecs) < 1e-12 * (n as f64));
            // orthonormality
            for i in 0..n {
                for j in 0..n {
                    let d = vdot(&vecs[i * n..(i + 1) * n], &vecs[j * n..(j + 1) * n]);
                    let target = if i == j { 1.0 } else { 0.0 };
                    assert!((d - C64::new(target, 0.0)).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn known_two_by_two() {
        // [[2, i], [-i, 2]] has eigenvalues 1 and 3
        let a = vec![
            C64::new(2.0, 0.0),
            C64::new(0.0, 1.0),
            C64::new(0.0, -1.0),
            C64::new(2.0, 0.0),
        ];
        let (vals, _) = hermitian_eigen(&a, 2);
        assert!((vals[0] - 1.0).abs() < 1e-14);
        assert!((vals[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn mgs_produces_orthonormal_family() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut vecs: Vec<Vec<C64>> = (0..5)
            .map(|_| {
                (0..40)
                    .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                    .collect()
            })
            .collect();
        // make one vector dependent
        let dep: Vec<C64> = vecs[0].iter().zip(&vecs[1]).map(|(a, b)| a + b).collect();
        vecs.push(dep);
        let kept = mgs_orthonormalize(&mut vecs, 1e-10);
        assert_eq!(kept, 5);
        for i in 0..kept {
            for j in 0..kept {
                let d = vdot(&vecs[i], &vecs[j]);
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((d - C64::new(target, 0.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn principal_angles_of_rotated_plane() {
        // span{e1, e2} vs span{e1, cos a e2 + sin a e3}
        let alpha: f64 = 0.3;
        let dim = 6;
        let e = |k: usize| {
            let mut v = vec![C64::new(0.0, 0.0); dim];
            v[k] = C64::new(1.0, 0.0);
            v
        };
        let u = vec![e(0), e(1)];
        let mut w = vec![C64::new(0.0, 0.0); dim];
        w[1] = C64::new(alpha.cos(), 0.0);
        w[2] = C64::new(alpha.sin(), 0.0);
        let v = vec![e(0), w];
        let angles = principal_angles(&u, &v, 1.0);
        assert!((angles[0] - alpha).abs() < 1e-12);
        assert!(angles[1].abs() < 1e-7);
    }
}
