//! The discrete Landau operator on the flux-quantized cell.

use crate::error::{GlError, Result};
use crate::field::Bc;
use crate::grid::GridSpec;
use crate::linalg::vdot;
use crate::links::{check_quantization, make_links, GaugeLinks, Potential};
use crate::scalar::Scalar;
use num_complex::Complex;
use rayon::prelude::*;

/// A Hermitian operator applied matrix-free to grid-sized complex vectors.
pub trait HermitianOp<T: Scalar>: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[Complex<T>], out: &mut [Complex<T>]);
    /// A rigorous upper bound on the spectrum (used as the Chebyshev filter
    /// edge).
    fn spectral_upper_bound(&self) -> T;
}

/// `-(grad - i A0)^2` with magnetic-periodic boundary conditions on the cell
/// of side `R`, `R^2 = 2 pi N`: the five-point covariant stencil built from
/// unit-field Peierls links, with the wrap factors of the quantized cell.
pub struct LandauOp<T> {
    links: GaugeLinks<T>,
    m: usize,
    inv_h2: T,
}

/// Assemble the Landau operator. Rejects grids whose side is not the
/// flux-quantized `R = sqrt(2 pi N)`.
pub fn assemble_landau<T: Scalar>(n_flux: u32, grid: GridSpec<T>) -> Result<LandauOp<T>> {
    if n_flux == 0 {
        return Err(GlError::InvalidParameter("flux N must be >= 1".into()));
    }
    check_quantization(grid.side_length(), T::one(), n_flux)?;
    let links = make_links(
        Potential::Canonical,
        grid,
        Bc::MagneticPeriodic(n_flux),
        T::one(),
    )?;
    Ok(LandauOp {
        links,
        m: grid.points_per_side(),
        inv_h2: T::one() / grid.cell_area(),
    })
}

impl<T: Scalar> LandauOp<T> {
    pub fn links(&self) -> &GaugeLinks<T> {
        &self.links
    }

    /// The quadratic form `h^2 <u, P u> = sum_edges |U u_head - u_tail|^2`,
    /// nonnegative by construction.
    pub fn quadratic_form(&self, u: &[Complex<T>]) -> T {
        let m = self.m;
        assert_eq!(u.len(), m * m);
        let links = &self.links;
        (0..m)
            .into_par_iter()
            .map(|j| {
                let mut acc = T::zero();
                for i in 0..m {
                    let k = j * m + i;
                    acc += (links.link_x(i, j) * u[j * m + (i + 1) % m] - u[k]).norm_sqr();
                    acc += (links.link_y(i, j) * u[((j + 1) % m) * m + i] - u[k]).norm_sqr();
                }
                acc
            })
            .collect::<Vec<T>>()
            .into_iter()
            .fold(T::zero(), |a, b| a + b)
            * self.inv_h2
    }

    /// Rayleigh quotient under the plain vector inner product.
    pub fn rayleigh(&self, u: &[Complex<T>]) -> T {
        let n2 = vdot(u, u).re;
        self.quadratic_form(u) / n2
    }

    /// Dense matrix representation (test oracle; small grids only).
    pub fn dense(&self) -> Vec<Complex<T>> {
        let n = self.dim();
        assert!(n <= 1 << 12, "dense Landau matrix only for small grids");
        let mut mat = vec![Complex::new(T::zero(), T::zero()); n * n];
        let mut e = vec![Complex::new(T::zero(), T::zero()); n];
        let mut col = vec![Complex::new(T::zero(), T::zero()); n];
        for c in 0..n {
            e[c] = Complex::new(T::one(), T::zero());
            self.apply(&e, &mut col);
            for r in 0..n {
                mat[r * n + c] = col[r];
            }
            e[c] = Complex::new(T::zero(), T::zero());
        }
        mat
    }
}

impl<T: Scalar> HermitianOp<T> for LandauOp<T> {
    fn dim(&self) -> usize {
        self.m * self.m
    }

    fn apply(&self, x: &[Complex<T>], out: &mut [Complex<T>]) {
        let m = self.m;
        debug_assert_eq!(x.len(), m * m);
        debug_assert_eq!(out.len(), m * m);
        let links = &self.links;
        let inv_h2 = self.inv_h2;
        let four = T::of(4.0);
        out.par_chunks_mut(m).enumerate().for_each(|(j, row)| {
            let jm = (j + m - 1) % m;
            let jp = (j + 1) % m;
            for (i, o) in row.iter_mut().enumerate() {
                let im = (i + m - 1) % m;
                let ip = (i + 1) % m;
                let k = j * m + i;
                let mut acc = x[k] * four;
                acc = acc - links.link_x(i, j) * x[j * m + ip];
                acc = acc - links.link_x(im, j).conj() * x[j * m + im];
                acc = acc - links.link_y(i, j) * x[jp * m + i];
                acc = acc - links.link_y(i, jm).conj() * x[jm * m + i];
                *o = acc * inv_h2;
            }
        });
    }

    fn spectral_upper_bound(&self) -> T {
        // Gershgorin: diagonal 4/h^2, four unit-modulus off-diagonal entries
        T::of(8.0) * self.inv_h2 * (T::one() + T::of(1e-12)) + T::one()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::hermitian_eigen;
    use crate::scalar::tau;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    type C64 = Complex<f64>;

    fn cell_grid(n_flux: u32, m: usize) -> GridSpec<f64> {
        GridSpec::new((tau::<f64>() * n_flux as f64).sqrt(), m).unwrap()
    }

    fn random_vec(n: usize, seed: u64) -> Vec<C64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect()
    }

    #[test]
    fn hermitian_on_random_pairs() {
        let g = cell_grid(1, 12);
        let op = assemble_landau(1, g).unwrap();
        let n = op.dim();
        for t in 0..10 {
            let mut u = random_vec(n, 100 + t);
            let mut v = random_vec(n, 200 + t);
            let nu = vdot(&u, &u).re.sqrt();
            let nv = vdot(&v, &v).re.sqrt();
            crate::linalg::vscale(&mut u, 1.0 / nu);
            crate::linalg::vscale(&mut v, 1.0 / nv);
            let mut pu = vec![C64::new(0.0, 0.0); n];
            let mut pv = vec![C64::new(0.0, 0.0); n];
            op.apply(&u, &mut pu);
            op.apply(&v, &mut pv);
            let lhs = vdot(&pu, &v);
            let rhs = vdot(&u, &pv);
            assert!((lhs - rhs).norm() <= 1e-12 * (1.0 + lhs.norm()), "{t}");
        }
    }

    #[test]
    fn quadratic_form_nonnegative_and_matches_apply() {
        let g = cell_grid(2, 10);
        let op = assemble_landau(2, g).unwrap();
        let u = random_vec(op.dim(), 7);
        let q = op.quadratic_form(&u);
        assert!(q >= 0.0);
        let mut pu = vec![C64::new(0.0, 0.0); op.dim()];
        op.apply(&u, &mut pu);
        let q2 = vdot(&u, &pu).re;
        assert!((q - q2).abs() <= 1e-10 * q.abs());
    }

    #[test]
    fn constant_input_sees_nonzero_potential() {
        let g = cell_grid(1, 10);
        let op = assemble_landau(1, g).unwrap();
        let u = vec![C64::new(1.0, 0.0); op.dim()];
        let mut out = vec![C64::new(0.0, 0.0); op.dim()];
        op.apply(&u, &mut out);
        // A0 != 0, so the covariant Laplacian of a constant is nonzero
        assert!(out.iter().any(|v| v.norm() > 1e-6));
    }

    #[test]
    fn rejects_unquantized_grid() {
        let g = GridSpec::new(2.0, 10).unwrap();
        assert!(assemble_landau(1, g).is_err());
    }

    #[test]
    fn dense_spectrum_has_lll_structure_small_grid() {
        // Coarse-grid sanity: N=1 cell, lowest eigenvalue near 1 with a gap.
        let g = cell_grid(1, 12);
        let op = assemble_landau(1, g).unwrap();
        let a = op.dense();
        let (vals, _) = hermitian_eigen(&a, op.dim());
        assert!((vals[0] - 1.0).abs() < 0.05, "mu1 = {}", vals[0]);
        assert!(vals[1] > 2.5, "mu2 = {}", vals[1]);
        assert!(op.spectral_upper_bound() > *vals.last().unwrap());
    }
}
