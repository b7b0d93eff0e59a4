//! Complex scalar fields on a grid, quadrature and deterministic reductions.

use crate::error::{GlError, Result};
use crate::grid::GridSpec;
use crate::scalar::Scalar;
use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Boundary condition tag of a field.
///
/// * `Dirichlet` — the field is logically zero outside the grid.
/// * `MagneticPeriodic(N)` — the field wraps with the magnetic-translation
///   phases of the flux-quantized cell carrying `N` flux quanta.
/// * `Natural` — no wrap is imposed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Bc {
    Dirichlet,
    MagneticPeriodic(u32),
    Natural,
}

impl Bc {
    pub fn label(&self) -> String {
        match self {
            Bc::Dirichlet => "dirichlet".into(),
            Bc::MagneticPeriodic(n) => format!("magnetic_periodic({n})"),
            Bc::Natural => "natural".into(),
        }
    }
}

/// Reduction mode for grid sums.
///
/// `Ordered` is bitwise deterministic regardless of thread count: per-row
/// partial sums are formed independently and combined in row order. `Fast`
/// lets rayon combine partials in arrival order and is only reproducible to
/// roundoff (1e-13 relative).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Reduction {
    #[default]
    Ordered,
    Fast,
}

/// Sum `f(j)` over `rows` row indices under the given reduction mode.
pub fn reduce_rows<T, F>(rows: usize, mode: Reduction, f: F) -> T
where
    T: Scalar,
    F: Fn(usize) -> T + Sync + Send,
{
    match mode {
        Reduction::Ordered => {
            let partials: Vec<T> = (0..rows).into_par_iter().map(f).collect();
            partials.into_iter().fold(T::zero(), |a, b| a + b)
        }
        Reduction::Fast => (0..rows).into_par_iter().map(f).sum(),
    }
}

/// A complex field sampled at the cell centers of a [`GridSpec`].
#[derive(Clone, Debug)]
pub struct ComplexField<T> {
    grid: GridSpec<T>,
    bc: Bc,
    values: Vec<Complex<T>>,
}

impl<T: Scalar> ComplexField<T> {
    pub fn zeros(grid: GridSpec<T>, bc: Bc) -> Self {
        Self {
            grid,
            bc,
            values: vec![Complex::new(T::zero(), T::zero()); grid.num_cells()],
        }
    }

    pub fn from_values(grid: GridSpec<T>, bc: Bc, values: Vec<Complex<T>>) -> Result<Self> {
        if values.len() != grid.num_cells() {
            return Err(GlError::GridMismatch(format!(
                "expected {} samples, got {}",
                grid.num_cells(),
                values.len()
            )));
        }
        for (k, v) in values.iter().enumerate() {
            if !(v.re.is_finite() && v.im.is_finite()) {
                return Err(GlError::NonFinite(format!("sample {k} = {v:?}")));
            }
        }
        Ok(Self { grid, bc, values })
    }

    /// Sample `f(x, y)` at every cell center.
    pub fn from_fn(grid: GridSpec<T>, bc: Bc, f: impl Fn(T, T) -> Complex<T>) -> Result<Self> {
        let m = grid.points_per_side();
        let mut values = Vec::with_capacity(grid.num_cells());
        for j in 0..m {
            let y = grid.center_coord(j);
            for i in 0..m {
                values.push(f(grid.center_coord(i), y));
            }
        }
        Self::from_values(grid, bc, values)
    }

    /// Deterministic complex Gaussian noise (Box-Muller over ChaCha8),
    /// scaled to the given amplitude.
    pub fn random_normal(grid: GridSpec<T>, bc: Bc, seed: u64, amplitude: T) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..grid.num_cells())
            .map(|_| {
                let (a, b) = gaussian_pair(&mut rng);
                Complex::new(T::of(a), T::of(b)) * amplitude
            })
            .collect();
        Self { grid, bc, values }
    }

    pub fn grid(&self) -> &GridSpec<T> {
        &self.grid
    }

    pub fn bc(&self) -> Bc {
        self.bc
    }

    pub fn values(&self) -> &[Complex<T>] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex<T>] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex<T>> {
        self.values
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> Complex<T> {
        self.values[self.grid.idx(i, j)]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    pub fn same_layout(&self, other: &Self) -> Result<()> {
        if !self.grid.same_as(&other.grid) {
            return Err(GlError::GridMismatch(format!(
                "{}x{} (L={}) vs {}x{} (L={})",
                self.grid.points_per_side(),
                self.grid.points_per_side(),
                self.grid.side_length(),
                other.grid.points_per_side(),
                other.grid.points_per_side(),
                other.grid.side_length()
            )));
        }
        if self.bc != other.bc {
            return Err(GlError::BcMismatch(format!(
                "{} vs {}",
                self.bc.label(),
                other.bc.label()
            )));
        }
        Ok(())
    }

    /// Discrete inner product `h^2 sum conj(a) b`.
    pub fn inner(&self, other: &Self, mode: Reduction) -> Complex<T> {
        let m = self.grid.points_per_side();
        let re = reduce_rows(m, mode, |j| {
            let mut acc = T::zero();
            for i in 0..m {
                let k = j * m + i;
                let a = self.values[k];
                let b = other.values[k];
                acc += a.re * b.re + a.im * b.im;
            }
            acc
        });
        let im = reduce_rows(m, mode, |j| {
            let mut acc = T::zero();
            for i in 0..m {
                let k = j * m + i;
                let a = self.values[k];
                let b = other.values[k];
                acc += a.re * b.im - a.im * b.re;
            }
            acc
        });
        Complex::new(re, im) * self.grid.cell_area()
    }

    /// Weighted L^2 norm, `(h^2 sum |u|^2)^{1/2}`.
    pub fn norm_l2(&self, mode: Reduction) -> T {
        let m = self.grid.points_per_side();
        let s = reduce_rows(m, mode, |j| {
            let mut acc = T::zero();
            for i in 0..m {
                acc += self.values[j * m + i].norm_sqr();
            }
            acc
        });
        (s * self.grid.cell_area()).sqrt()
    }

    /// Weighted L^4 norm, `(h^2 sum |u|^4)^{1/4}`.
    pub fn norm_l4(&self, mode: Reduction) -> T {
        let m = self.grid.points_per_side();
        let s = reduce_rows(m, mode, |j| {
            let mut acc = T::zero();
            for i in 0..m {
                let q = self.values[j * m + i].norm_sqr();
                acc += q * q;
            }
            acc
        });
        (s * self.grid.cell_area()).sqrt().sqrt()
    }

    pub fn max_abs(&self) -> T {
        self.values
            .iter()
            .map(|v| v.norm_sqr())
            .fold(T::zero(), |a, b| if b > a { b } else { a })
            .sqrt()
    }

    pub fn scale(&mut self, factor: Complex<T>) {
        for v in &mut self.values {
            *v = *v * factor;
        }
    }

    /// `self += factor * other`.
    pub fn axpy(&mut self, factor: Complex<T>, other: &Self) {
        for (a, b) in self.values.iter_mut().zip(other.values.iter()) {
            *a = *a + factor * *b;
        }
    }

    /// Pointwise density `|u|^2`.
    pub fn abs2(&self) -> Vec<T> {
        self.values.iter().map(|v| v.norm_sqr()).collect()
    }

    /// Bilinear interpolation at physical point `(x, y)`.
    ///
    /// Out-of-range queries clamp to the boundary cell band; callers that need
    /// magnetic-periodic extension must reduce coordinates (and accumulate the
    /// wrap phases) before calling.
    pub fn interp_bilinear(&self, x: T, y: T) -> Complex<T> {
        let m = self.grid.points_per_side();
        let h = self.grid.spacing();
        let half = T::of(0.5);
        let lo = -self.grid.side_length() * half + h * half;
        let fx = ((x - lo) / h).max(T::zero());
        let fy = ((y - lo) / h).max(T::zero());
        let i0 = (fx.floor().f64() as usize).min(m - 1);
        let j0 = (fy.floor().f64() as usize).min(m - 1);
        let i1 = (i0 + 1).min(m - 1);
        let j1 = (j0 + 1).min(m - 1);
        let tx = (fx - T::of(i0 as f64)).min(T::one());
        let ty = (fy - T::of(j0 as f64)).min(T::one());
        let one = T::one();
        let w00 = (one - tx) * (one - ty);
        let w10 = tx * (one - ty);
        let w01 = (one - tx) * ty;
        let w11 = tx * ty;
        self.at(i0, j0) * w00 + self.at(i1, j0) * w10 + self.at(i0, j1) * w01 + self.at(i1, j1) * w11
    }
}

fn gaussian_pair(rng: &mut ChaCha8Rng) -> (f64, f64) {
    // Box-Muller; u1 bounded away from zero to keep ln finite.
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    let r = (-2.0 * u1.ln()).sqrt();
    let th = std::f64::consts::TAU * u2;
    (r * th.cos(), r * th.sin())
}

/// Quadrature of a real sample vector: `h^2 sum f`.
pub fn integrate<T: Scalar>(f: &[T], grid: &GridSpec<T>, mode: Reduction) -> T {
    assert_eq!(f.len(), grid.num_cells(), "integrate: sample count mismatch");
    let m = grid.points_per_side();
    let s = reduce_rows(m, mode, |j| {
        let mut acc = T::zero();
        for i in 0..m {
            acc += f[j * m + i];
        }
        acc
    });
    s * grid.cell_area()
}

/// Axis-aligned square region used for masks and local observables.
#[derive(Clone, Copy, Debug)]
pub struct SquareRegion<T> {
    pub center: (T, T),
    pub side: T,
}

impl<T: Scalar> SquareRegion<T> {
    pub fn contains(&self, x: T, y: T) -> bool {
        let half = self.side * T::of(0.5);
        (x - self.center.0).abs() <= half && (y - self.center.1).abs() <= half
    }
}

/// Cell mask of a square region: cells whose center lies inside.
pub fn mask_square<T: Scalar>(grid: &GridSpec<T>, region: &SquareRegion<T>) -> Vec<bool> {
    let m = grid.points_per_side();
    let mut mask = vec![false; grid.num_cells()];
    for j in 0..m {
        let y = grid.center_coord(j);
        for i in 0..m {
            mask[j * m + i] = region.contains(grid.center_coord(i), y);
        }
    }
    mask
}

/// Quadrature restricted to masked cells.
pub fn integrate_masked<T: Scalar>(
    f: &[T],
    mask: &[bool],
    grid: &GridSpec<T>,
    mode: Reduction,
) -> T {
    assert_eq!(f.len(), grid.num_cells());
    assert_eq!(mask.len(), grid.num_cells());
    let m = grid.points_per_side();
    let s = reduce_rows(m, mode, |j| {
        let mut acc = T::zero();
        for i in 0..m {
            let k = j * m + i;
            if mask[k] {
                acc += f[k];
            }
        }
        acc
    });
    s * grid.cell_area()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(l: f64, m: usize) -> GridSpec<f64> {
        GridSpec::new(l, m).unwrap()
    }

    #[test]
    fn integrate_constant_is_exact() {
        let g = grid(2.5, 40);
        let f = vec![1.0; g.num_cells()];
        let v = integrate(&f, &g, Reduction::Ordered);
        assert!((v - 2.5 * 2.5).abs() < 1e-12 * 6.25);
    }

    #[test]
    fn masked_integral_within_one_cell_band() {
        let g = grid(4.0, 64);
        let h = g.spacing();
        let region = SquareRegion {
            center: (0.3, -0.2),
            side: 1.1,
        };
        let mask = mask_square(&g, &region);
        let f = vec![1.0; g.num_cells()];
        let v = integrate_masked(&f, &mask, &g, Reduction::Ordered);
        let band = 4.0 * 1.1 * h + 4.0 * h * h;
        assert!((v - 1.1f64 * 1.1).abs() <= band, "v = {v}");
    }

    #[test]
    fn ordered_reduction_is_bitwise_stable_across_pools() {
        let g = grid(1.0, 48);
        let f = ComplexField::random_normal(g, Bc::Natural, 7, 1.0);
        let dens = f.abs2();
        let pool1 = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let pool3 = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let a = pool1.install(|| integrate(&dens, &g, Reduction::Ordered));
        let b = pool3.install(|| integrate(&dens, &g, Reduction::Ordered));
        assert_eq!(a.to_bits(), b.to_bits());
        let c = pool3.install(|| integrate(&dens, &g, Reduction::Fast));
        assert!((a - c).abs() <= 1e-13 * a.abs());
    }

    #[test]
    fn rejects_non_finite_samples() {
        let g = grid(1.0, 8);
        let mut vals = vec![Cplx64::new(0.0, 0.0); g.num_cells()];
        vals[3] = Cplx64::new(f64::NAN, 0.0);
        assert!(ComplexField::from_values(g, Bc::Natural, vals).is_err());
    }

    type Cplx64 = num_complex::Complex<f64>;

    #[test]
    fn interp_reproduces_linear_fields() {
        let g = grid(2.0, 32);
        let f = ComplexField::from_fn(g, Bc::Natural, |x, y| Cplx64::new(2.0 * x - y, 0.5 * y))
            .unwrap();
        let v = f.interp_bilinear(0.123, -0.456);
        assert!((v.re - (2.0 * 0.123 + 0.456)).abs() < 1e-12);
        assert!((v.im - (0.5 * -0.456)).abs() < 1e-12);
    }

    #[test]
    fn f32_fields_work() {
        let g = GridSpec::<f32>::new(1.0, 16).unwrap();
        let f = ComplexField::random_normal(g, Bc::Natural, 3, 0.5f32);
        assert!(f.norm_l2(Reduction::Ordered) > 0.0);
    }
}
