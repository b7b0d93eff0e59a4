//! The reduced Ginzburg-Landau functional on the cell:
//! `G_{b,D}(u) = int b |(grad - i A0) u|^2 - |u|^2 + (1/2)|u|^4`,
//! minimized with Dirichlet or magnetic-periodic boundary conditions.

use crate::error::{GlError, Result};
use crate::field::{integrate, reduce_rows, Bc, ComplexField, Reduction};
use crate::grid::GridSpec;
use crate::links::{kinetic_energy, make_links, GaugeLinks, Potential};
use crate::optim::{ncg_minimize, NcgOptions};
use crate::scalar::Scalar;
use crate::spectral::{CellSpec, SpectralResult};
use num_complex::Complex;
use serde::Serialize;

/// The three terms of the reduced energy. `total` is their sum; the split is
/// kept so scaling identities and normalization bugs stay visible.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ReducedEnergyBreakdown<T> {
    /// `b int |(grad - i A0) u|^2`
    pub kinetic: T,
    /// `- int |u|^2`
    pub quadratic: T,
    /// `(1/2) int |u|^4`
    pub quartic: T,
    pub total: T,
}

impl<T: Scalar> ReducedEnergyBreakdown<T> {
    pub fn zero() -> Self {
        Self {
            kinetic: T::zero(),
            quadratic: T::zero(),
            quartic: T::zero(),
            total: T::zero(),
        }
    }

    pub fn consistent(&self) -> bool {
        let sum = self.kinetic + self.quadratic + self.quartic;
        (sum - self.total).abs() <= T::of(1e-12) * (T::one() + self.total.abs())
    }
}

/// Evaluate the reduced energy of `u` for field ratio `b`.
pub fn reduced_energy<T: Scalar>(
    u: &ComplexField<T>,
    b: T,
    links: &GaugeLinks<T>,
    mode: Reduction,
) -> Result<ReducedEnergyBreakdown<T>> {
    let kin = kinetic_energy(u, links, mode)? * b;
    let d2 = u.abs2();
    let quad = -integrate(&d2, u.grid(), mode);
    let d4: Vec<T> = d2.iter().map(|&q| q * q).collect();
    let quart = integrate(&d4, u.grid(), mode) * T::of(0.5);
    Ok(ReducedEnergyBreakdown {
        kinetic: kin,
        quadratic: quad,
        quartic: quart,
        total: kin + quad + quart,
    })
}

/// Gradient of [`reduced_energy`] with respect to the real and imaginary
/// samples, packed as a complex field: `value = dE/d(Re u) + i dE/d(Im u)`.
pub fn reduced_gradient<T: Scalar>(
    u: &ComplexField<T>,
    b: T,
    links: &GaugeLinks<T>,
) -> Result<ComplexField<T>> {
    u.same_layout(&ComplexField::zeros(*links.grid(), links.bc()))?;
    let flat = field_to_flat(u);
    let kernel = ReducedKernel::new(*u.grid(), u.bc(), b, links);
    let mut g = vec![T::zero(); flat.len()];
    kernel.gradient(&flat, &mut g);
    let vals = g
        .chunks_exact(2)
        .map(|c| Complex::new(c[0], c[1]))
        .collect();
    ComplexField::from_values(*u.grid(), u.bc(), vals)
}

pub fn field_to_flat<T: Scalar>(u: &ComplexField<T>) -> Vec<T> {
    let mut out = Vec::with_capacity(2 * u.values().len());
    for v in u.values() {
        out.push(v.re);
        out.push(v.im);
    }
    out
}

pub fn flat_to_field<T: Scalar>(grid: GridSpec<T>, bc: Bc, x: &[T]) -> Result<ComplexField<T>> {
    let vals = x.chunks_exact(2).map(|c| Complex::new(c[0], c[1])).collect();
    ComplexField::from_values(grid, bc, vals)
}

/// Fused energy/gradient kernel over the flat `(re, im)` sample vector,
/// for the family `kin_w * int |D_A u|^2 + loc_w * int (|u|^4/2 - |u|^2)`.
pub(crate) struct ReducedKernel<'a, T> {
    grid: GridSpec<T>,
    bc: Bc,
    kin_w: T,
    loc_w: T,
    links: &'a GaugeLinks<T>,
}

impl<'a, T: Scalar> ReducedKernel<'a, T> {
    pub fn new(grid: GridSpec<T>, bc: Bc, b: T, links: &'a GaugeLinks<T>) -> Self {
        Self { grid, bc, kin_w: b, loc_w: T::one(), links }
    }

    pub fn new_weighted(
        grid: GridSpec<T>,
        bc: Bc,
        kin_w: T,
        loc_w: T,
        links: &'a GaugeLinks<T>,
    ) -> Self {
        Self { grid, bc, kin_w, loc_w, links }
    }

    #[inline]
    fn get(x: &[T], k: usize) -> Complex<T> {
        Complex::new(x[2 * k], x[2 * k + 1])
    }

    pub fn energy(&self, x: &[T]) -> T {
        let m = self.grid.points_per_side();
        let h2 = self.grid.cell_area() * self.loc_w;
        let b = self.kin_w;
        let bc = self.bc;
        let links = self.links;
        let half = T::of(0.5);
        reduce_rows(m, Reduction::Ordered, |j| {
            let mut acc = T::zero();
            for i in 0..m {
                let k = j * m + i;
                let u = Self::get(x, k);
                // kinetic edges with tail at this cell (+ wall edges)
                match bc {
                    Bc::MagneticPeriodic(_) => {
                        let ux = Self::get(x, j * m + (i + 1) % m);
                        let uy = Self::get(x, ((j + 1) % m) * m + i);
                        acc += b * (links.link_x(i, j) * ux - u).norm_sqr();
                        acc += b * (links.link_y(i, j) * uy - u).norm_sqr();
                    }
                    Bc::Dirichlet => {
                        if i + 1 < m {
                            acc += b * (links.link_x(i, j) * Self::get(x, k + 1) - u).norm_sqr();
                        } else {
                            acc += b * u.norm_sqr();
                        }
                        if i == 0 {
                            acc += b * u.norm_sqr();
                        }
                        if j + 1 < m {
                            acc += b * (links.link_y(i, j) * Self::get(x, k + m) - u).norm_sqr();
                        } else {
                            acc += b * u.norm_sqr();
                        }
                        if j == 0 {
                            acc += b * u.norm_sqr();
                        }
                    }
                    Bc::Natural => {
                        if i + 1 < m {
                            acc += b * (links.link_x(i, j) * Self::get(x, k + 1) - u).norm_sqr();
                        }
                        if j + 1 < m {
                            acc += b * (links.link_y(i, j) * Self::get(x, k + m) - u).norm_sqr();
                        }
                    }
                }
                let q = u.norm_sqr();
                acc += h2 * (half * q * q - q);
            }
            acc
        })
    }

    /// Gradient with respect to the flat real vector; race-free gather form.
    pub fn gradient(&self, x: &[T], g: &mut [T]) {
        use rayon::prelude::*;
        let m = self.grid.points_per_side();
        let h2 = self.grid.cell_area() * self.loc_w;
        let b = self.kin_w;
        let bc = self.bc;
        let links = self.links;
        let two = T::of(2.0);
        g.par_chunks_mut(2 * m).enumerate().for_each(|(j, row)| {
            for i in 0..m {
                let k = j * m + i;
                let u = Self::get(x, k);
                let mut acc = Complex::new(T::zero(), T::zero());
                match bc {
                    Bc::MagneticPeriodic(_) => {
                        // forward edges (tail here): -r
                        let rx = links.link_x(i, j) * Self::get(x, j * m + (i + 1) % m) - u;
                        let ry = links.link_y(i, j) * Self::get(x, ((j + 1) % m) * m + i) - u;
                        acc = acc - rx - ry;
                        // backward edges (head here): conj(U) r
                        let im = (i + m - 1) % m;
                        let jm = (j + m - 1) % m;
                        let rxm = links.link_x(im, j) * u - Self::get(x, j * m + im);
                        let rym = links.link_y(i, jm) * u - Self::get(x, jm * m + i);
                        acc = acc + links.link_x(im, j).conj() * rxm;
                        acc = acc + links.link_y(i, jm).conj() * rym;
                    }
                    Bc::Dirichlet => {
                        if i + 1 < m {
                            let rx = links.link_x(i, j) * Self::get(x, k + 1) - u;
                            acc = acc - rx;
                        } else {
                            acc = acc + u;
                        }
                        if i > 0 {
                            let rxm = links.link_x(i - 1, j) * u - Self::get(x, k - 1);
                            acc = acc + links.link_x(i - 1, j).conj() * rxm;
                        } else {
                            acc = acc + u;
                        }
                        if j + 1 < m {
                            let ry = links.link_y(i, j) * Self::get(x, k + m) - u;
                            acc = acc - ry;
                        } else {
                            acc = acc + u;
                        }
                        if j > 0 {
                            let rym = links.link_y(i, j - 1) * u - Self::get(x, k - m);
                            acc = acc + links.link_y(i, j - 1).conj() * rym;
                        } else {
                            acc = acc + u;
                        }
                    }
                    Bc::Natural => {
                        if i + 1 < m {
                            let rx = links.link_x(i, j) * Self::get(x, k + 1) - u;
                            acc = acc - rx;
                        }
                        if i > 0 {
                            let rxm = links.link_x(i - 1, j) * u - Self::get(x, k - 1);
                            acc = acc + links.link_x(i - 1, j).conj() * rxm;
                        }
                        if j + 1 < m {
                            let ry = links.link_y(i, j) * Self::get(x, k + m) - u;
                            acc = acc - ry;
                        }
                        if j > 0 {
                            let rym = links.link_y(i, j - 1) * u - Self::get(x, k - m);
                            acc = acc + links.link_y(i, j - 1).conj() * rym;
                        }
                    }
                }
                let de = acc * b + u * (h2 * (u.norm_sqr() - T::one()));
                row[2 * i] = two * de.re;
                row[2 * i + 1] = two * de.im;
            }
        });
    }
}

/// Initialization policy of the cell minimizers.
pub enum InitPolicy<'a, T> {
    /// Seeded complex Gaussian noise scaled to amplitude `sqrt(max(0, 1-b))`.
    Noise { seed: u64 },
    /// Seed with a lowest-Landau-level combination (the Abrikosov minimizer),
    /// rescaled to its optimal amplitude for the given `b`.
    LllSeeded {
        spec: &'a SpectralResult<T>,
        coefficients: &'a [Complex<T>],
    },
}

#[derive(Clone, Copy, Debug)]
pub struct MinimizeOptions<T> {
    pub ncg: NcgOptions<T>,
    /// Fresh-start retries before declaring failure.
    pub outer_restarts: usize,
    pub seed: u64,
}

impl<T: Scalar> Default for MinimizeOptions<T> {
    fn default() -> Self {
        Self {
            ncg: NcgOptions::default(),
            outer_restarts: 8,
            seed: 0,
        }
    }
}

/// A converged (or best-effort) minimizer with its re-verified energy.
#[derive(Clone, Debug)]
pub struct MinResult<T> {
    pub minimizer: ComplexField<T>,
    pub energy: ReducedEnergyBreakdown<T>,
    pub grad_norm: T,
    pub iterations: usize,
    pub converged: bool,
    pub restarts_used: usize,
}

impl<T: Scalar> MinResult<T> {
    pub fn max_modulus(&self) -> T {
        self.minimizer.max_abs()
    }
}

/// Minimize the reduced functional with Dirichlet boundary conditions
/// (`m_0(b, R)`).
pub fn minimize_dirichlet<T: Scalar>(
    cell: CellSpec<T>,
    grid: GridSpec<T>,
    policy: InitPolicy<'_, T>,
    opts: &MinimizeOptions<T>,
) -> Result<MinResult<T>> {
    minimize_reduced(cell, grid, Bc::Dirichlet, policy, opts)
}

/// Minimize the reduced functional over the magnetic-periodic space
/// (`m_p(b, R)`).
pub fn minimize_periodic<T: Scalar>(
    cell: CellSpec<T>,
    grid: GridSpec<T>,
    policy: InitPolicy<'_, T>,
    opts: &MinimizeOptions<T>,
) -> Result<MinResult<T>> {
    let bc = Bc::MagneticPeriodic(cell.n_flux());
    minimize_reduced(cell, grid, bc, policy, opts)
}

fn minimize_reduced<T: Scalar>(
    cell: CellSpec<T>,
    grid: GridSpec<T>,
    bc: Bc,
    policy: InitPolicy<'_, T>,
    opts: &MinimizeOptions<T>,
) -> Result<MinResult<T>> {
    let b = cell.b();
    if (grid.side_length() - cell.side()).abs() > T::of(1e-9) * cell.side() {
        return Err(GlError::GridMismatch(format!(
            "grid side {} does not match cell side {}",
            grid.side_length(),
            cell.side()
        )));
    }
    let links = make_links(Potential::Canonical, grid, bc, T::one())?;
    // b >= 1: the magnetic form dominates the quadratic well, the zero field
    // is the minimizer; skip the optimizer entirely.
    if b >= T::one() {
        return Ok(MinResult {
            minimizer: ComplexField::zeros(grid, bc),
            energy: ReducedEnergyBreakdown::zero(),
            grad_norm: T::zero(),
            iterations: 0,
            converged: true,
            restarts_used: 0,
        });
    }

    let kernel = ReducedKernel::new(grid, bc, b, &links);
    let energy = |x: &[T]| kernel.energy(x);
    let gradf = |x: &[T], g: &mut [T]| kernel.gradient(x, g);

    let mut best: Option<crate::optim::NcgOutcome<T>> = None;
    let mut total_iters = 0usize;
    let mut restarts_used = 0usize;
    for attempt in 0..=opts.outer_restarts {
        let init = match (&policy, attempt) {
            (InitPolicy::LllSeeded { spec, coefficients }, 0) => {
                lll_seed(cell, grid, bc, spec, coefficients, &links)?
            }
            (InitPolicy::Noise { seed }, k) => noise_seed(cell, grid, bc, seed + k as u64),
            (InitPolicy::LllSeeded { .. }, k) => noise_seed(cell, grid, bc, opts.seed + k as u64),
        };
        let out = ncg_minimize(field_to_flat(&init), energy, gradf, &opts.ncg);
        total_iters += out.iterations;
        let better = match &best {
            None => true,
            Some(prev) => out.energy < prev.energy,
        };
        if better {
            best = Some(out);
        }
        let ok = best.as_ref().map(|o| o.converged).unwrap_or(false);
        if ok {
            restarts_used = attempt;
            break;
        }
        restarts_used = attempt;
    }
    let out = best.unwrap();
    if !out.converged {
        return Err(GlError::MinimizeNonConvergence(format!(
            "grad_norm {} after {} iterations and {} restarts",
            out.grad_norm.f64(),
            total_iters,
            restarts_used
        )));
    }
    let minimizer = flat_to_field(grid, bc, &out.x)?;
    let energy = reduced_energy(&minimizer, b, &links, Reduction::Ordered)?;
    Ok(MinResult {
        minimizer,
        energy,
        grad_norm: out.grad_norm,
        iterations: total_iters,
        converged: out.converged,
        restarts_used,
    })
}

fn noise_seed<T: Scalar>(cell: CellSpec<T>, grid: GridSpec<T>, bc: Bc, seed: u64) -> ComplexField<T> {
    let amp = (T::one() - cell.b()).max(T::zero()).sqrt();
    let mut f = ComplexField::random_normal(grid, bc, seed, amp * T::of(0.5));
    if bc == Bc::Dirichlet {
        taper_walls(&mut f);
    }
    f
}

/// Compose the LLL seed and rescale it to the optimal amplitude for `b`.
fn lll_seed<T: Scalar>(
    cell: CellSpec<T>,
    grid: GridSpec<T>,
    bc: Bc,
    spec: &SpectralResult<T>,
    coefficients: &[Complex<T>],
    links: &GaugeLinks<T>,
) -> Result<ComplexField<T>> {
    if !spec.grid.same_as(&grid) {
        return Err(GlError::GridMismatch("LLL seed grid".into()));
    }
    if coefficients.len() > spec.lll_count {
        return Err(GlError::InvalidParameter(
            "more coefficients than LLL modes".into(),
        ));
    }
    let mut v = ComplexField::zeros(grid, Bc::MagneticPeriodic(cell.n_flux()));
    for (k, c) in coefficients.iter().enumerate() {
        v.axpy(*c, &spec.eigenfields[k]);
    }
    let mut v = if bc == Bc::Dirichlet {
        let mut w = ComplexField::from_values(grid, Bc::Dirichlet, v.values().to_vec())?;
        taper_walls(&mut w);
        w
    } else {
        v
    };
    // optimal scalar amplitude: G(t v) = t^2 (b Q - q2) + t^4 q4 / 2
    let q = kinetic_energy(&v, links, Reduction::Ordered)?;
    let d2 = v.abs2();
    let q2 = integrate(&d2, &grid, Reduction::Ordered);
    let d4: Vec<T> = d2.iter().map(|&s| s * s).collect();
    let q4 = integrate(&d4, &grid, Reduction::Ordered);
    let neg_slope = q2 - cell.b() * q;
    let t = if neg_slope > T::zero() && q4 > T::zero() {
        (neg_slope / q4).sqrt()
    } else {
        (T::one() - cell.b()).max(T::zero()).sqrt()
    };
    v.scale(Complex::new(t, T::zero()));
    Ok(v)
}

/// Smoothstep taper to zero over one magnetic length at the cell walls.
fn taper_walls<T: Scalar>(f: &mut ComplexField<T>) {
    let grid = *f.grid();
    let m = grid.points_per_side();
    let half = grid.side_length() * T::of(0.5);
    let width = T::one().min(half * T::of(0.5));
    let smooth = |d: T| {
        let t = (d / width).max(T::zero()).min(T::one());
        t * t * (T::of(3.0) - T::of(2.0) * t)
    };
    let vals = f.values_mut();
    for j in 0..m {
        let y = grid.center_coord(j);
        let wy = smooth(half - y.abs());
        for i in 0..m {
            let x = grid.center_coord(i);
            let w = smooth(half - x.abs()) * wy;
            vals[j * m + i] = vals[j * m + i] * w;
        }
    }
}

/// JSON-lines record of one cell experiment.
#[derive(Serialize, Clone, Debug)]
pub struct CellRecord {
    pub schema_version: u32,
    pub n_flux: u32,
    pub r_side: f64,
    pub b: f64,
    pub m0: Option<f64>,
    pub m_p: Option<f64>,
    pub c_value: Option<f64>,
    pub c_over_r2: Option<f64>,
    pub beta: Option<f64>,
    pub grad_norm: f64,
    pub iterations: usize,
    pub seed: u64,
}

pub fn append_jsonl(path: impl AsRef<std::path::Path>, record: &impl Serialize) -> Result<()> {
    use std::io::Write;
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)?;
    let line = serde_json::to_string(record).map_err(|e| GlError::FileFormat(e.to_string()))?;
    writeln!(f, "{line}")?;
    f.flush()?;
    Ok(())
}
