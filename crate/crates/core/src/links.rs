//! Gauge links: unit-modulus Peierls phases on grid edges.
//!
//! A link on the edge from cell `a` to its forward neighbor `b` carries
//! `exp(-i s \int_a^b A . dl)` for a vector potential `A` and coupling `s`
//! (line integrals by the midpoint rule, exact for affine potentials). For
//! magnetic-periodic boundary conditions the edges crossing the cell boundary
//! additionally carry the magnetic-translation wrap factors, so covariant
//! differences wrap consistently and every plaquette (including wrapped ones)
//! encloses the same flux once the cell is flux-quantized.

use crate::error::{GlError, Result};
use crate::field::{reduce_rows, Bc, ComplexField, Reduction};
use crate::grid::GridSpec;
use crate::scalar::{cis, tau, Scalar};
use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Vector potential handed to [`make_links`].
pub enum Potential<'a, T> {
    /// `A = 0`.
    Zero,
    /// The canonical unit-field potential `A0(x) = (-y/2, x/2)` about the grid
    /// center.
    Canonical,
    /// Cell-centered samples of `(A_1, A_2)`; edge values by two-point
    /// averaging.
    Sampled { ax: &'a [T], ay: &'a [T] },
}

#[derive(Clone, Debug)]
pub struct GaugeLinks<T> {
    grid: GridSpec<T>,
    bc: Bc,
    field_strength: T,
    /// Link from `(i,j)` to `(i+1,j)`, stored for all `M x M` cells.
    horiz: Vec<Complex<T>>,
    /// Link from `(i,j)` to `(i,j+1)`.
    vert: Vec<Complex<T>>,
    /// Magnetic-periodic wrap factor multiplying the `i = M-1` horizontal link
    /// at row `j`; empty unless `bc = MagneticPeriodic`.
    wrap_x: Vec<Complex<T>>,
    /// Wrap factor for the `j = M-1` vertical link at column `i`.
    wrap_y: Vec<Complex<T>>,
}

/// Quantization tolerance on `s R^2 - 2 pi N`. The floating-point stand-in for
/// the exact condition; widens with the scalar's epsilon so f32 grids remain
/// usable.
fn quantization_tol<T: Scalar>(expected: T) -> T {
    let eps_based = T::epsilon() * T::of(64.0) * expected.max(T::one());
    T::of(1e-12).max(eps_based)
}

pub fn check_quantization<T: Scalar>(side_length: T, field_strength: T, n_flux: u32) -> Result<()> {
    let r2 = side_length * side_length * field_strength.abs();
    let expected = tau::<T>() * T::of(n_flux as f64);
    if (r2 - expected).abs() > quantization_tol(expected) {
        return Err(GlError::QuantizationViolation {
            r_squared: r2.f64(),
            expected: expected.f64(),
            n_flux,
        });
    }
    Ok(())
}

impl<T: Scalar> GaugeLinks<T> {
    pub fn grid(&self) -> &GridSpec<T> {
        &self.grid
    }

    pub fn bc(&self) -> Bc {
        self.bc
    }

    pub fn field_strength(&self) -> T {
        self.field_strength
    }

    /// Horizontal link including the wrap factor when the edge crosses the
    /// right cell boundary.
    #[inline]
    pub fn link_x(&self, i: usize, j: usize) -> Complex<T> {
        let m = self.grid.points_per_side();
        let u = self.horiz[j * m + i];
        if i == m - 1 && !self.wrap_x.is_empty() {
            u * self.wrap_x[j]
        } else {
            u
        }
    }

    /// Vertical link including the wrap factor when the edge crosses the top
    /// cell boundary.
    #[inline]
    pub fn link_y(&self, i: usize, j: usize) -> Complex<T> {
        let m = self.grid.points_per_side();
        let u = self.vert[j * m + i];
        if j == m - 1 && !self.wrap_y.is_empty() {
            u * self.wrap_y[i]
        } else {
            u
        }
    }

    /// Oriented plaquette phase based at cell `(i,j)`.
    ///
    /// For magnetic-periodic links all `M x M` plaquettes exist (indices wrap);
    /// otherwise only `i, j < M-1`.
    pub fn plaquette(&self, i: usize, j: usize) -> Complex<T> {
        let m = self.grid.points_per_side();
        let periodic = matches!(self.bc, Bc::MagneticPeriodic(_));
        if !periodic {
            assert!(i < m - 1 && j < m - 1, "plaquette out of range for open bc");
        }
        let ip = (i + 1) % m;
        let jp = (j + 1) % m;
        self.link_x(i, j) * self.link_y(ip, j) * self.link_x(i, jp).conj() * self.link_y(i, j).conj()
    }

    pub fn max_modulus_deviation(&self) -> T {
        let dev = |v: &[Complex<T>]| {
            v.iter()
                .map(|u| (u.norm() - T::one()).abs())
                .fold(T::zero(), T::max)
        };
        dev(&self.horiz)
            .max(dev(&self.vert))
            .max(dev(&self.wrap_x))
            .max(dev(&self.wrap_y))
    }

    /// Build links directly from precomputed edge line integrals
    /// `int_x[(i,j)] = \int A . dl` along the forward x-edge (and likewise y).
    /// Wrap factors are attached for magnetic-periodic boundary conditions.
    pub fn from_edge_integrals(
        grid: GridSpec<T>,
        bc: Bc,
        field_strength: T,
        int_x: &[T],
        int_y: &[T],
    ) -> Result<Self> {
        let n = grid.num_cells();
        if int_x.len() != n || int_y.len() != n {
            return Err(GlError::GridMismatch("edge integral length".into()));
        }
        let horiz = int_x.iter().map(|&a| cis(-field_strength * a)).collect();
        let vert = int_y.iter().map(|&a| cis(-field_strength * a)).collect();
        let (wrap_x, wrap_y) = match bc {
            Bc::MagneticPeriodic(n_flux) => {
                check_quantization(grid.side_length(), field_strength, n_flux)?;
                wrap_factors(&grid, field_strength)
            }
            _ => (Vec::new(), Vec::new()),
        };
        Ok(Self {
            grid,
            bc,
            field_strength,
            horiz,
            vert,
            wrap_x,
            wrap_y,
        })
    }
}

/// Magnetic-translation wrap factors of the flux-quantized cell:
/// `u(x+R, y) = exp(i s R y / 2) u(x, y)` and
/// `u(x, y+R) = exp(-i s R x / 2) u(x, y)`.
fn wrap_factors<T: Scalar>(grid: &GridSpec<T>, s: T) -> (Vec<Complex<T>>, Vec<Complex<T>>) {
    let m = grid.points_per_side();
    let r = grid.side_length();
    let half = T::of(0.5);
    let wx = (0..m)
        .map(|j| cis(s * r * grid.center_coord(j) * half))
        .collect();
    let wy = (0..m)
        .map(|i| cis(-s * r * grid.center_coord(i) * half))
        .collect();
    (wx, wy)
}

/// Assemble gauge links for a potential on a grid.
///
/// Preconditions: for `Bc::MagneticPeriodic(N)` the cell must be
/// flux-quantized (`s L^2 = 2 pi N` within tolerance) and the potential must
/// be [`Potential::Canonical`] — the wrap factors encode periodicity relative
/// to the unit-field gauge.
pub fn make_links<T: Scalar>(
    potential: Potential<'_, T>,
    grid: GridSpec<T>,
    bc: Bc,
    field_strength: T,
) -> Result<GaugeLinks<T>> {
    if !field_strength.is_finite() {
        return Err(GlError::InvalidParameter("field_strength not finite".into()));
    }
    if matches!(bc, Bc::MagneticPeriodic(_)) && !matches!(potential, Potential::Canonical) {
        return Err(GlError::InvalidParameter(
            "magnetic-periodic links require the canonical potential".into(),
        ));
    }
    let m = grid.points_per_side();
    let n = grid.num_cells();
    let h = grid.spacing();
    let half = T::of(0.5);
    let mut int_x = vec![T::zero(); n];
    let mut int_y = vec![T::zero(); n];
    match potential {
        Potential::Zero => {}
        Potential::Canonical => {
            // A0 = (-y/2, x/2); affine, so the midpoint rule is exact.
            for j in 0..m {
                let y = grid.center_coord(j);
                for i in 0..m {
                    let x = grid.center_coord(i);
                    int_x[j * m + i] = h * (-y * half);
                    int_y[j * m + i] = h * (x * half);
                }
            }
        }
        Potential::Sampled { ax, ay } => {
            if ax.len() != n || ay.len() != n {
                return Err(GlError::GridMismatch("sampled potential length".into()));
            }
            for j in 0..m {
                for i in 0..m {
                    let k = j * m + i;
                    let axm = if i + 1 < m {
                        (ax[k] + ax[j * m + i + 1]) * half
                    } else {
                        ax[k]
                    };
                    let aym = if j + 1 < m {
                        (ay[k] + ay[(j + 1) * m + i]) * half
                    } else {
                        ay[k]
                    };
                    int_x[k] = h * axm;
                    int_y[k] = h * aym;
                }
            }
        }
    }
    GaugeLinks::from_edge_integrals(grid, bc, field_strength, &int_x, &int_y)
}

/// Links for an analytic potential, evaluated at exact edge midpoints.
pub fn make_links_analytic<T: Scalar>(
    potential: impl Fn(T, T) -> (T, T),
    grid: GridSpec<T>,
    bc: Bc,
    field_strength: T,
) -> Result<GaugeLinks<T>> {
    if matches!(bc, Bc::MagneticPeriodic(_)) {
        return Err(GlError::InvalidParameter(
            "magnetic-periodic links require the canonical potential".into(),
        ));
    }
    let m = grid.points_per_side();
    let h = grid.spacing();
    let half = T::of(0.5);
    let mut int_x = vec![T::zero(); grid.num_cells()];
    let mut int_y = vec![T::zero(); grid.num_cells()];
    for j in 0..m {
        let y = grid.center_coord(j);
        for i in 0..m {
            let x = grid.center_coord(i);
            let (a1, _) = potential(x + h * half, y);
            let (_, a2) = potential(x, y + h * half);
            int_x[j * m + i] = h * a1;
            int_y[j * m + i] = h * a2;
        }
    }
    GaugeLinks::from_edge_integrals(grid, bc, field_strength, &int_x, &int_y)
}

/// Forward-difference gauge-covariant kinetic density,
/// `sum_d |U_d(x) u(x + h e_d) - u(x)|^2 / h^2` per cell.
///
/// Dirichlet fields see their ghost neighbors as zero, which adds the
/// `|u|^2/h^2` terms of the H^1_0 form on the boundary ring; natural fields
/// simply have no forward edge on the high sides.
pub fn covariant_energy_density<T: Scalar>(
    u: &ComplexField<T>,
    links: &GaugeLinks<T>,
) -> Result<Vec<T>> {
    check_compat(u, links)?;
    let grid = u.grid();
    let m = grid.points_per_side();
    let inv_h2 = T::one() / grid.cell_area();
    let vals = u.values();
    let mut out = vec![T::zero(); grid.num_cells()];
    let bc = u.bc();
    for j in 0..m {
        for i in 0..m {
            let k = j * m + i;
            let mut acc = T::zero();
            // forward x
            match bc {
                Bc::MagneticPeriodic(_) => {
                    let head = vals[j * m + (i + 1) % m];
                    acc += (links.link_x(i, j) * head - vals[k]).norm_sqr();
                }
                Bc::Dirichlet => {
                    if i + 1 < m {
                        acc += (links.link_x(i, j) * vals[k + 1] - vals[k]).norm_sqr();
                    } else {
                        acc += vals[k].norm_sqr();
                    }
                    if i == 0 {
                        // ghost edge entering from the left wall
                        acc += vals[k].norm_sqr();
                    }
                }
                Bc::Natural => {
                    if i + 1 < m {
                        acc += (links.link_x(i, j) * vals[k + 1] - vals[k]).norm_sqr();
                    }
                }
            }
            // forward y
            match bc {
                Bc::MagneticPeriodic(_) => {
                    let head = vals[((j + 1) % m) * m + i];
                    acc += (links.link_y(i, j) * head - vals[k]).norm_sqr();
                }
                Bc::Dirichlet => {
                    if j + 1 < m {
                        acc += (links.link_y(i, j) * vals[k + m] - vals[k]).norm_sqr();
                    } else {
                        acc += vals[k].norm_sqr();
                    }
                    if j == 0 {
                        acc += vals[k].norm_sqr();
                    }
                }
                Bc::Natural => {
                    if j + 1 < m {
                        acc += (links.link_y(i, j) * vals[k + m] - vals[k]).norm_sqr();
                    }
                }
            }
            out[k] = acc * inv_h2;
        }
    }
    Ok(out)
}

/// Total covariant kinetic energy `h^2 sum` of [`covariant_energy_density`],
/// computed fused and in parallel.
pub fn kinetic_energy<T: Scalar>(
    u: &ComplexField<T>,
    links: &GaugeLinks<T>,
    mode: Reduction,
) -> Result<T> {
    check_compat(u, links)?;
    let grid = u.grid();
    let m = grid.points_per_side();
    let vals = u.values();
    let bc = u.bc();
    let s = reduce_rows(m, mode, |j| {
        let mut acc = T::zero();
        for i in 0..m {
            let k = j * m + i;
            match bc {
                Bc::MagneticPeriodic(_) => {
                    acc += (links.link_x(i, j) * vals[j * m + (i + 1) % m] - vals[k]).norm_sqr();
                    acc += (links.link_y(i, j) * vals[((j + 1) % m) * m + i] - vals[k]).norm_sqr();
                }
                Bc::Dirichlet => {
                    if i + 1 < m {
                        acc += (links.link_x(i, j) * vals[k + 1] - vals[k]).norm_sqr();
                    } else {
                        acc += vals[k].norm_sqr();
                    }
                    if i == 0 {
                        acc += vals[k].norm_sqr();
                    }
                    if j + 1 < m {
                        acc += (links.link_y(i, j) * vals[k + m] - vals[k]).norm_sqr();
                    } else {
                        acc += vals[k].norm_sqr();
                    }
                    if j == 0 {
                        acc += vals[k].norm_sqr();
                    }
                }
                Bc::Natural => {
                    if i + 1 < m {
                        acc += (links.link_x(i, j) * vals[k + 1] - vals[k]).norm_sqr();
                    }
                    if j + 1 < m {
                        acc += (links.link_y(i, j) * vals[k + m] - vals[k]).norm_sqr();
                    }
                }
            }
        }
        acc
    });
    Ok(s)
}

fn check_compat<T: Scalar>(u: &ComplexField<T>, links: &GaugeLinks<T>) -> Result<()> {
    if !u.grid().same_as(links.grid()) {
        return Err(GlError::GridMismatch(
            "field and links live on different grids".into(),
        ));
    }
    if u.bc() != links.bc() {
        return Err(GlError::BcMismatch(format!(
            "field {} vs links {}",
            u.bc().label(),
            links.bc().label()
        )));
    }
    Ok(())
}

/// A real gauge function `phi` with the action `u -> e^{i s phi} u`,
/// `A -> A + grad phi`.
#[derive(Clone, Debug)]
pub struct GaugeTransform<T> {
    grid: GridSpec<T>,
    phase: Vec<T>,
}

impl<T: Scalar> GaugeTransform<T> {
    pub fn new(grid: GridSpec<T>, phase: Vec<T>) -> Result<Self> {
        if phase.len() != grid.num_cells() {
            return Err(GlError::GridMismatch("phase sample count".into()));
        }
        if phase.iter().any(|p| !p.is_finite()) {
            return Err(GlError::NonFinite("gauge phase".into()));
        }
        Ok(Self { grid, phase })
    }

    pub fn constant(grid: GridSpec<T>, value: T) -> Self {
        Self {
            grid,
            phase: vec![value; grid.num_cells()],
        }
    }

    /// A seeded smooth gauge function: a few low-frequency Fourier modes,
    /// cell-periodic so it is admissible for every boundary condition.
    pub fn random_smooth(grid: GridSpec<T>, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e3779b97f4a7c15);
        let m = grid.points_per_side();
        let l = grid.side_length();
        let modes: Vec<(f64, i32, i32, f64)> = (0..3)
            .map(|_| {
                (
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(1..4),
                    rng.gen_range(-3..4),
                    rng.gen_range(0.0..std::f64::consts::TAU),
                )
            })
            .collect();
        let mut phase = vec![T::zero(); grid.num_cells()];
        for j in 0..m {
            let y = grid.center_coord(j).f64();
            for i in 0..m {
                let x = grid.center_coord(i).f64();
                let mut p = 0.0;
                for &(a, px, qy, th) in &modes {
                    p += a * (std::f64::consts::TAU * (px as f64 * x + qy as f64 * y) / l.f64()
                        + th)
                        .sin();
                }
                phase[j * m + i] = T::of(p);
            }
        }
        Self { grid, phase }
    }

    pub fn phase(&self) -> &[T] {
        &self.phase
    }
}

/// Apply a gauge transform to a field and its links.
///
/// Returns `u' = e^{i s phi} u` and links multiplied by the edge increments of
/// `phi`, so every covariant energy is left invariant. For magnetic-periodic
/// cells the gauge function is read with periodic wrap (callers should pass
/// cell-periodic `phi`, which preserves the wrapped space).
pub fn apply_gauge<T: Scalar>(
    u: &ComplexField<T>,
    links: &GaugeLinks<T>,
    g: &GaugeTransform<T>,
    coupling: T,
) -> Result<(ComplexField<T>, GaugeLinks<T>)> {
    check_compat(u, links)?;
    if !u.grid().same_as(&g.grid) {
        return Err(GlError::GridMismatch("gauge transform grid".into()));
    }
    let m = u.grid().points_per_side();
    let mut vals = u.values().to_vec();
    for (v, &p) in vals.iter_mut().zip(g.phase.iter()) {
        *v = *v * cis(coupling * p);
    }
    let u2 = ComplexField::from_values(*u.grid(), u.bc(), vals)?;

    let mut horiz = links.horiz.clone();
    let mut vert = links.vert.clone();
    for j in 0..m {
        for i in 0..m {
            let k = j * m + i;
            let head_x = g.phase[j * m + (i + 1) % m];
            let head_y = g.phase[((j + 1) % m) * m + i];
            // A -> A + grad(phi) multiplies exp(-i s int A.dl) by
            // exp(-i s (phi_head - phi_tail)).
            horiz[k] = horiz[k] * cis(-coupling * (head_x - g.phase[k]));
            vert[k] = vert[k] * cis(-coupling * (head_y - g.phase[k]));
        }
    }
    Ok((
        u2,
        GaugeLinks {
            grid: *links.grid(),
            bc: links.bc(),
            field_strength: links.field_strength(),
            horiz,
            vert,
            wrap_x: links.wrap_x.clone(),
            wrap_y: links.wrap_y.clone(),
        },
    ))
}
