//! Analytic oracle for the lowest Landau level on the quantized cell.
//!
//! The LLL of the unit-field Landau operator in symmetric gauge consists of
//! `f(z) exp(-|z|^2/4)` with `f` entire; on the magnetic-periodic cell the
//! admissible `f` form an `N`-dimensional space spanned by Gaussian-dressed
//! theta series. With `k_m = j + m N` the basis element `j` reads
//!
//! `u_j(x, y) = exp(i x y / 2 - y^2 / 2) * sum_m exp(-pi N m^2 - 2 pi j m)
//!              * exp(-2 pi k_m y / R) * exp(2 pi i k_m x / R)`,
//!
//! which satisfies the cell's wrap phases identically in exact arithmetic.
//! The series converges superexponentially; terms are truncated at machine
//! precision and each basis element is rescaled by its largest term exponent
//! to keep magnitudes representable.

use crate::error::{GlError, Result};
use crate::field::{Bc, ComplexField};
use crate::grid::GridSpec;
use crate::scalar::Scalar;
use crate::spectral::CellSpec;
use num_complex::Complex;

/// Largest flux supported by the oracle.
pub const MAX_ORACLE_FLUX: u32 = 36;

const WINDOW_GUARD: i64 = 400;

/// Term window: indices `m` whose terms can reach `exp(-70)` of the leading
/// one anywhere on the cell.
fn term_window(n_flux: u32, j: u32) -> Result<(i64, i64)> {
    let n = n_flux as f64;
    let reach = (70.0 / (std::f64::consts::PI * n)).sqrt() + 1.5;
    let center = -(j as f64) / n;
    let lo = (center - reach).floor() as i64 - 1;
    let hi = (center + reach).ceil() as i64 + 1;
    if hi - lo > WINDOW_GUARD {
        return Err(GlError::EigenNonConvergence(format!(
            "theta series window {lo}..{hi} too wide"
        )));
    }
    Ok((lo, hi))
}

/// Evaluate basis element `j` at a point, rescaled by `exp(-peak)`.
fn eval_scaled(n_flux: u32, r: f64, j: u32, peak: f64, x: f64, y: f64) -> Result<Complex<f64>> {
    let n = n_flux as f64;
    let pi = std::f64::consts::PI;
    let (lo, hi) = term_window(n_flux, j)?;
    let mut acc = Complex::new(0.0, 0.0);
    for m in lo..=hi {
        let k_m = j as f64 + m as f64 * n;
        let log_mag =
            -pi * n * (m as f64) * (m as f64) - 2.0 * pi * (j as f64) * (m as f64)
                - 2.0 * pi * k_m * y / r
                - 0.5 * y * y
                - peak;
        if log_mag < -745.0 {
            continue;
        }
        let phase = 0.5 * x * y + 2.0 * pi * k_m * x / r;
        acc += Complex::from_polar(log_mag.exp(), phase);
    }
    Ok(acc)
}

/// Peak exponent of basis element `j` over the cell (coarse sweep in `y`; the
/// magnitude is independent of `x`).
fn peak_exponent(n_flux: u32, r: f64, j: u32) -> Result<f64> {
    let n = n_flux as f64;
    let pi = std::f64::consts::PI;
    let (lo, hi) = term_window(n_flux, j)?;
    let mut peak = f64::NEG_INFINITY;
    let samples = 64;
    for s in 0..=samples {
        let y = -r / 2.0 + r * (s as f64) / (samples as f64);
        for m in lo..=hi {
            let k_m = j as f64 + m as f64 * n;
            let e = -pi * n * (m as f64) * (m as f64)
                - 2.0 * pi * (j as f64) * (m as f64)
                - 2.0 * pi * k_m * y / r
                - 0.5 * y * y;
            peak = peak.max(e);
        }
    }
    Ok(peak)
}

/// Continuum-formula evaluation of oracle element `j` at `(x, y)` (used by
/// tests to verify the wrap phases directly).
pub fn theta_eval<T: Scalar>(cell: &CellSpec<T>, j: u32, x: T, y: T) -> Result<Complex<T>> {
    let r = cell.side().f64();
    let peak = peak_exponent(cell.n_flux(), r, j)?;
    let v = eval_scaled(cell.n_flux(), r, j, peak, x.f64(), y.f64())?;
    Ok(Complex::new(T::of(v.re), T::of(v.im)))
}

/// Sample the `N` theta-series LLL basis elements on a grid, each normalized
/// to unit discrete L^2 norm.
pub fn theta_lll_fields<T: Scalar>(
    cell: &CellSpec<T>,
    grid: GridSpec<T>,
) -> Result<Vec<ComplexField<T>>> {
    let n_flux = cell.n_flux();
    if n_flux > MAX_ORACLE_FLUX {
        return Err(GlError::InvalidParameter(format!(
            "theta oracle supports N <= {MAX_ORACLE_FLUX}, got {n_flux}"
        )));
    }
    let r = cell.side().f64();
    if (grid.side_length().f64() - r).abs() > 1e-9 * r.max(1.0) {
        return Err(GlError::GridMismatch(
            "theta oracle grid must cover the quantized cell".into(),
        ));
    }
    let m = grid.points_per_side();
    let mut out = Vec::with_capacity(n_flux as usize);
    for j in 0..n_flux {
        let peak = peak_exponent(n_flux, r, j)?;
        let mut values = Vec::with_capacity(grid.num_cells());
        for jy in 0..m {
            let y = grid.center_coord(jy).f64();
            for ix in 0..m {
                let x = grid.center_coord(ix).f64();
                let v = eval_scaled(n_flux, r, j, peak, x, y)?;
                values.push(Complex::new(T::of(v.re), T::of(v.im)));
            }
        }
        let mut field = ComplexField::from_values(grid, Bc::MagneticPeriodic(n_flux), values)?;
        let norm = field.norm_l2(crate::field::Reduction::Ordered);
        if !(norm > T::zero()) {
            return Err(GlError::NonFinite("theta basis element vanished".into()));
        }
        field.scale(Complex::new(T::one() / norm, T::zero()));
        out.push(field);
    }
    Ok(out)
}
