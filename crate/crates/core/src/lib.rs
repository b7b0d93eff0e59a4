//! Gauge-covariant numerics for two-dimensional Ginzburg-Landau superconductivity
//! near the second critical field.
//!
//! The crate is organized around five layers:
//!
//! * [`grid`], [`field`], [`links`], [`io`] — uniform grids, complex fields,
//!   Peierls-phase gauge links, quadrature and field-file I/O;
//! * [`operator`], [`spectral`], [`theta`] — the magnetic-periodic Landau
//!   operator on the flux-quantized cell, its low spectrum, the lowest-Landau-level
//!   projector and an independent theta-series oracle for that space;
//! * [`cell`], [`abrikosov`] — the reduced cell functional with Dirichlet and
//!   magnetic-periodic boundary conditions, and the Abrikosov energy on the LLL;
//! * [`domain`] — the full order-parameter/vector-potential problem on a bounded
//!   square, with local observables in small quantized squares;
//! * [`harness`] — parameter schedules, campaign orchestration and verdicts.
//!
//! All numerical kernels are generic over the scalar type through [`Scalar`];
//! `f64` aliases for the main types live at the crate root.

pub mod abrikosov;
pub mod cell;
pub mod domain;
pub mod dst;
pub mod error;
pub mod field;
pub mod grid;
pub mod harness;
pub mod io;
pub mod linalg;
pub mod links;
pub mod operator;
pub mod optim;
pub mod scalar;
pub mod spectral;
pub mod theta;

pub use error::{GlError, Result};
pub use scalar::Scalar;

/// Default scalar type of the workspace binaries and acceptance runs.
pub type Real = f64;
/// Complex scalar over [`Real`].
pub type Cplx = num_complex::Complex<f64>;

pub type GridSpec64 = grid::GridSpec<f64>;
pub type Field64 = field::ComplexField<f64>;
pub type Links64 = links::GaugeLinks<f64>;
pub type GaugeTransform64 = links::GaugeTransform<f64>;
pub type CellSpec64 = spectral::CellSpec<f64>;
pub type SpectralResult64 = spectral::SpectralResult<f64>;
pub type MinResult64 = cell::MinResult<f64>;
pub type AbrikosovResult64 = abrikosov::AbrikosovResult<f64>;
pub type GlParams64 = domain::GlParams<f64>;
pub type DomainState64 = domain::DomainState<f64>;
