//! Scalar abstraction: every kernel in this crate is written against [`Scalar`]
//! and instantiated at `f32` or `f64`.

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

/// Floating-point scalar usable by the solvers.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + Default
    + Debug
    + Display
    + LowerExp
    + Send
    + Sync
    + 'static
{
    /// Lossless-enough conversion from `f64` literals and tolerances.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 conversion")
    }

    /// Conversion back to `f64` for reporting and serialization.
    fn f64(self) -> f64 {
        self.to_f64().expect("f64 conversion")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// 2π as a `T`.
pub fn tau<T: Scalar>() -> T {
    T::PI() + T::PI()
}

/// Complex unit phase `exp(i·theta)`.
pub fn cis<T: Scalar>(theta: T) -> Complex<T> {
    Complex::new(theta.cos(), theta.sin())
}
