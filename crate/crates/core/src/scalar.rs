//! Floating-point scalar abstraction for the numeric core.

use std::fmt::{Debug, Display};
use std::str::FromStr;

/// Scalar type for model parameters, features, and losses: `f32` or `f64`.
///
/// Random draws are always generated in `f64` and converted, so a run is
/// reproducible regardless of the instantiation.
pub trait Scalar:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::NumAssign
    + FromStr
    + Display
    + Debug
    + Send
    + Sync
    + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Convert an `f64` constant into the working scalar type.
///
/// Panics only if the target type cannot represent any finite `f64`,
/// which is impossible for `f32`/`f64`.
#[inline]
pub fn cast<S: Scalar>(x: f64) -> S {
    S::from_f64(x).expect("finite f64 converts to scalar")
}
