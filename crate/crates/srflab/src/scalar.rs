//! Scalar abstraction for the numeric core.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

/// Floating point scalar the whole crate is generic over.
///
/// `f32` and `f64` both implement it; tolerances in the crate are stated for
/// `f64` and may be unreachable in `f32`.
pub trait Scalar:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + Sum
    + Debug
    + Display
    + LowerExp
    + Send
    + Sync
    + 'static
{
    /// Shorthand for lossy conversion from `f64` constants.
    fn c(v: f64) -> Self {
        Self::from_f64(v).expect("f64 constant not representable")
    }

    /// Lossy conversion to `f64` for reporting.
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn from_usize_lossy(v: usize) -> Self {
        Self::from_usize(v).expect("usize not representable")
    }

    /// A tolerance stated for `f64`, floored at `100 ε` of the actual
    /// scalar so that `f32` instantiations stay usable.
    fn tol(base: f64) -> Self {
        Self::c(base).max(Self::epsilon() * Self::c(100.0))
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
