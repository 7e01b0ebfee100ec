//! Scalar abstraction for the numeric core.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, NumAssign, NumCast};

/// Floating-point scalar used throughout the numeric core.
///
/// Implemented for `f32` and `f64`. The `Send + Sync` bounds let scenario
/// evaluations run on a worker pool without further ceremony.
pub trait Scalar:
    Float + NumAssign + NumCast + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Lift an `f64` constant into the scalar type.
    fn c(v: f64) -> Self {
        <Self as NumCast>::from(v).expect("constant representable in scalar type")
    }

    /// Lossy conversion to `f64` (exact for `f32`/`f64`).
    fn f64(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants_round_trip() {
        assert_eq!(f64::c(3.5e-5), 3.5e-5);
        assert_eq!(f32::c(0.5), 0.5f32);
        assert_eq!(2.25f64.f64(), 2.25);
    }
}
