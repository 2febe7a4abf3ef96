//! Scalar abstraction: the numeric type all core math is generic over.

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Floating-point scalar usable throughout the engine: `f32` or `f64`.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Send + Sync + Debug + Display + 'static
{
    /// Lossless-enough conversion from `f64` for constants and tolerances.
    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 converts to any Real")
    }

    /// Widen to `f64` for reporting and on-disk matrix payloads.
    fn as_f64(self) -> f64 {
        self.to_f64().expect("Real converts to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}
