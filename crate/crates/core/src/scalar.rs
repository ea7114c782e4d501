//! Scalar abstraction: the whole signal path is generic over `f32`/`f64`.

use num_traits::{Float, FromPrimitive, NumAssign};
use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Floating-point scalar used throughout the signal path.
///
/// `rustfft::FftNum` is a supertrait so spectral code does not need extra
/// bounds at every call site.
pub trait Real:
    Float + FromPrimitive + NumAssign + Sum + rustfft::FftNum + Display + Debug + Send + Sync
{
    /// Lossy conversion to `f64` (exact for `f32`/`f64`).
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap()
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Shorthand for pulling `f64` constants into the generic scalar type.
#[inline]
pub fn real<T: Real>(x: f64) -> T {
    T::from_f64(x).unwrap()
}
