//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Floating point type the signal pipeline is generic over.
///
/// Implemented for `f32` and `f64`. Metadata that is not part of the
/// numerical path (sampling rates, ADC gains, times in seconds) stays `f64`.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + serde::Serialize
    + serde::de::DeserializeOwned
    + 'static
{
    /// Converts an `f64` constant. Never fails for `f32`/`f64`.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 constant must be representable")
    }

    #[inline]
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count must be representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite scalar converts to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Arithmetic mean; zero for an empty slice.
pub fn mean<T: Real>(x: &[T]) -> T {
    if x.is_empty() {
        return T::zero();
    }
    x.iter().copied().sum::<T>() / T::from_count(x.len())
}

/// Root mean square; zero for an empty slice.
pub fn rms<T: Real>(x: &[T]) -> T {
    if x.is_empty() {
        return T::zero();
    }
    (x.iter().map(|&v| v * v).sum::<T>() / T::from_count(x.len())).sqrt()
}

/// Median of a slice (average of the two central values for even lengths).
pub fn median<T: Real>(x: &[T]) -> Option<T> {
    if x.is_empty() {
        return None;
    }
    let mut v = x.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / T::lit(2.0)
    })
}

/// Population standard deviation.
pub fn std_dev<T: Real>(x: &[T]) -> T {
    if x.is_empty() {
        return T::zero();
    }
    let m = mean(x);
    (x.iter().map(|&v| (v - m) * (v - m)).sum::<T>() / T::from_count(x.len())).sqrt()
}
