//! Scalar abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display};

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating-point scalar usable by the geometry, GP and LATE code.
///
/// Implemented for `f32` and `f64`. Tolerances and default jitter levels are
/// tuned for `f64`; `f32` is supported for small, well-conditioned problems.
pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal into `Self`.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable in scalar type")
    }

    #[inline]
    fn infinity() -> Self {
        Self::lit(f64::INFINITY)
    }

    #[inline]
    fn is_finite_value(self) -> bool {
        self.as_f64().is_finite()
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Standard normal cumulative distribution function.
pub fn normal_cdf<T: Real>(x: T) -> T {
    let x = x.as_f64();
    T::lit(0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2))
}

/// `z` such that `normal_cdf(z) = 0.975`.
pub const Z_975: f64 = 1.959964;
