//! Scalar abstraction shared by every numerical routine in the crate.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Real floating point scalar (`f32` or `f64`).
///
/// Everything in the crate is generic over this trait. `RealField` supplies the
/// linear algebra and elementary functions, `num-traits` the lossless
/// conversions used at I/O boundaries, and together they satisfy the FFT
/// scalar bound of `rustfft`.
pub trait Real: RealField + Copy + FromPrimitive + ToPrimitive {
    /// Converts an `f64` literal or parameter into this scalar type.
    #[inline]
    fn lit(x: f64) -> Self {
        nalgebra::convert(x)
    }

    /// Lossy conversion to `f64` for reporting.
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Shorthand for `T::lit`.
#[inline]
pub(crate) fn lit<T: Real>(x: f64) -> T {
    T::lit(x)
}

#[inline]
pub(crate) fn from_usize<T: Real>(n: usize) -> T {
    T::lit(n as f64)
}

/// Nearest integer number of steps `x / dt`, or `None` if the ratio is not
/// within `1e-6` relative of an integer.
pub(crate) fn steps_of<T: Real>(x: T, dt: T) -> Option<usize> {
    let ratio = (x / dt).as_f64();
    if !ratio.is_finite() || ratio < -1e-9 {
        return None;
    }
    let n = ratio.round();
    if (ratio - n).abs() <= 1e-6 * n.max(1.0) {
        Some(n as usize)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_rounding() {
        assert_eq!(steps_of(1.0_f64, 0.01), Some(100));
        assert_eq!(steps_of(0.3_f64, 0.1), Some(3));
        assert_eq!(steps_of(0.35_f64, 0.1), None);
        assert_eq!(steps_of(-1.0_f64, 0.1), None);
        assert_eq!(steps_of(2.0_f32, 0.5), Some(4));
    }
}
