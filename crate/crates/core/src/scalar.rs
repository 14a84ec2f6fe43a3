//! Scalar abstraction shared by the numerical modules.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating point scalar: `f32` or `f64`.
///
/// Everything numeric in this crate (quadrature, root finding, limit laws,
/// eigenpairs, sampling weights) is written against this trait. Tolerances
/// that are tighter than the type can represent are widened to a small
/// multiple of machine epsilon.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal; every finite `f64` maps to some value of the type.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).unwrap_or_else(Self::infinity)
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// `max(requested, factor * eps)`.
    #[inline]
    fn floor_tol(requested: f64, factor: f64) -> Self {
        let eps = Self::epsilon();
        let req = Self::lit(requested);
        let floor = eps * Self::lit(factor);
        if req > floor {
            req
        } else {
            floor
        }
    }
}

impl Real for f32 {}
impl Real for f64 {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tolerance_floor_widens_for_f32() {
        assert_eq!(<f64 as Real>::floor_tol(1e-12, 16.0), 1e-12);
        let t = <f32 as Real>::floor_tol(1e-12, 16.0);
        assert!(t > 1e-7 && t < 1e-5);
    }

    #[test]
    fn literal_round_trip() {
        assert_eq!(f32::lit(0.5), 0.5f32);
        assert_eq!(f64::lit(0.25).as_f64(), 0.25);
    }
}
