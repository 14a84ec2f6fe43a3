//! Numerical building blocks: adaptive quadrature, bracketing root finders
//! and the few special functions the fitness families need.

pub mod quad;
pub mod roots;
pub mod special;

pub use quad::{integrate, integrate_pole, integrate_to_infinity, QuadError, QuadOptions, Quadrature};
pub use roots::{bisect, expand_upward, BisectionOutcome, RootError, RootOptions};
pub use special::{hurwitz_zeta, zeta};
