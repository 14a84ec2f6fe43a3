//! Bracketing root finders.

use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootOptions {
    /// Stop once `|g(x)| <= f_tol`.
    pub f_tol: f64,
    /// Stop once the bracket is narrower than `x_rel_tol * max(|x|, 1)`.
    pub x_rel_tol: f64,
    pub max_iter: usize,
}

impl Default for RootOptions {
    fn default() -> Self {
        Self {
            f_tol: 1e-12,
            x_rel_tol: 0.0,
            max_iter: 2000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BisectionOutcome<T> {
    pub root: T,
    pub residual: T,
    pub lo: T,
    pub hi: T,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RootError {
    #[error("no sign change on [{lo}, {hi}]: g(lo) = {g_lo}, g(hi) = {g_hi}")]
    NoSignChange { lo: f64, hi: f64, g_lo: f64, g_hi: f64 },
    #[error("function value not finite at x = {x}")]
    NonFinite { x: f64 },
    #[error("bracket expansion gave up at x = {x}")]
    BracketNotFound { x: f64 },
}

/// Bisection on `[lo, hi]`, where `g(lo)` and `g(hi)` have opposite signs.
///
/// Runs until the residual meets `f_tol`, the bracket meets `x_rel_tol`, the
/// midpoint no longer separates the endpoints, or `max_iter` is reached. The
/// returned root is whichever endpoint or midpoint has the smallest residual.
pub fn bisect<T, G>(mut g: G, lo: T, hi: T, opts: RootOptions) -> Result<BisectionOutcome<T>, RootError>
where
    T: Real,
    G: FnMut(T) -> T,
{
    let (mut lo, mut hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    let mut g_lo = g(lo);
    let mut g_hi = g(hi);
    if g_lo.is_nan() {
        return Err(RootError::NonFinite { x: lo.as_f64() });
    }
    if g_hi.is_nan() {
        return Err(RootError::NonFinite { x: hi.as_f64() });
    }
    let f_tol = T::floor_tol(opts.f_tol, 4.0);
    let x_tol = T::lit(opts.x_rel_tol);
    if g_lo == T::zero() {
        return Ok(outcome(lo, g_lo, lo, hi, 0));
    }
    if g_hi == T::zero() {
        return Ok(outcome(hi, g_hi, lo, hi, 0));
    }
    if g_lo.signum() == g_hi.signum() {
        return Err(RootError::NoSignChange {
            lo: lo.as_f64(),
            hi: hi.as_f64(),
            g_lo: g_lo.as_f64(),
            g_hi: g_hi.as_f64(),
        });
    }
    let mut best = if g_lo.abs() <= g_hi.abs() {
        (lo, g_lo)
    } else {
        (hi, g_hi)
    };
    let mut iterations = 0;
    while iterations < opts.max_iter {
        if best.1.abs() <= f_tol {
            break;
        }
        if hi - lo <= x_tol * lo.abs().max(hi.abs()).max(T::one()) {
            break;
        }
        let mid = lo + (hi - lo) * T::lit(0.5);
        if mid <= lo || mid >= hi {
            break;
        }
        iterations += 1;
        let g_mid = g(mid);
        if g_mid.is_nan() {
            return Err(RootError::NonFinite { x: mid.as_f64() });
        }
        if g_mid.abs() < best.1.abs() {
            best = (mid, g_mid);
        }
        if g_mid == T::zero() {
            lo = mid;
            hi = mid;
            g_lo = g_mid;
            g_hi = g_mid;
            break;
        }
        if g_mid.signum() == g_lo.signum() {
            lo = mid;
            g_lo = g_mid;
        } else {
            hi = mid;
            g_hi = g_mid;
        }
    }
    let _ = (g_lo, g_hi);
    Ok(outcome(best.0, best.1, lo, hi, iterations))
}

fn outcome<T: Real>(root: T, residual: T, lo: T, hi: T, iterations: usize) -> BisectionOutcome<T> {
    BisectionOutcome {
        root,
        residual,
        lo,
        hi,
        iterations,
    }
}

/// Doubles `x` starting at `start > 0` until `pred(x)` holds.
pub fn expand_upward<T, P>(start: T, mut pred: P, max_doublings: usize) -> Result<T, RootError>
where
    T: Real,
    P: FnMut(T) -> bool,
{
    let mut x = start;
    for _ in 0..max_doublings {
        if pred(x) {
            return Ok(x);
        }
        x = x + x;
        if !x.is_finite() {
            break;
        }
    }
    Err(RootError::BracketNotFound { x: x.as_f64() })
}
