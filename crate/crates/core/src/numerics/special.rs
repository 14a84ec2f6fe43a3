//! Riemann and Hurwitz zeta functions.

use crate::scalar::Real;

// B_{2k} / (2k)! for k = 1..8.
const BERNOULLI_OVER_FACTORIAL: [f64; 8] = [
    1.0 / 6.0 / 2.0,
    -1.0 / 30.0 / 24.0,
    1.0 / 42.0 / 720.0,
    -1.0 / 30.0 / 40_320.0,
    5.0 / 66.0 / 3_628_800.0,
    -691.0 / 2730.0 / 479_001_600.0,
    7.0 / 6.0 / 87_178_291_200.0,
    -3617.0 / 510.0 / 20_922_789_888_000.0,
];

/// `ζ(s, a) = Σ_{n≥0} (n + a)^{-s}` for `s > 1`, `a > 0`.
///
/// Euler–Maclaurin: the first `N = max(0, ⌈12 - a⌉)` terms are summed
/// directly and the remainder from `a + N >= 12` is approximated by the
/// integral, half the boundary term and Bernoulli corrections through `B_16`.
/// Returns NaN outside the domain.
pub fn hurwitz_zeta<T: Real>(s: T, a: T) -> T {
    if !(s > T::one()) || !(a > T::zero()) || !s.is_finite() || !a.is_finite() {
        return T::nan();
    }
    let twelve = T::lit(12.0);
    let mut sum = T::zero();
    let mut x = a;
    while x < twelve {
        sum += x.powf(-s);
        x += T::one();
    }
    let x_pow = x.powf(-s);
    sum += x * x_pow / (s - T::one()) + T::lit(0.5) * x_pow;
    // Rising factorial s (s+1) ... (s+2k-2) times x^{-s-2k+1}.
    let mut poch = s;
    let mut term_pow = x_pow / x;
    let inv_x2 = (x * x).recip();
    for (k, &c) in BERNOULLI_OVER_FACTORIAL.iter().enumerate() {
        let correction = T::lit(c) * poch * term_pow;
        sum += correction;
        if correction.abs() <= T::epsilon() * sum.abs() {
            break;
        }
        let j = T::from_usize_lossy(2 * k + 1);
        poch = poch * (s + j) * (s + j + T::one());
        term_pow *= inv_x2;
    }
    sum
}

/// Riemann zeta `ζ(s)` for `s > 1`.
pub fn zeta<T: Real>(s: T) -> T {
    hurwitz_zeta(s, T::one())
}
