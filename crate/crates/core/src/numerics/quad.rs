//! Globally adaptive Gauss–Kronrod (7/15) quadrature.
//!
//! The interval with the largest error estimate is bisected until the summed
//! estimate drops under `max(abs_tol, rel_tol * |I|)`. Nodes never touch the
//! interval endpoints, so integrable endpoint singularities are tolerated.
//! [`integrate_pole`] adds the logarithmic change of variables used for
//! integrands of the form `w(x) / (pole - x)` with the pole at or just beyond
//! the upper limit.
#![allow(clippy::excessive_precision)]

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use thiserror::Error;

use crate::scalar::Real;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

// Gauss weights for XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-11,
            rel_tol: 1e-12,
            max_intervals: 4000,
        }
    }
}

impl QuadOptions {
    pub fn with_abs_tol(mut self, tol: f64) -> Self {
        self.abs_tol = tol;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature<T> {
    pub value: T,
    pub abs_error: T,
    pub intervals: usize,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuadError {
    #[error("integrand is not finite near x = {x}")]
    NonFinite { x: f64 },
    #[error("no convergence after {intervals} subintervals: value {value}, error estimate {error}")]
    NoConvergence { value: f64, error: f64, intervals: usize },
    #[error("invalid integration bounds [{a}, {b}]")]
    InvalidBounds { a: f64, b: f64 },
}

struct Segment<T> {
    a: T,
    b: T,
    value: T,
    error: T,
}

impl<T: Real> PartialEq for Segment<T> {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl<T: Real> Eq for Segment<T> {}
impl<T: Real> PartialOrd for Segment<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<T: Real> Ord for Segment<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.partial_cmp(&other.error).unwrap_or(Ordering::Equal)
    }
}

fn kronrod15<T: Real, F: Fn(T) -> T>(f: &F, a: T, b: T) -> Result<(T, T), QuadError> {
    let half = T::lit(0.5);
    let center = half * (a + b);
    let radius = half * (b - a);
    let fc = f(center);
    if !fc.is_finite() {
        return Err(QuadError::NonFinite { x: center.as_f64() });
    }
    let mut kronrod = fc * T::lit(WGK[7]);
    let mut gauss = fc * T::lit(WG[3]);
    for (j, (&x, &w)) in XGK.iter().zip(WGK.iter()).take(7).enumerate() {
        let dx = radius * T::lit(x);
        let lo = center - dx;
        let hi = center + dx;
        let f1 = f(lo);
        let f2 = f(hi);
        if !f1.is_finite() {
            return Err(QuadError::NonFinite { x: lo.as_f64() });
        }
        if !f2.is_finite() {
            return Err(QuadError::NonFinite { x: hi.as_f64() });
        }
        kronrod += T::lit(w) * (f1 + f2);
        if j % 2 == 1 {
            gauss += T::lit(WG[j / 2]) * (f1 + f2);
        }
    }
    let value = kronrod * radius;
    let error = ((kronrod - gauss) * radius).abs();
    Ok((value, error))
}

/// Integrates `f` over the finite interval `[a, b]`.
pub fn integrate<T, F>(f: F, a: T, b: T, opts: QuadOptions) -> Result<Quadrature<T>, QuadError>
where
    T: Real,
    F: Fn(T) -> T,
{
    if !(a.is_finite() && b.is_finite()) || a > b {
        return Err(QuadError::InvalidBounds {
            a: a.as_f64(),
            b: b.as_f64(),
        });
    }
    if a == b {
        return Ok(Quadrature {
            value: T::zero(),
            abs_error: T::zero(),
            intervals: 0,
        });
    }
    let abs_tol = T::floor_tol(opts.abs_tol, 64.0);
    let rel_tol = T::floor_tol(opts.rel_tol, 64.0);
    let min_width = T::epsilon() * T::lit(256.0);

    let (value, error) = kronrod15(&f, a, b)?;
    let mut heap = BinaryHeap::new();
    heap.push(Segment { a, b, value, error });
    // Segments that are too narrow to split further keep their contribution here.
    let mut frozen_value = T::zero();
    let mut frozen_error = T::zero();
    let mut total_value = value;
    let mut total_error = error;
    let mut count = 1usize;

    loop {
        if total_error <= abs_tol.max(rel_tol * total_value.abs()) {
            break;
        }
        let Some(seg) = heap.pop() else { break };
        let mid = T::lit(0.5) * (seg.a + seg.b);
        let scale = seg.a.abs().max(seg.b.abs());
        let narrow = seg.b - seg.a <= min_width * scale || mid <= seg.a || mid >= seg.b;
        if narrow || count >= opts.max_intervals {
            frozen_value += seg.value;
            frozen_error += seg.error;
            if count >= opts.max_intervals {
                let rest_v: T = heap.iter().map(|s| s.value).sum();
                let rest_e: T = heap.iter().map(|s| s.error).sum();
                return Err(QuadError::NoConvergence {
                    value: (frozen_value + rest_v).as_f64(),
                    error: (frozen_error + rest_e).as_f64(),
                    intervals: count,
                });
            }
            continue;
        }
        let (v1, e1) = kronrod15(&f, seg.a, mid)?;
        let (v2, e2) = kronrod15(&f, mid, seg.b)?;
        total_value += v1 + v2 - seg.value;
        total_error += e1 + e2 - seg.error;
        heap.push(Segment {
            a: seg.a,
            b: mid,
            value: v1,
            error: e1,
        });
        heap.push(Segment {
            a: mid,
            b: seg.b,
            value: v2,
            error: e2,
        });
        count += 1;
    }

    // Re-sum from the pieces to shed accumulated update drift.
    let value: T = heap.iter().map(|s| s.value).sum::<T>() + frozen_value;
    let abs_error: T = heap.iter().map(|s| s.error).sum::<T>() + frozen_error;
    if abs_error > abs_tol.max(rel_tol * value.abs()) {
        return Err(QuadError::NoConvergence {
            value: value.as_f64(),
            error: abs_error.as_f64(),
            intervals: count,
        });
    }
    Ok(Quadrature {
        value,
        abs_error,
        intervals: count,
    })
}

/// Integrates `f` over `[a, +inf)` through `x = a + (1 - t) / t`.
pub fn integrate_to_infinity<T, F>(f: F, a: T, opts: QuadOptions) -> Result<Quadrature<T>, QuadError>
where
    T: Real,
    F: Fn(T) -> T,
{
    let g = |t: T| {
        let x = a + (T::one() - t) / t;
        if x.is_infinite() {
            return T::zero();
        }
        let y = f(x);
        if y == T::zero() {
            y
        } else {
            y / (t * t)
        }
    };
    integrate(g, T::zero(), T::one(), opts)
}

/// `∫_a^b w(x) / (offset + top - x) dx` with `b <= top` and `offset >= 0`.
///
/// The pole sits at `top + offset`. Passing the offset separately keeps the
/// distance to the pole exact when it is much smaller than `top`. When the
/// pole is within a tenth of `top` of the upper limit, the top decile
/// `[0.9 top, b]` is integrated in `u = -ln(pole - x)`, where the integrand
/// becomes `w(x(u))`; with `offset == 0` that range is infinite.
pub fn integrate_pole<T, W>(w: W, a: T, b: T, top: T, offset: T, opts: QuadOptions) -> Result<Quadrature<T>, QuadError>
where
    T: Real,
    W: Fn(T) -> T,
{
    if a > b || b > top || offset < T::zero() {
        return Err(QuadError::InvalidBounds {
            a: a.as_f64(),
            b: b.as_f64(),
        });
    }
    let tenth = T::lit(0.1) * top;
    let distance = |x: T| offset + (top - x);
    if distance(b) >= tenth || top <= T::zero() {
        return integrate(|x| w(x) / distance(x), a, b, opts);
    }
    let split = a.max(top - tenth);
    let head = if split > a {
        integrate(|x| w(x) / distance(x), a, split, opts)?
    } else {
        Quadrature {
            value: T::zero(),
            abs_error: T::zero(),
            intervals: 0,
        }
    };
    let pole = top + offset;
    let to_x = |u: T| {
        // pole - e^{-u}, written to keep the top - x difference exact-ish.
        let d = (-u).exp();
        let x = top - (d - offset);
        x.min(b).max(split)
    };
    let u_lo = -distance(split).ln();
    let tail = if distance(b) > T::zero() {
        let u_hi = -distance(b).ln();
        integrate(|u| w(to_x(u)), u_lo, u_hi, opts)?
    } else {
        let _ = pole;
        // Integrate up to a distance of 1e-8 top, where `top - d` still
        // carries eight significant digits of `d`, and close the remainder
        // by extrapolating the local decay of `w` in `u` as an exponential,
        // i.e. a power law in the distance to the pole.
        let u_cut = -(T::lit(1e-8) * top).ln();
        let body = integrate(|u| w(to_x(u)), u_lo, u_cut, opts)?;
        let w1 = w(to_x(u_cut - T::one()));
        let w2 = w(to_x(u_cut));
        let rest = if w2 == T::zero() {
            T::zero()
        } else if w2 > T::zero() && w1 > w2 {
            w2 / (w1 / w2).ln()
        } else {
            return Err(QuadError::NonFinite { x: top.as_f64() });
        };
        Quadrature {
            value: body.value + rest,
            abs_error: body.abs_error + rest.abs() * T::lit(1e-6),
            intervals: body.intervals,
        }
    };
    Ok(Quadrature {
        value: head.value + tail.value,
        abs_error: head.abs_error + tail.abs_error,
        intervals: head.intervals + tail.intervals,
    })
}
