//! Fitness distributions: finite and countable atoms, bounded and unbounded densities.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::beta::{beta_reg, ln_beta};
use thiserror::Error;

use crate::numerics::{bisect, hurwitz_zeta, integrate, integrate_to_infinity, zeta, QuadOptions, RootOptions};
use crate::scalar::Real;

pub type AtomRule<T> = Arc<dyn Fn(usize) -> (T, T) + Send + Sync>;
pub type TailRule<T> = Arc<dyn Fn(usize) -> T + Send + Sync>;
pub type Curve<T> = Arc<dyn Fn(T) -> T + Send + Sync>;

/// Name and numeric parameters of a model, for reports and config echoes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDescriptor {
    pub name: String,
    pub params: BTreeMap<String, f64>,
}

impl ModelDescriptor {
    pub fn new(name: &str, params: &[(&str, f64)]) -> Self {
        Self {
            name: name.to_string(),
            params: params.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }
}

impl fmt::Display for ModelDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name)?;
        let mut first = true;
        for (k, v) in &self.params {
            write!(f, "{}{k}={v}", if first { "(" } else { ", " })?;
            first = false;
        }
        if !first {
            write!(f, ")")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitnessError {
    #[error("operation `{op}` is not defined for {variant} models")]
    InvalidVariant { op: &'static str, variant: &'static str },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Finitely many atoms `f_1 < ... < f_J` with masses `q_1..q_J`.
#[derive(Clone)]
pub struct FiniteDiscrete<T> {
    pub fitnesses: Vec<T>,
    pub probs: Vec<T>,
    /// Set by truncation, which may map tail atoms to fitness 0.
    pub allow_zero: bool,
    cumulative: Vec<f64>,
}

impl<T: Real> FiniteDiscrete<T> {
    pub fn new(fitnesses: Vec<T>, probs: Vec<T>) -> Self {
        let mut acc = 0.0;
        let cumulative = probs
            .iter()
            .map(|q| {
                acc += q.as_f64();
                acc
            })
            .collect();
        Self {
            fitnesses,
            probs,
            allow_zero: false,
            cumulative,
        }
    }

    pub fn len(&self) -> usize {
        self.fitnesses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fitnesses.is_empty()
    }

    fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total = *self.cumulative.last().unwrap_or(&0.0);
        let u: f64 = rng.gen::<f64>() * total;
        self.cumulative.partition_point(|&c| c <= u).min(self.len() - 1)
    }
}

/// Countably many atoms given by rules rather than a list.
#[derive(Clone)]
pub struct CountableDiscrete<T> {
    /// `j ↦ (f_j, q_j)` for `j >= 1`.
    pub atom: AtomRule<T>,
    pub h: T,
    /// `I ↦ Σ_{j>I} q_j`.
    pub mass_beyond: TailRule<T>,
    /// `N ↦` an upper bound on `Σ_{j>N} h q_j / (h - f_j)`, which bounds the
    /// occupation tail beyond `N` for every `λ >= h`. `None` when it diverges.
    pub occupation_tail_bound: Option<TailRule<T>>,
    /// `N ↦ Σ_{j>N} f_j q_j / (h - f_j)` in closed form, when available.
    pub occupation_tail_at_h: Option<TailRule<T>>,
    /// `I(h) = +∞` known in closed form.
    pub diverges_at_h: bool,
    /// Atoms may have fitness 0 (the zeta family's first atom does).
    pub allow_zero: bool,
    head_tails: Vec<f64>,
}

impl<T: Real> CountableDiscrete<T> {
    pub fn new(atom: AtomRule<T>, h: T, mass_beyond: TailRule<T>) -> Self {
        let head_tails = (0..=64).map(|i| mass_beyond(i).as_f64()).collect();
        Self {
            atom,
            h,
            mass_beyond,
            occupation_tail_bound: None,
            occupation_tail_at_h: None,
            diverges_at_h: false,
            allow_zero: false,
            head_tails,
        }
    }

    /// Inverse transform through the tail rule: the smallest `j` with
    /// `Σ_{i>j} q_i < 1 - u`.
    fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let v = 1.0 - rng.gen::<f64>();
        if let Some(j) = self.head_tails.iter().position(|&t| t < v) {
            return j.max(1);
        }
        let tail = |j: usize| (self.mass_beyond)(j).as_f64();
        let mut lo = self.head_tails.len() - 1;
        let mut hi = lo * 2;
        while tail(hi) >= v {
            lo = hi;
            hi = hi.saturating_mul(2);
            if hi == usize::MAX {
                return hi;
            }
        }
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if tail(mid) < v {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }
}

#[derive(Clone)]
pub enum Sampler<T> {
    InverseCdf(Curve<T>),
    /// Uniform proposal on the support, accepted with probability `g(x) / bound`.
    Rejection {
        bound: T,
    },
}

/// Density `g` on `[0, h]` with total mass `G`.
#[derive(Clone)]
pub struct ContinuousDensity<T> {
    pub h: T,
    pub density: Curve<T>,
    pub cdf: Curve<T>,
    pub total_mass: T,
    pub sampler: Sampler<T>,
    /// `g(h) > 0` known in closed form, so `I(h) = +∞`.
    pub positive_at_h: bool,
    /// Closed-form `I(h)` when known.
    pub occupation_at_h: Option<T>,
    /// Internal models (discretization inputs) may carry `G < 1`.
    pub internal: bool,
}

/// Density on `[0, ∞)` with total mass 1.
#[derive(Clone)]
pub struct ContinuousUnbounded<T> {
    pub density: Curve<T>,
    pub cdf: Curve<T>,
    pub inverse_cdf: Curve<T>,
}

/// A fitness distribution `(𝓕, 𝒬)`.
#[derive(Clone)]
pub enum FitnessModel<T> {
    FiniteDiscrete(FiniteDiscrete<T>, ModelDescriptor),
    CountableDiscrete(CountableDiscrete<T>, ModelDescriptor),
    ContinuousDensity(ContinuousDensity<T>, ModelDescriptor),
    ContinuousUnbounded(ContinuousUnbounded<T>, ModelDescriptor),
}

impl<T> fmt::Debug for FitnessModel<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (v, d) = match self {
            Self::FiniteDiscrete(_, d) => ("FiniteDiscrete", d),
            Self::CountableDiscrete(_, d) => ("CountableDiscrete", d),
            Self::ContinuousDensity(_, d) => ("ContinuousDensity", d),
            Self::ContinuousUnbounded(_, d) => ("ContinuousUnbounded", d),
        };
        write!(f, "{v}[{d}]")
    }
}

fn curve<T: Real>(f: impl Fn(T) -> T + Send + Sync + 'static) -> Curve<T> {
    Arc::new(f)
}

fn via_f64<T: Real>(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Curve<T> {
    Arc::new(move |x: T| T::lit(f(x.as_f64())))
}

/// Inverse of the regularized incomplete beta function in `x`.
fn beta_quantile(a: f64, b: f64, p: f64) -> f64 {
    if p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return 1.0;
    }
    if a == 1.0 {
        // 1 - (1 - p)^{1/β}
        return -((-p).ln_1p() / b).exp_m1();
    }
    if b == 1.0 {
        return p.powf(1.0 / a);
    }
    let opts = RootOptions {
        f_tol: 1e-15,
        x_rel_tol: 1e-15,
        max_iter: 200,
    };
    bisect(|x: f64| beta_reg(a, b, x) - p, 0.0, 1.0, opts)
        .map(|o| o.root)
        .unwrap_or(0.5)
}

impl<T: Real> FitnessModel<T> {
    /// Point mass at `f > 0`.
    pub fn dirac(f: f64) -> Self {
        let m = FiniteDiscrete::new(vec![T::lit(f)], vec![T::one()]);
        Self::FiniteDiscrete(m, ModelDescriptor::new("dirac", &[("f", f)]))
    }

    /// Atoms `f1 < f2` with masses `q1` and `1 - q1`.
    pub fn two_point(f1: f64, f2: f64, q1: f64) -> Self {
        let m = FiniteDiscrete::new(vec![T::lit(f1), T::lit(f2)], vec![T::lit(q1), T::lit(1.0 - q1)]);
        Self::FiniteDiscrete(
            m,
            ModelDescriptor::new("twopoint", &[("f1", f1), ("f2", f2), ("q1", q1)]),
        )
    }

    pub fn finite(fitnesses: Vec<T>, probs: Vec<T>) -> Self {
        let mut d = ModelDescriptor::new("finite", &[]);
        for (j, (f, q)) in fitnesses.iter().zip(&probs).enumerate() {
            d.params.insert(format!("f{}", j + 1), f.as_f64());
            d.params.insert(format!("q{}", j + 1), q.as_f64());
        }
        Self::FiniteDiscrete(FiniteDiscrete::new(fitnesses, probs), d)
    }

    pub fn uniform(h: f64) -> Self {
        let ht = T::lit(h);
        let m = ContinuousDensity {
            h: ht,
            density: curve(move |x: T| {
                if x >= T::zero() && x <= ht {
                    ht.recip()
                } else {
                    T::zero()
                }
            }),
            cdf: curve(move |x: T| (x / ht).max(T::zero()).min(T::one())),
            total_mass: T::one(),
            sampler: Sampler::InverseCdf(curve(move |u: T| u * ht)),
            positive_at_h: true,
            occupation_at_h: None,
            internal: false,
        };
        Self::ContinuousDensity(m, ModelDescriptor::new("uniform", &[("h", h)]))
    }

    /// Beta(α, β) on `[0, 1]`.
    pub fn beta(alpha: f64, beta: f64) -> Self {
        let ln_norm = ln_beta(alpha, beta);
        let density = via_f64(move |x| {
            if !(0.0..=1.0).contains(&x) {
                return 0.0;
            }
            if (x == 0.0 && alpha < 1.0) || (x == 1.0 && beta < 1.0) {
                return f64::INFINITY;
            }
            let lx = if alpha == 1.0 { 0.0 } else { (alpha - 1.0) * x.ln() };
            let l1x = if beta == 1.0 { 0.0 } else { (beta - 1.0) * (-x).ln_1p() };
            (lx + l1x - ln_norm).exp()
        });
        let cdf = via_f64(move |x| beta_reg(alpha, beta, x.clamp(0.0, 1.0)));
        let m = ContinuousDensity {
            h: T::one(),
            density,
            cdf,
            total_mass: T::one(),
            sampler: Sampler::InverseCdf(via_f64(move |u| beta_quantile(alpha, beta, u))),
            positive_at_h: beta <= 1.0,
            // ∫ x g/(1-x) = B(α+1, β-1)/B(α, β) = α/(β-1)
            occupation_at_h: (beta > 1.0).then(|| T::lit(alpha / (beta - 1.0))),
            internal: false,
        };
        Self::ContinuousDensity(m, ModelDescriptor::new("beta", &[("alpha", alpha), ("beta", beta)]))
    }

    /// Atoms `f_j = 1 - 1/j`, `q_j = j^{-(2+θ)} / ζ(2+θ)`, `θ > -1`.
    pub fn zeta_family(theta: f64) -> Self {
        let s = 2.0 + theta;
        let z = zeta(s);
        let atom: AtomRule<T> = Arc::new(move |j: usize| {
            let jf = j as f64;
            (T::lit(1.0 - 1.0 / jf), T::lit(jf.powf(-s) / z))
        });
        let tail: TailRule<T> = Arc::new(move |i: usize| T::lit(hurwitz_zeta(s, i as f64 + 1.0) / z));
        let mut m = CountableDiscrete::new(atom, T::one(), tail);
        m.allow_zero = true;
        if s > 2.0 {
            // h q_j / (h - f_j) = j q_j
            m.occupation_tail_bound = Some(Arc::new(move |n: usize| {
                T::lit(hurwitz_zeta(s - 1.0, n as f64 + 1.0) / z)
            }));
            // f_j q_j / (h - f_j) = (j - 1) q_j
            m.occupation_tail_at_h = Some(Arc::new(move |n: usize| {
                let a = n as f64 + 1.0;
                T::lit((hurwitz_zeta(s - 1.0, a) - hurwitz_zeta(s, a)) / z)
            }));
        } else {
            m.diverges_at_h = true;
        }
        Self::CountableDiscrete(m, ModelDescriptor::new("zeta", &[("theta", theta)]))
    }

    pub fn exponential(rate: f64) -> Self {
        let r = T::lit(rate);
        let m = ContinuousUnbounded {
            density: curve(move |x: T| if x < T::zero() { T::zero() } else { r * (-r * x).exp() }),
            cdf: curve(move |x: T| if x < T::zero() { T::zero() } else { -(-r * x).exp_m1() }),
            inverse_cdf: curve(move |u: T| -(-u).ln_1p() / r),
        };
        Self::ContinuousUnbounded(m, ModelDescriptor::new("exponential", &[("rate", rate)]))
    }

    /// User density on `[0, h]` sampled by rejection under `envelope >= sup g`.
    /// The cdf is evaluated by quadrature.
    pub fn custom_density(name: &str, h: f64, density: Curve<T>, envelope: f64) -> Self {
        let ht = T::lit(h);
        let g = density.clone();
        let cdf = curve(move |x: T| {
            let x = x.max(T::zero()).min(ht);
            integrate(|y| g(y), T::zero(), x, QuadOptions::default())
                .map(|q| q.value)
                .unwrap_or_else(|e| match e {
                    crate::numerics::QuadError::NoConvergence { value, .. } => T::lit(value),
                    _ => T::nan(),
                })
        });
        let gh = density(ht);
        let m = ContinuousDensity {
            h: ht,
            density,
            cdf,
            total_mass: T::one(),
            sampler: Sampler::Rejection {
                bound: T::lit(envelope),
            },
            positive_at_h: gh > T::zero(),
            occupation_at_h: None,
            internal: false,
        };
        Self::ContinuousDensity(m, ModelDescriptor::new(name, &[("h", h), ("envelope", envelope)]))
    }

    pub fn descriptor(&self) -> &ModelDescriptor {
        match self {
            Self::FiniteDiscrete(_, d)
            | Self::CountableDiscrete(_, d)
            | Self::ContinuousDensity(_, d)
            | Self::ContinuousUnbounded(_, d) => d,
        }
    }

    pub fn variant_name(&self) -> &'static str {
        match self {
            Self::FiniteDiscrete(..) => "FiniteDiscrete",
            Self::CountableDiscrete(..) => "CountableDiscrete",
            Self::ContinuousDensity(..) => "ContinuousDensity",
            Self::ContinuousUnbounded(..) => "ContinuousUnbounded",
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, Self::FiniteDiscrete(..) | Self::CountableDiscrete(..))
    }

    /// Supremum of the support; `+∞` for unbounded models.
    pub fn sup(&self) -> T {
        match self {
            Self::FiniteDiscrete(m, _) => m.fitnesses.iter().copied().fold(T::zero(), T::max),
            Self::CountableDiscrete(m, _) => m.h,
            Self::ContinuousDensity(m, _) => m.h,
            Self::ContinuousUnbounded(..) => T::infinity(),
        }
    }

    /// Declared total mass `G`.
    pub fn total_mass(&self) -> T {
        match self {
            Self::ContinuousDensity(m, _) => m.total_mass,
            _ => T::one(),
        }
    }

    /// `(f_j, q_j)` for 1-based atom `j`; `None` past the last atom or for densities.
    pub fn atom(&self, j: usize) -> Option<(T, T)> {
        if j == 0 {
            return None;
        }
        match self {
            Self::FiniteDiscrete(m, _) => (j <= m.len()).then(|| (m.fitnesses[j - 1], m.probs[j - 1])),
            Self::CountableDiscrete(m, _) => Some((m.atom)(j)),
            _ => None,
        }
    }

    /// Number of atoms; `None` for countable and continuous models.
    pub fn atom_count(&self) -> Option<usize> {
        match self {
            Self::FiniteDiscrete(m, _) => Some(m.len()),
            _ => None,
        }
    }

    /// Draws a fitness, with its 1-based atom index for discrete models.
    /// Densities with `G < 1` are sampled conditionally on the support.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (T, Option<usize>) {
        match self {
            Self::FiniteDiscrete(m, _) => {
                let i = m.sample_index(rng);
                (m.fitnesses[i], Some(i + 1))
            }
            Self::CountableDiscrete(m, _) => {
                let j = m.sample_index(rng);
                ((m.atom)(j).0, Some(j))
            }
            Self::ContinuousDensity(m, _) => match &m.sampler {
                Sampler::InverseCdf(inv) => (inv(T::lit(rng.gen::<f64>()) * m.total_mass), None),
                Sampler::Rejection { bound } => loop {
                    let x = T::lit(rng.gen::<f64>()) * m.h;
                    let y = T::lit(rng.gen::<f64>()) * *bound;
                    if y < (m.density)(x) {
                        break (x, None);
                    }
                },
            },
            Self::ContinuousUnbounded(m, _) => ((m.inverse_cdf)(T::lit(rng.gen::<f64>())), None),
        }
    }

    /// `Σ_{j>I} q_j`.
    pub fn mass_beyond(&self, i: usize) -> Result<T, FitnessError> {
        match self {
            Self::FiniteDiscrete(m, _) => Ok(m.probs.iter().skip(i).copied().sum()),
            Self::CountableDiscrete(m, _) => Ok((m.mass_beyond)(i)),
            _ => Err(FitnessError::InvalidVariant {
                op: "mass_beyond",
                variant: self.variant_name(),
            }),
        }
    }

    /// `𝒬([a, b])` for densities, through the cdf.
    pub fn interval_mass(&self, a: T, b: T) -> Result<T, FitnessError> {
        match self {
            Self::ContinuousDensity(m, _) => Ok((m.cdf)(b) - (m.cdf)(a)),
            Self::ContinuousUnbounded(m, _) => Ok((m.cdf)(b) - (m.cdf)(a)),
            _ => Err(FitnessError::InvalidVariant {
                op: "interval_mass",
                variant: self.variant_name(),
            }),
        }
    }

    /// Density at `x`, for continuous models.
    pub fn density(&self, x: T) -> Option<T> {
        match self {
            Self::ContinuousDensity(m, _) => Some((m.density)(x)),
            Self::ContinuousUnbounded(m, _) => Some((m.density)(x)),
            _ => None,
        }
    }

    pub fn validate(&self) -> ValidationReport {
        let mut r = ValidationReport::default();
        let mass_tol = 1e-9;
        match self {
            Self::FiniteDiscrete(m, _) => {
                r.check("nonempty", !m.is_empty(), "no atoms".into());
                r.check(
                    "lengths",
                    m.fitnesses.len() == m.probs.len(),
                    format!("{} fitnesses vs {} probabilities", m.fitnesses.len(), m.probs.len()),
                );
                let asc = m.fitnesses.windows(2).all(|w| w[0] < w[1]);
                r.check("ascending", asc, "fitnesses are not strictly ascending".into());
                let pos = m
                    .fitnesses
                    .iter()
                    .all(|&f| f.is_finite() && (f > T::zero() || (m.allow_zero && f == T::zero())));
                r.check("fitness_positive", pos, "fitness values must be finite and > 0".into());
                let qpos = m.probs.iter().all(|&q| q > T::zero() && q.is_finite());
                r.check("probabilities_positive", qpos, "probabilities must be > 0".into());
                let g: T = m.probs.iter().copied().sum();
                r.check(
                    "total_mass",
                    (g.as_f64() - 1.0).abs() <= mass_tol,
                    format!("Σq = {} differs from 1", g),
                );
            }
            Self::CountableDiscrete(m, _) => {
                let probe = 2000;
                let mut sum = T::zero();
                let mut qpos = true;
                let mut fok = true;
                for j in 1..=probe {
                    let (f, q) = (m.atom)(j);
                    qpos &= q > T::zero();
                    fok &= f <= m.h && (f > T::zero() || (m.allow_zero && f == T::zero()));
                    sum += q;
                }
                r.check(
                    "probabilities_positive",
                    qpos,
                    format!("some q_j <= 0 for j <= {probe}"),
                );
                r.check(
                    "fitness_range",
                    fok,
                    format!("some f_j outside (0, h] for j <= {probe}"),
                );
                let total = sum + (m.mass_beyond)(probe);
                r.check(
                    "total_mass",
                    (total.as_f64() - 1.0).abs() <= mass_tol,
                    format!("Σq_j + tail = {} differs from 1", total),
                );
                let ids = [0usize, 1, 2, 5, 10, 100, 1000, 10_000, 100_000, 1_000_000];
                let tails: Vec<f64> = ids.iter().map(|&i| (m.mass_beyond)(i).as_f64()).collect();
                let noninc = tails.windows(2).all(|w| w[1] <= w[0]);
                r.check("tail_nonincreasing", noninc, format!("tail masses {tails:?}"));
                let vanishing = *tails.last().unwrap() < 1e-3;
                r.check(
                    "tail_vanishes",
                    vanishing,
                    format!("tail at 10^6 is {}", tails.last().unwrap()),
                );
            }
            Self::ContinuousDensity(m, _) => {
                r.check("support", m.h > T::zero() && m.h.is_finite(), format!("h = {}", m.h));
                let g = integrate(|x| (m.density)(x), T::zero(), m.h, QuadOptions::default());
                match g {
                    Ok(q) => {
                        let ok = (q.value - m.total_mass).abs().as_f64() <= mass_tol;
                        r.check(
                            "total_mass",
                            ok,
                            format!("∫g = {} vs declared G = {}", q.value, m.total_mass),
                        );
                    }
                    Err(e) => r.check("total_mass", false, format!("quadrature failed: {e}")),
                }
                let in_range = m.total_mass > T::zero()
                    && m.total_mass <= T::one() + T::lit(mass_tol)
                    && (m.internal || (m.total_mass.as_f64() - 1.0).abs() <= mass_tol);
                r.check(
                    "declared_mass",
                    in_range,
                    format!("G = {} (internal: {})", m.total_mass, m.internal),
                );
                let grid = 256;
                let bad = (1..grid)
                    .map(|i| m.h * T::from_usize_lossy(i) / T::from_usize_lossy(grid))
                    .find(|&x| {
                        let y = (m.density)(x);
                        !(y > T::zero() && y.is_finite())
                    });
                r.check(
                    "density_positive",
                    bad.is_none(),
                    format!("density not positive and finite at x = {:?}", bad),
                );
                if let Sampler::Rejection { bound } = &m.sampler {
                    let exceed = (0..=grid)
                        .map(|i| m.h * T::from_usize_lossy(i) / T::from_usize_lossy(grid))
                        .find(|&x| (m.density)(x) > *bound);
                    r.check(
                        "envelope",
                        exceed.is_none(),
                        format!("density exceeds envelope at {:?}", exceed),
                    );
                }
            }
            Self::ContinuousUnbounded(m, _) => {
                let g = integrate_to_infinity(|x| (m.density)(x), T::zero(), QuadOptions::default());
                match g {
                    Ok(q) => r.check(
                        "total_mass",
                        (q.value.as_f64() - 1.0).abs() <= mass_tol,
                        format!("∫g = {}", q.value),
                    ),
                    Err(e) => r.check("total_mass", false, format!("quadrature failed: {e}")),
                }
                let bad = (1..64)
                    .map(|i| T::lit(i as f64 / 8.0))
                    .find(|&x| !((m.density)(x) > T::zero()));
                r.check(
                    "density_positive",
                    bad.is_none(),
                    format!("density vanishes at {:?}", bad),
                );
            }
        }
        r
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    fn check(&mut self, name: &str, passed: bool, detail: String) {
        self.checks.push(Check {
            name: name.to_string(),
            passed,
            detail: if passed { String::new() } else { detail },
        });
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.passed() {
            return write!(f, "all {} checks passed", self.checks.len());
        }
        for c in self.failures() {
            writeln!(f, "{}: {}", c.name, c.detail)?;
        }
        Ok(())
    }
}
