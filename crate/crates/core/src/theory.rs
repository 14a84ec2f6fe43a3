//! Occupation integral, the root `λ₀`, phase classification and limit laws.
//!
//! With `h` the supremum of the fitness support,
//! `I(λ) = ∫ f / (λ - f) d𝒬(f)` is decreasing on `(h, ∞)`. If `I(h) > 1` the
//! root of `I(λ) = 1` above `h` is `λ₀`; otherwise `λ₀ = h` and a fraction
//! `1 - I(h)` of edge endpoints escapes toward the top of the support.
//!
//! Every evaluation near the pole is done in offset form: callers pass
//! `t = λ - h` and denominators are formed as `t + (h - f)`, so nothing is
//! lost when `λ - h` is far below the resolution of `h`.

use std::fmt;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::fitness::{CountableDiscrete, FitnessError, FitnessModel};
use crate::numerics::{
    bisect, expand_upward, integrate, integrate_pole, QuadError, QuadOptions, RootError, RootOptions,
};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TheoryError {
    #[error("λ = {lambda} lies below the fitness supremum h = {h}")]
    Domain { lambda: f64, h: f64 },
    #[error(transparent)]
    Fitness(#[from] FitnessError),
    #[error("quadrature failed: {0}")]
    Quad(#[from] QuadError),
    #[error("root solver failed: {0}")]
    Root(#[from] RootError),
    #[error("root solver stopped with residual {residual} on bracket [{lo}, {hi}] after {iterations} iterations")]
    NoConvergence {
        lo: f64,
        hi: f64,
        iterations: usize,
        residual: f64,
    },
    #[error("target outside the support: {0}")]
    Target(String),
    #[error("degree must be at least 1")]
    Degree,
    #[error("mu_k overflows exact arithmetic at k = {0}")]
    Overflow(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    FirstMoverAdvantage,
    FitGetRicher,
    FitGetRicherBoundary,
    InnovationPaysOff,
    UnboundedDegenerate,
}

impl Phase {
    pub fn as_str(&self) -> &'static str {
        match self {
            Phase::FirstMoverAdvantage => "first-mover-advantage",
            Phase::FitGetRicher => "fit-get-richer",
            Phase::FitGetRicherBoundary => "fit-get-richer-boundary",
            Phase::InnovationPaysOff => "innovation-pays-off",
            Phase::UnboundedDegenerate => "unbounded-degenerate",
        }
    }

    /// Phases whose limit laws use `λ₀ = h`.
    pub fn uses_supremum(&self) -> bool {
        matches!(self, Phase::FitGetRicherBoundary | Phase::InnovationPaysOff)
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverDiagnostics<T> {
    pub bracket: (T, T),
    pub iterations: usize,
    pub residual: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseReport<T> {
    pub lambda0: T,
    pub h: T,
    /// `I(h)`, possibly `+∞`.
    pub i_at_h: T,
    pub phase: Phase,
    pub missing_mass: T,
    pub diagnostics: Option<SolverDiagnostics<T>>,
}

impl<T: Real> PhaseReport<T> {
    /// `λ₀ - h`, exact for the boundary and condensation phases.
    pub fn offset(&self) -> T {
        if self.phase.uses_supremum() {
            T::zero()
        } else {
            self.lambda0 - self.h
        }
    }

    pub fn residual(&self) -> Option<T> {
        self.diagnostics.map(|d| d.residual)
    }
}

/// Tolerance for calling `I(h) = 1` a tie.
pub const BOUNDARY_TOL: f64 = 1e-9;

const SUM_TOL: f64 = 1e-13;
const MAX_TERMS: usize = 1 << 22;

fn quad_opts() -> QuadOptions {
    QuadOptions::default().with_abs_tol(1e-12)
}

/// Neumaier-compensated running sum.
#[derive(Default, Clone, Copy)]
struct Compensated<T> {
    sum: T,
    c: T,
}

impl<T: Real> Compensated<T> {
    fn add(&mut self, x: T) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.c += (self.sum - t) + x;
        } else {
            self.c += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> T {
        self.sum + self.c
    }
}

fn countable_occupation<T: Real>(m: &CountableDiscrete<T>, t: T) -> T {
    let h = m.h;
    if t == T::zero() {
        if m.diverges_at_h {
            return T::infinity();
        }
        if let Some(exact) = &m.occupation_tail_at_h {
            let n = 64;
            let mut acc = Compensated::default();
            for j in 1..=n {
                let (f, q) = (m.atom)(j);
                acc.add(f * q / (h - f));
            }
            return acc.value() + exact(n);
        }
    }
    // Partial sum to N plus the midpoint of a bracket on the remainder,
    // doubling N until the bracket is tight.
    let mut acc = Compensated::default();
    let mut j = 0usize;
    let mut n = 256usize;
    loop {
        while j < n {
            j += 1;
            let (f, q) = (m.atom)(j);
            acc.add(f * q / (t + (h - f)));
        }
        let tail_mass = (m.mass_beyond)(n);
        let mut upper = if t > T::zero() {
            h / t * tail_mass
        } else {
            T::infinity()
        };
        if let Some(bound) = &m.occupation_tail_bound {
            upper = upper.min(bound(n));
        }
        let (f_next, _) = (m.atom)(n + 1);
        let lower = f_next / (t + (h - f_next)) * tail_mass;
        let half = (upper - lower) * T::lit(0.5);
        if half <= T::lit(SUM_TOL) || n >= MAX_TERMS {
            if !upper.is_finite() {
                return T::infinity();
            }
            return acc.value() + lower + half;
        }
        n *= 2;
    }
}

fn occupation_at_offset<T: Real>(model: &FitnessModel<T>, t: T) -> Result<T, TheoryError> {
    match model {
        FitnessModel::FiniteDiscrete(m, _) => {
            let h = model.sup();
            let mut acc = Compensated::default();
            for (&f, &q) in m.fitnesses.iter().zip(&m.probs) {
                if f == T::zero() {
                    continue;
                }
                let d = t + (h - f);
                if d == T::zero() {
                    return Ok(T::infinity());
                }
                acc.add(f * q / d);
            }
            Ok(acc.value())
        }
        FitnessModel::CountableDiscrete(m, _) => Ok(countable_occupation(m, t)),
        FitnessModel::ContinuousDensity(m, _) => {
            if t == T::zero() && m.positive_at_h {
                return Ok(T::infinity());
            }
            let g = m.density.clone();
            let q = integrate_pole(move |x| x * g(x), T::zero(), m.h, m.h, t, quad_opts())?;
            Ok(q.value)
        }
        FitnessModel::ContinuousUnbounded(..) => Err(TheoryError::Fitness(FitnessError::InvalidVariant {
            op: "occupation_integral",
            variant: "ContinuousUnbounded",
        })),
    }
}

/// `I(λ)` for `λ >= h`; `+∞` where it diverges.
pub fn occupation_integral<T: Real>(model: &FitnessModel<T>, lambda: T) -> Result<T, TheoryError> {
    let h = model.sup();
    if !(lambda >= h) || !h.is_finite() {
        return Err(TheoryError::Domain {
            lambda: lambda.as_f64(),
            h: h.as_f64(),
        });
    }
    occupation_at_offset(model, lambda - h)
}

/// `I(h + t)` for `t >= 0`, with the offset passed exactly.
pub fn occupation_integral_offset<T: Real>(model: &FitnessModel<T>, t: T) -> Result<T, TheoryError> {
    if !(t >= T::zero()) {
        return Err(TheoryError::Domain {
            lambda: (model.sup() + t).as_f64(),
            h: model.sup().as_f64(),
        });
    }
    occupation_at_offset(model, t)
}

/// `I(h)`, deciding divergence for densities without a closed-form answer.
///
/// Direct quadrature at `λ = h` is tried first. When it fails, `I` is
/// evaluated at `h (1 + 10^-k)` for `k = 4, 6, 8`: any value above 1 settles
/// the comparison, and increments that do not contract by at least a factor
/// of 10 between steps are read as divergence.
pub fn occupation_at_supremum<T: Real>(model: &FitnessModel<T>) -> Result<T, TheoryError> {
    let FitnessModel::ContinuousDensity(m, _) = model else {
        return occupation_at_offset(model, T::zero());
    };
    if m.positive_at_h {
        return Ok(T::infinity());
    }
    if let Some(v) = m.occupation_at_h {
        return Ok(v);
    }
    if let Ok(v) = occupation_at_offset(model, T::zero()) {
        return Ok(v);
    }
    let h = m.h;
    let probes: Vec<T> = [4.0, 6.0, 8.0]
        .iter()
        .map(|&k| occupation_at_offset(model, h * T::lit(10f64.powf(-k))))
        .collect::<Result<_, _>>()?;
    if probes.iter().any(|&v| v > T::one()) {
        return Ok(T::infinity());
    }
    let d1 = probes[1] - probes[0];
    let d2 = probes[2] - probes[1];
    if !(d2 * T::lit(10.0) <= d1) {
        return Ok(T::infinity());
    }
    let r = d2 / d1;
    Ok(probes[2] + d2 * r / (T::one() - r))
}

/// Classifies a bounded model and solves for `λ₀`.
pub fn solve_lambda0<T: Real>(model: &FitnessModel<T>) -> Result<PhaseReport<T>, TheoryError> {
    let h = model.sup();
    if !h.is_finite() {
        return Err(TheoryError::Fitness(FitnessError::InvalidVariant {
            op: "solve_lambda0",
            variant: model.variant_name(),
        }));
    }
    let i_h = occupation_at_supremum(model)?;
    let one = T::one();
    let tie = T::lit(BOUNDARY_TOL);
    if (i_h - one).abs() <= tie {
        return Ok(PhaseReport {
            lambda0: h,
            h,
            i_at_h: i_h,
            phase: Phase::FitGetRicherBoundary,
            missing_mass: T::zero(),
            diagnostics: None,
        });
    }
    if i_h < one {
        return Ok(PhaseReport {
            lambda0: h,
            h,
            i_at_h: i_h,
            phase: Phase::InnovationPaysOff,
            missing_mass: one - i_h,
            diagnostics: None,
        });
    }
    // Root in offset space t = λ - h.
    let g = |t: T| {
        if t == T::zero() {
            return i_h - one;
        }
        occupation_at_offset(model, t).map(|v| v - one).unwrap_or(T::nan())
    };
    let start = h.max(one);
    let hi = expand_upward(start, |t| g(t) < T::zero(), 200)?;
    let out = bisect(
        g,
        T::zero(),
        hi,
        RootOptions {
            f_tol: 1e-12,
            x_rel_tol: 0.0,
            max_iter: 2000,
        },
    )?;
    let residual = out.residual;
    if !(residual.abs() <= T::floor_tol(1e-10, 64.0)) {
        return Err(TheoryError::NoConvergence {
            lo: (h + out.lo).as_f64(),
            hi: (h + out.hi).as_f64(),
            iterations: out.iterations,
            residual: residual.as_f64(),
        });
    }
    Ok(PhaseReport {
        lambda0: h + out.root,
        h,
        i_at_h: i_h,
        phase: Phase::FitGetRicher,
        missing_mass: T::zero(),
        diagnostics: Some(SolverDiagnostics {
            bracket: (h + out.lo, h + out.hi),
            iterations: out.iterations,
            residual,
        }),
    })
}

/// Phase of any model: a single atom is first-mover-advantage with
/// `λ₀ = 2f`, unbounded support is degenerate, everything else goes
/// through [`solve_lambda0`].
pub fn classify_phase<T: Real>(model: &FitnessModel<T>) -> Result<PhaseReport<T>, TheoryError> {
    match model {
        FitnessModel::FiniteDiscrete(m, _) if m.len() == 1 => {
            let f = m.fitnesses[0];
            Ok(PhaseReport {
                lambda0: f + f,
                h: f,
                i_at_h: T::infinity(),
                phase: Phase::FirstMoverAdvantage,
                missing_mass: T::zero(),
                diagnostics: Some(SolverDiagnostics {
                    bracket: (f + f, f + f),
                    iterations: 0,
                    residual: T::zero(),
                }),
            })
        }
        FitnessModel::ContinuousUnbounded(..) => Ok(PhaseReport {
            lambda0: T::infinity(),
            h: T::infinity(),
            i_at_h: T::zero(),
            phase: Phase::UnboundedDegenerate,
            missing_mass: T::zero(),
            diagnostics: None,
        }),
        _ => solve_lambda0(model),
    }
}

/// What a share is asked for.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NuTarget<T> {
    /// 1-based atom index.
    Atom(usize),
    /// Closed interval `[a, b]` of fitness values.
    Interval(T, T),
}

/// Limiting edge-endpoint share `lim M_n / n` of an atom or interval.
///
/// In the condensation and boundary phases `λ₀ = h`; an interval reaching
/// `h` then receives `2 - ν_[0,a]`, which includes the condensate.
/// Unbounded models give the plain 𝒬-mass on bounded intervals and
/// `2 - 𝒬([0, a])` on `[a, ∞)`; an upper edge of `f64::MAX` counts as `∞`.
pub fn nu<T: Real>(model: &FitnessModel<T>, report: &PhaseReport<T>, target: NuTarget<T>) -> Result<T, TheoryError> {
    match target {
        NuTarget::Atom(j) => {
            let (f, q) = model
                .atom(j)
                .ok_or_else(|| TheoryError::Target(format!("no atom with index {j}")))?;
            if report.phase == Phase::UnboundedDegenerate {
                return Ok(q);
            }
            let lambda = report.lambda0;
            let d = report.offset() + (report.h - f);
            Ok(lambda * q / d)
        }
        NuTarget::Interval(a, b) => nu_interval(model, report, a, b),
    }
}

fn nu_interval<T: Real>(model: &FitnessModel<T>, report: &PhaseReport<T>, a: T, b: T) -> Result<T, TheoryError> {
    if report.phase == Phase::UnboundedDegenerate {
        if !(a >= T::zero() && a <= b) {
            return Err(TheoryError::Target(format!("[{a}, {b}]")));
        }
        if b.is_infinite() || b.as_f64() == f64::MAX {
            return Ok(T::lit(2.0) - model.interval_mass(T::zero(), a)?);
        }
        return Ok(model.interval_mass(a, b)?);
    }
    let FitnessModel::ContinuousDensity(m, _) = model else {
        return Err(TheoryError::Fitness(FitnessError::InvalidVariant {
            op: "nu over an interval",
            variant: model.variant_name(),
        }));
    };
    let h = m.h;
    if !(a >= T::zero() && a <= b && b <= h) {
        return Err(TheoryError::Target(format!("[{a}, {b}] not within [0, {h}]")));
    }
    let lambda = report.lambda0;
    let t = report.offset();
    let share = |lo: T, hi: T| -> Result<T, TheoryError> {
        let g = m.density.clone();
        Ok(lambda * integrate_pole(move |x| g(x), lo, hi, h, t, quad_opts())?.value)
    };
    if report.phase.uses_supremum() && b == h {
        return Ok(T::lit(2.0) - share(T::zero(), a)?);
    }
    share(a, b)
}

/// `η_{(j,k)}`: limiting fraction of vertices with fitness atom `j` and degree `k`.
///
/// `λ₀ q_j / (λ₀ + f_j) · (1/k) · Π_{ℓ=2}^{k} ℓ / (ℓ + λ₀/f_j)`, with `λ₀ = h`
/// in the condensation and boundary phases. The product is accumulated in
/// log space past `k = 1000`.
pub fn eta<T: Real>(model: &FitnessModel<T>, report: &PhaseReport<T>, j: usize, k: u64) -> Result<T, TheoryError> {
    let (pref, s) = eta_parts(model, report, j)?;
    if k == 0 {
        return Err(TheoryError::Degree);
    }
    Ok(pref * tail_product(s, k) / T::from_u64(k).unwrap_or_else(T::infinity))
}

/// `[η_{(j,1)}, ..., η_{(j,kmax)}]`.
pub fn eta_row<T: Real>(
    model: &FitnessModel<T>,
    report: &PhaseReport<T>,
    j: usize,
    kmax: u64,
) -> Result<Vec<T>, TheoryError> {
    let (pref, s) = eta_parts(model, report, j)?;
    let mut out = Vec::with_capacity(kmax as usize);
    let mut p = T::one();
    for k in 1..=kmax {
        if k >= 2 {
            let l = T::from_u64(k).unwrap();
            p *= l / (l + s);
        }
        out.push(pref * p / T::from_u64(k).unwrap());
    }
    Ok(out)
}

/// `Σ_{k≤K} k η_{(j,k)}`, increasing to `ν_j`.
pub fn eta_moment_partial<T: Real>(
    model: &FitnessModel<T>,
    report: &PhaseReport<T>,
    j: usize,
    kmax: u64,
) -> Result<T, TheoryError> {
    let (pref, s) = eta_parts(model, report, j)?;
    let mut acc = Compensated::default();
    let mut p = T::one();
    for k in 1..=kmax {
        if k >= 2 {
            let l = T::from_u64(k).unwrap();
            p *= l / (l + s);
        }
        acc.add(p);
    }
    Ok(pref * acc.value())
}

/// `Σ_{k>K} k η_{(j,k)}` in closed form, `+∞` when the first moment diverges.
pub fn eta_moment_tail<T: Real>(
    model: &FitnessModel<T>,
    report: &PhaseReport<T>,
    j: usize,
    kmax: u64,
) -> Result<T, TheoryError> {
    let (pref, s) = eta_parts(model, report, j)?;
    if !(s > T::one()) {
        return Ok(T::infinity());
    }
    if s.is_infinite() {
        return Ok(if kmax == 0 { pref } else { T::zero() });
    }
    let k1 = T::from_u64(kmax).unwrap() + T::one();
    Ok(pref * tail_product(s, kmax) * k1 / (s - T::one()))
}

/// `(λ₀ q_j / (λ₀ + f_j), λ₀ / f_j)`.
fn eta_parts<T: Real>(model: &FitnessModel<T>, report: &PhaseReport<T>, j: usize) -> Result<(T, T), TheoryError> {
    if !model.is_discrete() {
        return Err(TheoryError::Fitness(FitnessError::InvalidVariant {
            op: "eta",
            variant: model.variant_name(),
        }));
    }
    let (f, q) = model
        .atom(j)
        .ok_or_else(|| TheoryError::Target(format!("no atom with index {j}")))?;
    let lambda = report.lambda0;
    let s = if f == T::zero() { T::infinity() } else { lambda / f };
    Ok((lambda * q / (lambda + f), s))
}

/// `Π_{ℓ=2}^{k} ℓ / (ℓ + s)`.
fn tail_product<T: Real>(s: T, k: u64) -> T {
    if k <= 1 {
        return T::one();
    }
    if s.is_infinite() {
        return T::zero();
    }
    if k <= 1000 {
        let mut p = T::one();
        for l in 2..=k {
            let l = T::from_u64(l).unwrap();
            p *= l / (l + s);
        }
        return p;
    }
    let mut acc = Compensated::default();
    for l in 2..=k {
        acc.add(-(s / T::from_u64(l).unwrap()).ln_1p());
    }
    acc.value().exp()
}

/// `4 / (k (k+1) (k+2))` exactly.
pub fn mu_k_exact(k: u64) -> Result<Ratio<u128>, TheoryError> {
    if k == 0 {
        return Err(TheoryError::Degree);
    }
    let k = k as u128;
    let den = k
        .checked_mul(k + 1)
        .and_then(|x| x.checked_mul(k + 2))
        .ok_or(TheoryError::Overflow(k as u64))?;
    Ok(Ratio::new(4, den))
}

/// `μ_k = 4 / (k (k+1) (k+2))`, the degree law of plain preferential attachment.
pub fn mu_k<T: Real>(k: u64) -> Result<T, TheoryError> {
    let r = mu_k_exact(k)?;
    Ok(T::from_u128(*r.numer()).unwrap() / T::from_u128(*r.denom()).unwrap_or_else(T::infinity))
}

/// Degree tail exponent `λ₀ / f` of vertices with fitness `f`.
pub fn tail_exponent<T: Real>(report: &PhaseReport<T>, f: T) -> T {
    if f == T::zero() {
        T::infinity()
    } else {
        report.lambda0 / f
    }
}

/// Predicted growth exponent `f / λ₀` of `d_v(t)`.
pub fn vertex_exponent_prediction<T: Real>(report: &PhaseReport<T>, f: T) -> T {
    f / report.lambda0
}

/// Limit laws of one model, bundled with its phase report.
#[derive(Debug, Clone)]
pub struct LimitLaw<T> {
    pub model: FitnessModel<T>,
    pub report: PhaseReport<T>,
}

impl<T: Real> LimitLaw<T> {
    pub fn new(model: FitnessModel<T>) -> Result<Self, TheoryError> {
        let report = classify_phase(&model)?;
        Ok(Self { model, report })
    }

    pub fn nu(&self, target: NuTarget<T>) -> Result<T, TheoryError> {
        nu(&self.model, &self.report, target)
    }

    pub fn nu_atom(&self, j: usize) -> Result<T, TheoryError> {
        self.nu(NuTarget::Atom(j))
    }

    pub fn nu_interval(&self, a: T, b: T) -> Result<T, TheoryError> {
        self.nu(NuTarget::Interval(a, b))
    }

    pub fn eta(&self, j: usize, k: u64) -> Result<T, TheoryError> {
        eta(&self.model, &self.report, j, k)
    }

    pub fn tail_exponent(&self, f: T) -> T {
        tail_exponent(&self.report, f)
    }

    /// Whether the laws carry the condensation variant (`λ₀ = h`).
    pub fn is_innovation_variant(&self) -> bool {
        self.report.phase.uses_supremum()
    }
}

fn num(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else if x.is_nan() {
        json!("nan")
    } else if x > 0.0 {
        json!("inf")
    } else {
        json!("-inf")
    }
}

/// Which shares and degree cells go into a [`theory_report`].
#[derive(Debug, Clone, Default)]
pub struct ReportTables<T> {
    /// Atom indices for discrete models.
    pub atoms: Vec<usize>,
    /// Intervals for continuous models.
    pub intervals: Vec<(T, T)>,
    /// Degree cap for `eta_table`; 0 omits it.
    pub eta_kmax: u64,
}

/// JSON report with keys `lambda0`, `I_at_h`, `phase`, `missing_mass`,
/// `nu_table`, `eta_table`, `residual`. Non-finite numbers are written as the
/// strings `"inf"`, `"-inf"`, `"nan"`.
pub fn theory_report<T: Real>(law: &LimitLaw<T>, tables: &ReportTables<T>) -> Result<Value, TheoryError> {
    let r = &law.report;
    let mut nu_table = Vec::new();
    for &j in &tables.atoms {
        let (f, q) = law
            .model
            .atom(j)
            .ok_or_else(|| TheoryError::Target(format!("no atom with index {j}")))?;
        nu_table.push(json!({
            "atom": j,
            "fitness": num(f.as_f64()),
            "q": num(q.as_f64()),
            "nu": num(law.nu_atom(j)?.as_f64()),
            "tail_exponent": num(law.tail_exponent(f).as_f64()),
        }));
    }
    for &(a, b) in &tables.intervals {
        nu_table.push(json!({
            "a": num(a.as_f64()),
            "b": num(b.as_f64()),
            "nu": num(law.nu_interval(a, b)?.as_f64()),
        }));
    }
    let mut eta_table = Vec::new();
    if tables.eta_kmax > 0 && law.model.is_discrete() {
        for &j in &tables.atoms {
            for (k, v) in eta_row(&law.model, r, j, tables.eta_kmax)?.into_iter().enumerate() {
                eta_table.push(json!({"atom": j, "degree": k + 1, "eta": num(v.as_f64())}));
            }
        }
    }
    let diag = r.diagnostics.map(|d| {
        json!({
            "bracket": [num(d.bracket.0.as_f64()), num(d.bracket.1.as_f64())],
            "iterations": d.iterations,
        })
    });
    Ok(json!({
        "model": law.model.descriptor(),
        "lambda0": num(r.lambda0.as_f64()),
        "h": num(r.h.as_f64()),
        "I_at_h": num(r.i_at_h.as_f64()),
        "phase": r.phase.as_str(),
        "missing_mass": num(r.missing_mass.as_f64()),
        "residual": r.residual().map(|x| num(x.as_f64())).unwrap_or(Value::Null),
        "solver": diag.unwrap_or(Value::Null),
        "nu_table": nu_table,
        "eta_table": eta_table,
    }))
}

/// `∫_a^b x g(x) dx` over a model's density; used for interval means.
pub fn first_moment<T: Real>(model: &FitnessModel<T>, a: T, b: T) -> Result<T, TheoryError> {
    let FitnessModel::ContinuousDensity(m, _) = model else {
        return Err(TheoryError::Fitness(FitnessError::InvalidVariant {
            op: "first_moment",
            variant: model.variant_name(),
        }));
    };
    let g = m.density.clone();
    Ok(integrate(move |x| x * g(x), a, b, quad_opts())?.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    type M = FitnessModel<f64>;

    #[test]
    fn dirac_occupation_and_root() {
        let m = M::dirac(1.5);
        assert_abs_diff_eq!(occupation_integral(&m, 3.0).unwrap(), 1.0, epsilon = 1e-15);
        let r = solve_lambda0(&m).unwrap();
        assert_eq!(r.phase, Phase::FitGetRicher);
        assert_abs_diff_eq!(r.lambda0, 3.0, epsilon = 1e-12);
        assert_eq!(classify_phase(&m).unwrap().phase, Phase::FirstMoverAdvantage);
    }

    #[test]
    fn below_support_is_domain_error() {
        assert!(matches!(
            occupation_integral(&M::uniform(1.0), 0.5),
            Err(TheoryError::Domain { .. })
        ));
    }

    #[test]
    fn finite_model_diverges_at_top_atom() {
        let m = M::two_point(1.0, 2.0, 0.5);
        assert!(occupation_integral(&m, 2.0).unwrap().is_infinite());
    }

    #[test]
    fn monotone_decreasing() {
        for m in [
            M::two_point(1.0, 2.0, 0.5),
            M::uniform(1.0),
            M::beta(1.0, 3.0),
            M::zeta_family(2.0),
        ] {
            let h = m.sup();
            let mut prev = f64::INFINITY;
            for k in 1..40 {
                let lam = h + 1e-6 * 1.6f64.powi(k);
                let v = occupation_integral(&m, lam).unwrap();
                assert!(v < prev, "{m:?} at {lam}");
                prev = v;
            }
        }
    }

    #[test]
    fn beta_condensation() {
        let r = classify_phase(&M::beta(1.0, 3.0)).unwrap();
        assert_eq!(r.phase, Phase::InnovationPaysOff);
        assert_eq!(r.lambda0, 1.0);
        assert_abs_diff_eq!(r.missing_mass, 0.5, epsilon = 1e-10);
    }

    #[test]
    fn beta_fit_get_richer_when_b_small() {
        // I(1) = α/(β-1) = 2 > 1
        let r = classify_phase(&M::beta(2.0, 2.0)).unwrap();
        assert_eq!(r.phase, Phase::FitGetRicher);
        assert_abs_diff_eq!(r.i_at_h, 2.0, epsilon = 1e-9);
        assert!(r.residual().unwrap().abs() <= 1e-10);
    }

    #[test]
    fn boundary_case() {
        // α/(β-1) = 1
        let r = classify_phase(&M::beta(1.5, 2.5)).unwrap();
        assert_eq!(r.phase, Phase::FitGetRicherBoundary);
        assert_eq!(r.lambda0, 1.0);
        assert_eq!(r.missing_mass, 0.0);
    }

    #[test]
    fn zeta_heavy_tail_is_fit_get_richer() {
        let r = classify_phase(&M::zeta_family(-0.5)).unwrap();
        assert_eq!(r.phase, Phase::FitGetRicher);
        assert!(r.lambda0 > 1.0);
        assert!(r.residual().unwrap().abs() <= 1e-10);
    }

    #[test]
    fn dirac_eta_is_mu() {
        let m = M::dirac(1.0);
        let r = classify_phase(&m).unwrap();
        for k in 1..=100u64 {
            assert_abs_diff_eq!(eta(&m, &r, 1, k).unwrap(), mu_k::<f64>(k).unwrap(), epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_fitness_atom_never_grows() {
        let m = FitnessModel::<f64>::zeta_family(2.0);
        let r = classify_phase(&m).unwrap();
        assert_abs_diff_eq!(eta(&m, &r, 1, 1).unwrap(), m.atom(1).unwrap().1, epsilon = 1e-15);
        assert_eq!(eta(&m, &r, 1, 2).unwrap(), 0.0);
    }

    #[test]
    fn log_space_branch_agrees() {
        let s = 1.7;
        let direct: f64 = (2..=1001u64).map(|l| l as f64 / (l as f64 + s)).product();
        assert_abs_diff_eq!(tail_product(s, 1001), direct, epsilon = 1e-13);
    }

    #[test]
    fn mu_exact_values() {
        assert_eq!(mu_k_exact(1).unwrap(), Ratio::new(2, 3));
        assert_eq!(mu_k_exact(2).unwrap(), Ratio::new(1, 6));
        assert!(mu_k_exact(0).is_err());
        assert!(mu_k_exact(u64::MAX).is_err());
    }

    #[test]
    fn eta_invalid_for_density() {
        let m = M::uniform(1.0);
        let r = classify_phase(&m).unwrap();
        assert!(eta(&m, &r, 1, 1).is_err());
    }

    #[test]
    fn unbounded_is_degenerate() {
        let m = M::exponential(1.0);
        let r = classify_phase(&m).unwrap();
        assert_eq!(r.phase, Phase::UnboundedDegenerate);
        let v = nu(&m, &r, NuTarget::Interval(0.0, 2f64.ln())).unwrap();
        assert_abs_diff_eq!(v, 0.5, epsilon = 1e-14);
        // The unbounded top interval keeps everything that escapes: 2 - 1/2.
        for top in [f64::INFINITY, f64::MAX] {
            let v = nu(&m, &r, NuTarget::Interval(2f64.ln(), top)).unwrap();
            assert_abs_diff_eq!(v, 1.5, epsilon = 1e-14);
        }
    }

    #[test]
    fn report_serializes_infinity_as_string() {
        let law = LimitLaw::new(M::two_point(1.0, 2.0, 0.5)).unwrap();
        let v = theory_report(
            &law,
            &ReportTables {
                atoms: vec![1, 2],
                intervals: vec![],
                eta_kmax: 3,
            },
        )
        .unwrap();
        assert_eq!(v["I_at_h"], "inf");
        assert_eq!(v["phase"], "fit-get-richer");
        assert_eq!(v["eta_table"].as_array().unwrap().len(), 6);
        for key in ["lambda0", "missing_mass", "nu_table", "residual"] {
            assert!(v.get(key).is_some());
        }
    }

    #[test]
    fn f32_occupation() {
        let m = FitnessModel::<f32>::two_point(1.0, 2.0, 0.5);
        let r = solve_lambda0(&m).unwrap();
        assert!((r.lambda0 - 3.280_776_4).abs() < 1e-4);
    }
}
