//! Truncations, discretization, coupled multi-chain runs and convergence scans.
//!
//! The upper `I`-truncation keeps atoms `1..=I` and maps every later atom to
//! fitness 0; the lower one maps them to `h`. With fitness nondecreasing in
//! the atom index, the upper chain picks lower fitnesses than the original
//! and the lower chain picks higher ones, so the three chains can be run on
//! shared randomness with `M̲ <= M <= M̄` on the first `I` atoms.
//!
//! The coupled runs share vertex identities: the new vertex of step `t` has
//! the same atom in all three chains, and a head vertex (atom `<= I`) keeps
//! `d̲_v <= d_v <= d̄_v`. Summing over degrees at least `k` gives
//! `T̲ <= T <= T̄` for every `k`.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fitness::{FiniteDiscrete, FitnessError, FitnessModel, ModelDescriptor};
use crate::graph::{ClassLayout, EmpiricalSummary, NCell, RunFlags, Snapshot};
use crate::numerics::{bisect, expand_upward, RootError, RootOptions};
use crate::sampling::SumTree;
use crate::scalar::Real;
use crate::schedule::CheckpointSchedule;
use crate::theory::{solve_lambda0, Phase, TheoryError};
use crate::urn::{discretization_urn, UrnSpec};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CouplingError {
    #[error(transparent)]
    Fitness(#[from] FitnessError),
    #[error(transparent)]
    Theory(#[from] TheoryError),
    #[error("root solver failed: {0}")]
    Root(#[from] RootError),
    #[error("truncation index must be at least {min}, got {got}")]
    Index { min: usize, got: usize },
    #[error("{op} needs {need}, got {variant}; {hint}")]
    Variant {
        op: &'static str,
        need: &'static str,
        variant: &'static str,
        hint: &'static str,
    },
    #[error("fitness must be nondecreasing in the atom index: f_{j} = {fj} > f_{next} = {fnext}", next = j + 1)]
    NotMonotone { j: usize, fj: f64, fnext: f64 },
    #[error("discretized equation residual {residual} exceeds tolerance at λ = {lambda}")]
    Residual { lambda: f64, residual: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    /// Tail atoms get fitness 0.
    Upper,
    /// Tail atoms get fitness `h`.
    Lower,
}

/// The `I`-truncation of a discrete model, before equal fitness values are merged.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncationSpec<T> {
    pub base: ModelDescriptor,
    pub index: usize,
    pub side: Side,
    pub h: T,
    /// `f_1..f_I`.
    pub fitnesses: Vec<T>,
    /// `q_1..q_I`.
    pub probs: Vec<T>,
    /// Fitness given to atoms beyond `I`.
    pub tail_fitness: T,
    /// `Σ_{j>I} q_j`.
    pub tail_mass: T,
}

impl<T: Real> TruncationSpec<T> {
    /// Truncated fitness of atom `j`.
    pub fn fitness_of(&self, j: usize) -> T {
        if j <= self.index {
            self.fitnesses[j - 1]
        } else {
            self.tail_fitness
        }
    }

    /// The truncated law as a finite model, with equal fitness values merged.
    pub fn model(&self) -> FitnessModel<T> {
        let mut pairs: Vec<(T, T)> = self.fitnesses.iter().copied().zip(self.probs.iter().copied()).collect();
        if self.tail_mass > T::zero() {
            pairs.push((self.tail_fitness, self.tail_mass));
        }
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite fitness"));
        let mut f: Vec<T> = Vec::with_capacity(pairs.len());
        let mut q: Vec<T> = Vec::with_capacity(pairs.len());
        for (fj, qj) in pairs {
            if f.last() == Some(&fj) {
                *q.last_mut().unwrap() += qj;
            } else {
                f.push(fj);
                q.push(qj);
            }
        }
        let mut m = FiniteDiscrete::new(f, q);
        m.allow_zero = true;
        let side = match self.side {
            Side::Upper => "upper",
            Side::Lower => "lower",
        };
        let mut d = self.base.clone();
        d.name = format!("{}-{side}-truncation", self.base.name);
        d.params.insert("I".into(), self.index as f64);
        FitnessModel::FiniteDiscrete(m, d)
    }
}

fn require_discrete<T: Real>(model: &FitnessModel<T>, op: &'static str) -> Result<(), CouplingError> {
    match model {
        FitnessModel::FiniteDiscrete(..) | FitnessModel::CountableDiscrete(..) => Ok(()),
        _ => Err(CouplingError::Variant {
            op,
            need: "a discrete model",
            variant: model.variant_name(),
            hint: "use discretize for densities",
        }),
    }
}

pub fn truncation_spec<T: Real>(
    model: &FitnessModel<T>,
    index: usize,
    side: Side,
) -> Result<TruncationSpec<T>, CouplingError> {
    require_discrete(model, "truncate")?;
    if index < 1 {
        return Err(CouplingError::Index { min: 1, got: index });
    }
    let keep = model.atom_count().map_or(index, |j| j.min(index));
    let (fitnesses, probs): (Vec<T>, Vec<T>) = (1..=keep).map(|j| model.atom(j).expect("atom in range")).unzip();
    let h = model.sup();
    Ok(TruncationSpec {
        base: model.descriptor().clone(),
        index,
        side,
        h,
        fitnesses,
        probs,
        tail_fitness: match side {
            Side::Upper => T::zero(),
            Side::Lower => h,
        },
        tail_mass: model.mass_beyond(index)?,
    })
}

/// Upper or lower `I`-truncation as a finite model.
pub fn truncate<T: Real>(model: &FitnessModel<T>, index: usize, side: Side) -> Result<FitnessModel<T>, CouplingError> {
    Ok(truncation_spec(model, index, side)?.model())
}

/// Lower grid approximation of a bounded density on `I` cells of width `ε = h / I`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretizationSpec<T> {
    pub base: ModelDescriptor,
    pub h: T,
    /// `I`.
    pub cells: usize,
    pub epsilon: T,
    /// `f̄_i = h i / I`.
    pub upper: Vec<T>,
    /// `f̲_i = h (i - 1) / I`.
    pub lower: Vec<T>,
    /// `q̃_i`, the mass of cell `i`.
    pub cell_masses: Vec<T>,
    /// `G = Σ q̃_i`.
    pub total_mass: T,
}

/// Cell grid and masses plus the `I + 1`-bin urn.
pub fn discretize<T: Real>(
    model: &FitnessModel<T>,
    cells: usize,
) -> Result<(DiscretizationSpec<T>, UrnSpec<T>), CouplingError> {
    let h = match model {
        FitnessModel::ContinuousDensity(m, _) => m.h,
        _ => {
            return Err(CouplingError::Variant {
                op: "discretize",
                need: "a bounded density",
                variant: model.variant_name(),
                hint: "use truncate for discrete models",
            })
        }
    };
    if cells < 2 {
        return Err(CouplingError::Index { min: 2, got: cells });
    }
    let n = T::from_usize_lossy(cells);
    let grid = |i: usize| if i == cells { h } else { h * T::from_usize_lossy(i) / n };
    let upper: Vec<T> = (1..=cells).map(grid).collect();
    let lower: Vec<T> = (0..cells).map(grid).collect();
    let cell_masses = lower
        .iter()
        .zip(&upper)
        .map(|(&a, &b)| model.interval_mass(a, b).map(|q| q.max(T::zero())))
        .collect::<Result<Vec<_>, _>>()?;
    let total_mass = cell_masses.iter().copied().sum();
    let spec = DiscretizationSpec {
        base: model.descriptor().clone(),
        h,
        cells,
        epsilon: h / n,
        upper,
        lower,
        cell_masses,
        total_mass,
    };
    let urn = discretization_urn(&spec);
    Ok((spec, urn))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretizedRoot<T> {
    /// `λ̃₀`.
    pub lambda: T,
    /// `ν̃_1..ν̃_{I+1}`.
    pub nu: Vec<T>,
    pub residual: T,
    /// `Σ ν̃_j - (1 + G)`.
    pub nu_sum_error: T,
    pub iterations: usize,
}

fn discretized_lhs<T: Real>(spec: &DiscretizationSpec<T>, t: T) -> T {
    // λ = (h - ε) + t; every denominator is t plus a nonnegative gap.
    let base = spec.h - spec.epsilon;
    let lambda = base + t;
    let mut s = T::zero();
    for j in 0..spec.cells {
        s += spec.upper[j] * spec.cell_masses[j] / (t + (base - spec.lower[j]));
    }
    s + spec.h * (T::one() + spec.total_mass) * spec.epsilon / (lambda * t)
}

/// Unique root `λ̃₀ > h - ε` of the discretized equation, with `ν̃`.
pub fn solve_discretization_lambda<T: Real>(spec: &DiscretizationSpec<T>) -> Result<DiscretizedRoot<T>, CouplingError> {
    let one = T::one();
    let g = |t: T| discretized_lhs(spec, t) - one;
    let hi = expand_upward(spec.h.max(one), |t| g(t) < T::zero(), 200)?;
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
    let base = spec.h - spec.epsilon;
    let lambda = base + out.root;
    if !(out.residual.abs() <= T::floor_tol(1e-10, 64.0)) {
        return Err(CouplingError::Residual {
            lambda: lambda.as_f64(),
            residual: out.residual.as_f64(),
        });
    }
    let mut nu: Vec<T> = (0..spec.cells)
        .map(|j| lambda * spec.cell_masses[j] / (out.root + (base - spec.lower[j])))
        .collect();
    nu.push((one + spec.total_mass) * spec.epsilon / out.root);
    let sum: T = nu.iter().copied().sum();
    Ok(DiscretizedRoot {
        lambda,
        nu,
        residual: out.residual,
        nu_sum_error: sum - (one + spec.total_mass),
        iterations: out.iterations,
    })
}

/// One row of a convergence scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub index: usize,
    /// `λ₀` of the lower truncation (tail mapped to `h`).
    pub lower_truncation: Option<f64>,
    /// `λ₀` of the upper truncation (tail mapped to 0).
    pub upper_truncation: Option<f64>,
    /// `λ̃₀` of the discretization.
    pub discretized: Option<f64>,
    pub epsilon: Option<f64>,
    /// Largest solver residual among the roots of this row.
    pub residual: f64,
    /// `Σ ν̃ - (1 + G)` for discretized rows.
    pub nu_sum_error: Option<f64>,
    /// For truncations, `λ̄₀^I <= λ₀ <= λ̲₀^I`; for discretizations, `λ̃₀ > λ₀ - ε`.
    pub bracket_holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanTable {
    pub model: ModelDescriptor,
    pub target: f64,
    pub phase: Phase,
    pub rows: Vec<ScanRow>,
    /// Upper-truncation roots nondecreasing and lower-truncation roots nonincreasing in `I`.
    pub monotone: bool,
}

impl ScanTable {
    /// `I,lower_truncation,upper_truncation,discretized,epsilon,target,residual,bracket_holds`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let opt = |x: Option<f64>| x.map(|v| format!("{v:.15e}")).unwrap_or_default();
        writeln!(
            w,
            "I,lower_truncation,upper_truncation,discretized,epsilon,target,residual,bracket_holds"
        )?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{:.15e},{:.3e},{}",
                r.index,
                opt(r.lower_truncation),
                opt(r.upper_truncation),
                opt(r.discretized),
                opt(r.epsilon),
                self.target,
                r.residual,
                r.bracket_holds
            )?;
        }
        Ok(())
    }
}

/// Truncated (discrete) or discretized (density) roots for each `I`, against `λ₀`.
pub fn lambda0_convergence_scan<T: Real>(
    model: &FitnessModel<T>,
    indices: &[usize],
) -> Result<ScanTable, CouplingError> {
    let report = solve_lambda0(model)?;
    let target = report.lambda0.as_f64();
    let tol = 1e-9 * target.abs().max(1.0);
    let mut rows = Vec::with_capacity(indices.len());
    for &i in indices {
        let row = match model {
            FitnessModel::ContinuousDensity(..) => {
                let (spec, _) = discretize(model, i)?;
                let root = solve_discretization_lambda(&spec)?;
                let lt = root.lambda.as_f64();
                let eps = spec.epsilon.as_f64();
                ScanRow {
                    index: i,
                    lower_truncation: None,
                    upper_truncation: None,
                    discretized: Some(lt),
                    epsilon: Some(eps),
                    residual: root.residual.as_f64().abs(),
                    nu_sum_error: Some(root.nu_sum_error.as_f64()),
                    bracket_holds: lt > target - eps - tol,
                }
            }
            _ => {
                let lo = solve_lambda0(&truncate(model, i, Side::Lower)?)?;
                let up = solve_lambda0(&truncate(model, i, Side::Upper)?)?;
                let residual = [lo.residual(), up.residual()]
                    .into_iter()
                    .flatten()
                    .map(|r| r.as_f64().abs())
                    .fold(0.0, f64::max);
                let (l, u) = (lo.lambda0.as_f64(), up.lambda0.as_f64());
                ScanRow {
                    index: i,
                    lower_truncation: Some(l),
                    upper_truncation: Some(u),
                    discretized: None,
                    epsilon: None,
                    residual,
                    nu_sum_error: None,
                    bracket_holds: u <= target + tol && target <= l + tol,
                }
            }
        };
        rows.push(row);
    }
    let mut order: Vec<&ScanRow> = rows.iter().collect();
    order.sort_by_key(|r| r.index);
    let monotone = order.windows(2).all(|w| {
        let up_ok = match (w[0].upper_truncation, w[1].upper_truncation) {
            (Some(a), Some(b)) => b >= a - tol,
            _ => true,
        };
        let lo_ok = match (w[0].lower_truncation, w[1].lower_truncation) {
            (Some(a), Some(b)) => b <= a + tol,
            _ => true,
        };
        up_ok && lo_ok
    });
    Ok(ScanTable {
        model: model.descriptor().clone(),
        target,
        phase: report.phase,
        rows,
        monotone,
    })
}

/// Which condition of the coupling failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Condition {
    /// Fitness order of picked and new endpoints.
    #[serde(rename = "1")]
    FitnessOrder,
    /// `M̲ <= M <= M̄` on atoms `1..=I`.
    #[serde(rename = "2")]
    EdgeCounts,
    /// `ρ̲ <= ρ <= ρ̄` on atoms `1..=I`.
    #[serde(rename = "3")]
    PickProbabilities,
    /// `T̲ <= T <= T̄` on atoms `1..=I`.
    #[serde(rename = "4")]
    DegreeTails,
}

/// `M` on atoms `1..=I` in the three chains at the time of a violation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateDigest {
    pub upper: Vec<u64>,
    pub middle: Vec<u64>,
    pub lower: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub step: u64,
    pub condition: Condition,
    /// 1-based atom.
    pub atom: Option<usize>,
    pub k: Option<u64>,
    /// Values in the upper, original and lower chain.
    pub values: [f64; 3],
    pub digest: StateDigest,
}

/// Writes one JSON object per line.
pub fn write_violations<W: Write>(violations: &[Violation], mut w: W) -> std::io::Result<()> {
    for v in violations {
        serde_json::to_writer(&mut w, v)?;
        writeln!(w)?;
    }
    Ok(())
}

/// Three chains driven by shared randomness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoupledRun {
    pub index: usize,
    pub seed: u64,
    pub steps: u64,
    /// Upper truncation, original model, lower truncation. In the truncated
    /// chains class `I` (0-based) holds every atom beyond `I`.
    pub upper: EmpiricalSummary,
    pub middle: EmpiricalSummary,
    pub lower: EmpiricalSummary,
    /// The first [`VIOLATION_LOG_LIMIT`] violations of each condition.
    pub violations: Vec<Violation>,
    /// Violations per condition, in the order 1, 2, 3, 4.
    pub violation_counts: [u64; 4],
    /// Steps where all three chains picked the same vertex, where only the
    /// upper and original did, and where only the upper picked a head vertex.
    pub branch_counts: [u64; 3],
    /// Steps where some chain had zero total weight.
    pub fallback_steps: u64,
    /// Largest `|Σ_{i<=I} ρ̄_i - 1|` over the run.
    pub branch_mass_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailRow {
    pub n: u64,
    pub atom: usize,
    pub k: u64,
    pub lower: u64,
    pub middle: u64,
    pub upper: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeCouplingReport {
    pub run: CoupledRun,
    /// `T̲, T, T̄` for atoms `1..=I` at each checkpoint.
    pub tails: Vec<TailRow>,
}

impl DegreeCouplingReport {
    /// `n,atom,k,lower,middle,upper`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "n,atom,k,lower,middle,upper")?;
        for r in &self.tails {
            writeln!(w, "{},{},{},{},{},{}", r.n, r.atom, r.k, r.lower, r.middle, r.upper)?;
        }
        Ok(())
    }
}

/// One chain of a coupled run. Vertex ids are shared: vertex `t` is born at
/// step `t` with the same atom in all three chains, so atoms `1..=I` ("head"
/// vertices) can be compared vertex by vertex.
struct Chain<T: Real> {
    /// Fitness per class; class `I` of a truncated chain is the merged tail.
    class_fit: Vec<T>,
    /// Fitness and degree per vertex.
    fit: Vec<T>,
    degree: Vec<u32>,
    /// `f_v d_v` over head vertices and over tail vertices, indexed by position.
    head: SumTree<T>,
    tail: SumTree<T>,
    m: Vec<u64>,
    verts: Vec<u64>,
    hist: Vec<Vec<u64>>,
    /// Tail vertices of the original chain stay distinct classes; truncated chains merge them.
    merged_tail: bool,
}

impl<T: Real> Chain<T> {
    fn new(class_fit: Vec<T>, merged_tail: bool) -> Self {
        let q = class_fit.len();
        Self {
            class_fit,
            fit: Vec::new(),
            degree: Vec::new(),
            head: SumTree::new(),
            tail: SumTree::new(),
            m: vec![0; q],
            verts: vec![0; q],
            hist: vec![Vec::new(); q],
            merged_tail,
        }
    }

    fn total(&self) -> T {
        self.head.total() + self.tail.total()
    }

    fn ensure_class(&mut self, c: usize, f: T) {
        while self.class_fit.len() <= c {
            self.class_fit.push(f);
            self.m.push(0);
            self.verts.push(0);
            self.hist.push(Vec::new());
        }
        self.class_fit[c] = f;
    }

    fn bump(&mut self, c: usize, from: u32, to: u32, endpoints: u64) {
        let h = &mut self.hist[c];
        if h.len() <= to as usize {
            h.resize(to as usize + 1, 0);
        }
        if from > 0 {
            h[from as usize] -= 1;
        }
        h[to as usize] += 1;
        self.m[c] += endpoints;
    }

    fn set_weight(&mut self, slot: Slot, v: usize) {
        let w = self.fit[v] * T::from_u32(self.degree[v]).unwrap();
        if slot.head {
            self.head.set(slot.pos, w);
        } else {
            self.tail.set(slot.pos, w);
        }
    }

    fn add_vertex(&mut self, slot: Slot, class: usize, f: T, degree: u32) {
        self.fit.push(f);
        self.degree.push(degree);
        let w = f * T::from_u32(degree).unwrap();
        if slot.head {
            self.head.push(w);
        } else {
            self.tail.push(w);
        }
        self.verts[class] += 1;
        self.bump(class, 0, degree, degree as u64);
    }

    fn attach(&mut self, slot: Slot, class: usize, v: usize) {
        let d = self.degree[v];
        self.degree[v] = d + 1;
        self.set_weight(slot, v);
        self.bump(class, d, d + 1, 1);
    }

    /// `T_{(c,k)}` for `k = 1..=max degree`, as `tails[k - 1]`.
    fn tails(&self, c: usize) -> Vec<u64> {
        let h = match self.hist.get(c) {
            Some(h) => h,
            None => return Vec::new(),
        };
        let mut out = vec![0; h.len().saturating_sub(1)];
        let mut acc = 0;
        for d in (1..h.len()).rev() {
            acc += d as u64 * h[d];
            out[d - 1] = acc;
        }
        out
    }

    fn snapshot(&self, n: u64) -> Snapshot {
        let mut cells = Vec::new();
        let mut hist: Vec<u64> = Vec::new();
        for (c, h) in self.hist.iter().enumerate() {
            for (d, &cnt) in h.iter().enumerate() {
                if cnt > 0 {
                    cells.push(NCell {
                        class: c,
                        degree: d as u64,
                        count: cnt,
                    });
                    if hist.len() <= d {
                        hist.resize(d + 1, 0);
                    }
                    hist[d] += cnt;
                }
            }
        }
        Snapshot {
            n,
            vertices: self.degree.len() as u64,
            degree_sum: self.m.iter().sum(),
            m: self.m.clone(),
            cells,
            degree_hist: hist
                .iter()
                .enumerate()
                .filter(|(_, &c)| c > 0)
                .map(|(d, &c)| (d as u64, c))
                .collect(),
            max_fitness: self.fit.iter().map(|f| f.as_f64()).fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Slot {
    head: bool,
    pos: usize,
}

fn check_bounded_monotone<T: Real>(model: &FitnessModel<T>, index: usize) -> Result<(), CouplingError> {
    require_discrete(model, "coupled run")?;
    if index < 1 {
        return Err(CouplingError::Index { min: 1, got: index });
    }
    if !model.sup().is_finite() {
        return Err(CouplingError::Variant {
            op: "coupled run",
            need: "bounded fitness",
            variant: model.variant_name(),
            hint: "unbounded models have no lower truncation",
        });
    }
    let upto = model.atom_count().map_or(index + 1, |j| j.min(index + 1));
    for j in 1..upto {
        let (a, b) = (model.atom(j).unwrap().0, model.atom(j + 1).unwrap().0);
        if a > b {
            return Err(CouplingError::NotMonotone {
                j,
                fj: a.as_f64(),
                fnext: b.as_f64(),
            });
        }
    }
    Ok(())
}

/// Picks made in one step: vertex ids in the upper, original and lower chain.
#[derive(Debug, Clone, Copy)]
struct Picks {
    up: usize,
    mid: usize,
    lo: usize,
}

struct Coupled<'a, T: Real> {
    model: &'a FitnessModel<T>,
    index: usize,
    h: T,
    slots: Vec<Slot>,
    atoms: Vec<usize>,
    head_ids: Vec<usize>,
    tail_ids: Vec<usize>,
    up: Chain<T>,
    mid: Chain<T>,
    lo: Chain<T>,
    violations: Vec<Violation>,
    violation_counts: [u64; 4],
    branch_counts: [u64; 3],
    fallback_steps: u64,
    branch_mass_error: f64,
    check_tails: bool,
}

/// Violations kept in full per condition; later ones are only counted.
pub const VIOLATION_LOG_LIMIT: usize = 1000;

impl<'a, T: Real> Coupled<'a, T> {
    fn new(model: &'a FitnessModel<T>, index: usize, check_tails: bool) -> Self {
        let fits: Vec<T> = (1..=index)
            .map(|j| model.atom(j).map_or(model.sup(), |a| a.0))
            .collect();
        let h = model.sup();
        let mut up_fit = fits.clone();
        up_fit.push(T::zero());
        let mut lo_fit = fits;
        lo_fit.push(h);
        Self {
            model,
            index,
            h,
            slots: Vec::new(),
            atoms: Vec::new(),
            head_ids: Vec::new(),
            tail_ids: Vec::new(),
            up: Chain::new(up_fit, true),
            mid: Chain::new(Vec::new(), false),
            lo: Chain::new(lo_fit, true),
            violations: Vec::new(),
            violation_counts: [0; 4],
            branch_counts: [0; 3],
            fallback_steps: 0,
            branch_mass_error: 0.0,
            check_tails,
        }
    }

    fn class_in(&self, chain: &Chain<T>, atom: usize) -> usize {
        if chain.merged_tail {
            (atom - 1).min(self.index)
        } else {
            atom - 1
        }
    }

    fn digest(&self) -> StateDigest {
        let first = |c: &Chain<T>| (0..self.index).map(|i| c.m.get(i).copied().unwrap_or(0)).collect();
        StateDigest {
            upper: first(&self.up),
            middle: first(&self.mid),
            lower: first(&self.lo),
        }
    }

    fn record(&mut self, step: u64, condition: Condition, atom: Option<usize>, k: Option<u64>, values: [f64; 3]) {
        let slot = condition as usize;
        self.violation_counts[slot] += 1;
        if self.violation_counts[slot] > VIOLATION_LOG_LIMIT as u64 {
            return;
        }
        let digest = self.digest();
        self.violations.push(Violation {
            step,
            condition,
            atom,
            k,
            values,
            digest,
        });
    }

    fn add_vertex(&mut self, atom: usize, degree: u32) {
        let (f, _) = self.model.atom(atom).expect("sampled atom exists");
        let head = atom <= self.index;
        let v = self.slots.len();
        let slot = if head {
            self.head_ids.push(v);
            Slot {
                head,
                pos: self.head_ids.len() - 1,
            }
        } else {
            self.tail_ids.push(v);
            Slot {
                head,
                pos: self.tail_ids.len() - 1,
            }
        };
        self.slots.push(slot);
        self.atoms.push(atom);
        let (fu, fl) = if head { (f, f) } else { (T::zero(), self.h) };
        let (cu, cm, cl) = (self.class_in(&self.up, atom), atom - 1, self.class_in(&self.lo, atom));
        self.mid.ensure_class(cm, f);
        self.up.add_vertex(slot, cu, fu, degree);
        self.mid.add_vertex(slot, cm, f, degree);
        self.lo.add_vertex(slot, cl, fl, degree);
    }

    fn id_of(&self, head: bool, pos: usize) -> usize {
        if head {
            self.head_ids[pos]
        } else {
            self.tail_ids[pos]
        }
    }

    /// Vertex by the chain's own law, or uniformly when its weights all vanish.
    fn pick_own(&self, chain: &Chain<T>, u: f64) -> usize {
        let (wh, wt) = (chain.head.total(), chain.tail.total());
        let total = wh + wt;
        if !(total > T::zero()) {
            return ((u * self.slots.len() as f64) as usize).min(self.slots.len() - 1);
        }
        let x = T::lit(u) * total;
        if x < wh || !(wt > T::zero()) {
            self.id_of(true, chain.head.find(x).expect("positive head"))
        } else {
            self.id_of(false, chain.tail.find(x - wh).expect("positive tail"))
        }
    }

    fn pick_tail(&self, chain: &Chain<T>, u: f64) -> Option<usize> {
        let wt = chain.tail.total();
        (wt > T::zero()).then(|| self.id_of(false, chain.tail.find(T::lit(u) * wt).expect("positive tail")))
    }

    /// Nested thinning: the upper chain draws `v` from its own law; the
    /// original chain keeps `v` with probability `p_v / p̄_v`, else draws
    /// from its tail; the lower chain keeps the original's head pick with
    /// probability `p̲_v / p_v`, else draws from its tail. The joint law is
    /// the split into `p̲_v`, `p_v - p̲_v` and `p̄_v - p_v`.
    fn pick(&mut self, step: u64, r: [f64; 4]) -> Picks {
        let (wu, wm, wl) = (self.up.total(), self.mid.total(), self.lo.total());
        if !(wu > T::zero()) {
            self.fallback_steps += 1;
            if !(wm > T::zero()) {
                // All weights vanish only while every vertex has fitness 0,
                // and then the three chains are identical.
                let v = self.pick_own(&self.mid, r[0]);
                return Picks { up: v, mid: v, lo: v };
            }
            return Picks {
                up: self.pick_own(&self.up, r[0]),
                mid: self.pick_own(&self.mid, r[3]),
                lo: self.pick_own(&self.lo, r[3]),
            };
        }
        self.check_class_probabilities(step, wu, wm, wl);
        let v = self.id_of(true, self.up.head.find(T::lit(r[0]) * wu).expect("positive head"));
        let (du, dm, dl) = (
            T::from_u32(self.up.degree[v]).unwrap(),
            T::from_u32(self.mid.degree[v]).unwrap(),
            T::from_u32(self.lo.degree[v]).unwrap(),
        );
        // p_v / p̄_v = (d_v W̄) / (d̄_v W)
        let keep_mid = T::lit(r[1]) * du * wm < dm * wu;
        let mid_tail = self.pick_tail(&self.mid, r[3]);
        let lo_tail = self.pick_tail(&self.lo, r[3]);
        match mid_tail.filter(|_| !keep_mid) {
            None => {
                let keep_lo = T::lit(r[2]) * dm * wl < dl * wm;
                match lo_tail.filter(|_| !keep_lo) {
                    None => {
                        self.branch_counts[0] += 1;
                        Picks { up: v, mid: v, lo: v }
                    }
                    Some(lo) => {
                        self.branch_counts[1] += 1;
                        Picks { up: v, mid: v, lo }
                    }
                }
            }
            Some(mid) => {
                self.branch_counts[2] += 1;
                Picks {
                    up: v,
                    mid,
                    lo: lo_tail.unwrap_or(v),
                }
            }
        }
    }

    fn check_class_probabilities(&mut self, step: u64, wu: T, wm: T, wl: T) {
        let ii = self.index;
        let rho = |c: &Chain<T>, w: T, i: usize| {
            (c.class_fit.get(i).copied().unwrap_or(T::zero()) * T::from_u64(c.m.get(i).copied().unwrap_or(0)).unwrap()
                / w)
                .as_f64()
        };
        let mut up_sum = 0.0;
        for i in 0..ii {
            let (a, b, c) = (rho(&self.up, wu, i), rho(&self.mid, wm, i), rho(&self.lo, wl, i));
            up_sum += a;
            let slack = 1e-12;
            if c > b + slack || b > a + slack {
                self.record(step - 1, Condition::PickProbabilities, Some(i + 1), None, [a, b, c]);
            }
        }
        self.branch_mass_error = self.branch_mass_error.max((up_sum - 1.0).abs());
    }

    fn step<R: Rng>(&mut self, step: u64, rng: &mut R) {
        let r: [f64; 4] = rng.gen();
        let p = self.pick(step, r);
        let (fa, fb, fc) = (self.up.fit[p.up], self.mid.fit[p.mid], self.lo.fit[p.lo]);
        if !(fa <= fb && fb <= fc) && !(p.up == p.mid && p.mid == p.lo) {
            self.record(
                step,
                Condition::FitnessOrder,
                None,
                None,
                [fa.as_f64(), fb.as_f64(), fc.as_f64()],
            );
        }
        let (au, am, al) = (self.atoms[p.up], self.atoms[p.mid], self.atoms[p.lo]);
        let (cu, cm, cl) = (self.class_in(&self.up, au), am - 1, self.class_in(&self.lo, al));
        self.up.attach(self.slots[p.up], cu, p.up);
        self.mid.attach(self.slots[p.mid], cm, p.mid);
        self.lo.attach(self.slots[p.lo], cl, p.lo);

        let (_, atom) = self.model.sample(rng);
        let atom = atom.expect("discrete model");
        self.add_vertex(atom, 1);
        let nv = self.slots.len() - 1;
        let (ga, gb, gc) = (self.up.fit[nv], self.mid.fit[nv], self.lo.fit[nv]);
        if !(ga <= gb && gb <= gc) {
            self.record(
                step,
                Condition::FitnessOrder,
                None,
                None,
                [ga.as_f64(), gb.as_f64(), gc.as_f64()],
            );
        }

        for i in 0..self.index {
            let (x, y, z) = (self.up.m[i], self.mid.m.get(i).copied().unwrap_or(0), self.lo.m[i]);
            if !(z <= y && y <= x) {
                self.record(
                    step,
                    Condition::EdgeCounts,
                    Some(i + 1),
                    None,
                    [x as f64, y as f64, z as f64],
                );
            }
        }
        if self.check_tails {
            let mut touched: Vec<usize> = [cu, cm, cl, atom - 1].into_iter().filter(|&i| i < self.index).collect();
            touched.sort_unstable();
            touched.dedup();
            for i in touched {
                self.check_class_tails(step, i);
            }
        }
    }

    fn check_class_tails(&mut self, step: u64, i: usize) {
        let (tu, tm, tl) = (self.up.tails(i), self.mid.tails(i), self.lo.tails(i));
        let len = tu.len().max(tm.len()).max(tl.len());
        let at = |t: &[u64], k: usize| t.get(k).copied().unwrap_or(0);
        for k in 0..len {
            let (x, y, z) = (at(&tu, k), at(&tm, k), at(&tl, k));
            if !(z <= y && y <= x) {
                self.record(
                    step,
                    Condition::DegreeTails,
                    Some(i + 1),
                    Some(k as u64 + 1),
                    [x as f64, y as f64, z as f64],
                );
            }
        }
    }

    fn tail_rows(&self, n: u64) -> Vec<TailRow> {
        let mut rows = Vec::new();
        for i in 0..self.index {
            let (tu, tm, tl) = (self.up.tails(i), self.mid.tails(i), self.lo.tails(i));
            let len = tu.len().max(tm.len()).max(tl.len());
            let at = |t: &[u64], k: usize| t.get(k).copied().unwrap_or(0);
            for k in 0..len {
                rows.push(TailRow {
                    n,
                    atom: i + 1,
                    k: k as u64 + 1,
                    lower: at(&tl, k),
                    middle: at(&tm, k),
                    upper: at(&tu, k),
                });
            }
        }
        rows
    }
}

fn summary(model: ModelDescriptor, seed: u64, snaps: Vec<Snapshot>, fallbacks: u64) -> EmpiricalSummary {
    EmpiricalSummary {
        model,
        seed,
        layout: ClassLayout::Atoms,
        snapshots: snaps,
        trajectories: Vec::new(),
        flags: RunFlags {
            zero_weight_fallbacks: fallbacks,
            ..Default::default()
        },
    }
}

fn run_coupled<T: Real>(
    model: &FitnessModel<T>,
    index: usize,
    n: u64,
    seed: u64,
    schedule: &CheckpointSchedule,
    tails: bool,
) -> Result<(CoupledRun, Vec<TailRow>), CouplingError> {
    check_bounded_monotone(model, index)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut c = Coupled::new(model, index, tails);
    let (_, atom) = model.sample(&mut rng);
    c.add_vertex(atom.expect("discrete model"), 2);
    let points = schedule.points(n);
    let mut next = 0;
    let (mut su, mut sm, mut sl) = (Vec::new(), Vec::new(), Vec::new());
    let mut tail_rows = Vec::new();
    for step in 1..=n {
        c.step(step, &mut rng);
        if next < points.len() && points[next] == step {
            su.push(c.up.snapshot(step));
            sm.push(c.mid.snapshot(step));
            sl.push(c.lo.snapshot(step));
            if tails {
                tail_rows.extend(c.tail_rows(step));
            }
            next += 1;
        }
    }
    let up_desc = truncation_spec(model, index, Side::Upper)?.model().descriptor().clone();
    let lo_desc = truncation_spec(model, index, Side::Lower)?.model().descriptor().clone();
    let run = CoupledRun {
        index,
        seed,
        steps: n,
        upper: summary(up_desc, seed, su, 0),
        middle: summary(model.descriptor().clone(), seed, sm, 0),
        lower: summary(lo_desc, seed, sl, 0),
        violations: c.violations,
        violation_counts: c.violation_counts,
        branch_counts: c.branch_counts,
        fallback_steps: c.fallback_steps,
        branch_mass_error: c.branch_mass_error,
    };
    Ok((run, tail_rows))
}

/// Original chain and its two `I`-truncations on shared randomness; checks
/// the fitness order and `M̲ <= M <= M̄` after every step.
pub fn coupled_triple_run<T: Real>(
    model: &FitnessModel<T>,
    index: usize,
    n: u64,
    seed: u64,
    schedule: &CheckpointSchedule,
) -> Result<CoupledRun, CouplingError> {
    Ok(run_coupled(model, index, n, seed, schedule, false)?.0)
}

/// [`coupled_triple_run`] plus `T̲ <= T <= T̄` on atoms `1..=I` after every
/// step, with the tails at each checkpoint.
pub fn coupled_degree_run<T: Real>(
    model: &FitnessModel<T>,
    index: usize,
    n: u64,
    seed: u64,
    schedule: &CheckpointSchedule,
) -> Result<DegreeCouplingReport, CouplingError> {
    let (run, tails) = run_coupled(model, index, n, seed, schedule, true)?;
    Ok(DegreeCouplingReport { run, tails })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    type M = FitnessModel<f64>;

    #[test]
    fn zeta_lower_truncation_atoms() {
        let m = M::zeta_family(2.0);
        let t = truncate(&m, 3, Side::Lower).unwrap();
        let FitnessModel::FiniteDiscrete(fd, _) = &t else {
            panic!()
        };
        assert_eq!(fd.fitnesses.len(), 4);
        assert_abs_diff_eq!(fd.fitnesses[0], 0.0);
        assert_abs_diff_eq!(fd.fitnesses[1], 0.5);
        assert_abs_diff_eq!(fd.fitnesses[2], 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(fd.fitnesses[3], 1.0);
        assert_eq!(fd.probs[3], m.mass_beyond(3).unwrap());
        for j in 1..=3 {
            assert_eq!(fd.probs[j - 1], m.atom(j).unwrap().1);
        }
    }

    #[test]
    fn zeta_upper_truncation_merges_zero() {
        let m = M::zeta_family(2.0);
        let t = truncate(&m, 3, Side::Upper).unwrap();
        let FitnessModel::FiniteDiscrete(fd, _) = &t else {
            panic!()
        };
        assert_eq!(fd.fitnesses, vec![0.0, 0.5, 1.0 - 1.0 / 3.0]);
        assert_abs_diff_eq!(
            fd.probs[0],
            m.atom(1).unwrap().1 + m.mass_beyond(3).unwrap(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn finite_truncation_is_identity() {
        let m = M::two_point(1.0, 2.0, 0.3);
        for side in [Side::Upper, Side::Lower] {
            let t = truncate(&m, 2, side).unwrap();
            let FitnessModel::FiniteDiscrete(fd, _) = &t else {
                panic!()
            };
            assert_eq!(fd.fitnesses, vec![1.0, 2.0]);
            assert_eq!(fd.probs, vec![0.3, 0.7]);
        }
    }

    #[test]
    fn truncate_rejects_densities() {
        assert!(matches!(
            truncate(&M::uniform(1.0), 3, Side::Upper),
            Err(CouplingError::Variant { .. })
        ));
    }

    #[test]
    fn uniform_cells() {
        let (s, urn) = discretize(&M::uniform(1.0), 4).unwrap();
        for q in &s.cell_masses {
            assert_abs_diff_eq!(*q, 0.25, epsilon = 1e-15);
        }
        assert_eq!(urn.bins(), 5);
        for i in 0..4 {
            assert_abs_diff_eq!(s.upper[i] - s.lower[i], s.epsilon, epsilon = 1e-15);
        }
    }

    #[test]
    fn discretized_root_identities() {
        let (s, _) = discretize(&M::beta(1.0, 3.0), 20).unwrap();
        let r = solve_discretization_lambda(&s).unwrap();
        assert!(r.lambda > s.h - s.epsilon);
        assert!(r.residual.abs() <= 1e-10);
        assert!(r.nu_sum_error.abs() <= 1e-9);
    }

    #[test]
    fn identity_truncation_chains_coincide() {
        let m = M::finite(vec![0.5, 1.0, 2.0], vec![0.2, 0.3, 0.5]);
        let r = coupled_degree_run(&m, 3, 3000, 5, &CheckpointSchedule::PowersOfTwo).unwrap();
        assert!(r.run.violations.is_empty());
        assert_eq!(r.run.branch_counts[1] + r.run.branch_counts[2], 0);
        for t in &r.tails {
            assert_eq!(t.lower, t.middle);
            assert_eq!(t.middle, t.upper);
        }
    }

    #[test]
    fn branch_mass_sums_to_one() {
        let r = coupled_triple_run(&M::zeta_family(2.0), 5, 2000, 1, &CheckpointSchedule::Final).unwrap();
        assert!(r.branch_mass_error <= 1e-12);
    }

    #[test]
    fn k_one_tail_is_edge_count() {
        let r = coupled_degree_run(&M::zeta_family(2.0), 5, 2000, 2, &CheckpointSchedule::Final).unwrap();
        let last = r.run.middle.last();
        for t in r.tails.iter().filter(|t| t.k == 1) {
            assert_eq!(t.middle, last.m_of(t.atom - 1));
        }
    }
}
