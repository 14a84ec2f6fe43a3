//! Generalized Pólya urns.
//!
//! Bin `i` carries activity `a_i` and ball count `X_i`. Each step draws bin
//! `i` with probability proportional to `a_i X_i` and adds a random integer
//! vector `ξ_i` to the counts. The mean matrix is `A_ij = a_i E[ξ_ij]`; its
//! Perron pair `(λ₁, v₁)` gives the almost sure limit `X_n / n → λ₁ v₁`.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coupling::DiscretizationSpec;
use crate::fitness::{FiniteDiscrete, FitnessError, FitnessModel};
use crate::sampling::SumTree;
use crate::scalar::Real;
use crate::schedule::CheckpointSchedule;

/// Sparse integer vector as `(bin, value)` pairs.
pub type SparseDelta = Vec<(usize, i64)>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome<T> {
    pub prob: T,
    pub delta: SparseDelta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialLoad<T> {
    pub prob: T,
    pub counts: Vec<(usize, u64)>,
}

/// Activities, per-bin update laws with finite support, and the law of `X₀`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UrnSpec<T> {
    pub activities: Vec<T>,
    pub update_laws: Vec<Vec<Outcome<T>>>,
    pub initial_law: Vec<InitialLoad<T>>,
    /// Declared bound on `|ξ_ij|`.
    pub bound: i64,
    /// Optional bin names for reports.
    #[serde(default)]
    pub labels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum UrnError {
    #[error("invalid urn specification: {0}")]
    InvalidSpec(String),
    #[error("tenability violated at step {step}: drawing bin {bin} with update {update:?} from state {state:?}")]
    Tenability {
        step: u64,
        bin: usize,
        state: Vec<i64>,
        update: SparseDelta,
    },
    #[error("total activity-weighted load is zero at step {step}")]
    ZeroWeight { step: u64 },
    #[error("power iteration did not converge in {iterations} iterations (residual {residual}); the positive block may be reducible")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error(transparent)]
    Fitness(#[from] FitnessError),
}

fn merge(delta: &mut SparseDelta) {
    delta.sort_unstable_by_key(|&(j, _)| j);
    let mut out: SparseDelta = Vec::with_capacity(delta.len());
    for &(j, v) in delta.iter() {
        match out.last_mut() {
            Some((lj, lv)) if *lj == j => *lv += v,
            _ => out.push((j, v)),
        }
    }
    out.retain(|&(_, v)| v != 0);
    *delta = out;
}

impl<T: Real> UrnSpec<T> {
    pub fn bins(&self) -> usize {
        self.activities.len()
    }

    pub fn validate(&self) -> Result<(), UrnError> {
        let q = self.bins();
        let bad = |msg: String| Err(UrnError::InvalidSpec(msg));
        if q == 0 {
            return bad("no bins".into());
        }
        if self.update_laws.len() != q {
            return bad(format!("{} update laws for {q} bins", self.update_laws.len()));
        }
        if let Some(i) = self.activities.iter().position(|a| !(*a >= T::zero() && a.is_finite())) {
            return bad(format!("activity of bin {i} is not a finite nonnegative number"));
        }
        for (i, law) in self.update_laws.iter().enumerate() {
            if law.is_empty() {
                return bad(format!("bin {i} has an empty update law"));
            }
            let total: f64 = law.iter().map(|o| o.prob.as_f64()).sum();
            if (total - 1.0).abs() > 1e-9 || law.iter().any(|o| !(o.prob >= T::zero())) {
                return bad(format!("update law of bin {i} has probabilities summing to {total}"));
            }
            for o in law {
                for &(j, v) in &o.delta {
                    if j >= q {
                        return bad(format!("update of bin {i} touches bin {j} >= {q}"));
                    }
                    if v.abs() > self.bound {
                        return bad(format!(
                            "update of bin {i} has entry {v} beyond the bound {}",
                            self.bound
                        ));
                    }
                }
            }
        }
        let total: f64 = self.initial_law.iter().map(|o| o.prob.as_f64()).sum();
        if self.initial_law.is_empty() || (total - 1.0).abs() > 1e-9 {
            return bad(format!("initial law has total probability {total}"));
        }
        if self.initial_law.iter().any(|l| l.counts.iter().any(|&(j, _)| j >= q)) {
            return bad("initial load outside the bins".into());
        }
        Ok(())
    }

    /// `A_ij = a_i E[ξ_ij]`, duplicates merged.
    pub fn mean_matrix(&self) -> MeanMatrix<T> {
        let q = self.bins();
        let mut row_ptr = vec![0usize];
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for (i, law) in self.update_laws.iter().enumerate() {
            let mut row: Vec<(usize, T)> = Vec::new();
            for o in law {
                for &(j, v) in &o.delta {
                    row.push((j, o.prob * T::lit(v as f64)));
                }
            }
            row.sort_by_key(|&(j, _)| j);
            let mut merged: Vec<(usize, T)> = Vec::new();
            for (j, v) in row {
                match merged.last_mut() {
                    Some((lj, lv)) if *lj == j => *lv += v,
                    _ => merged.push((j, v)),
                }
            }
            for (j, v) in merged {
                if v != T::zero() {
                    cols.push(j);
                    vals.push(self.activities[i] * v);
                }
            }
            row_ptr.push(cols.len());
        }
        MeanMatrix { q, row_ptr, cols, vals }
    }

    fn compile(&self) -> Vec<Vec<f64>> {
        self.update_laws
            .iter()
            .map(|law| {
                let mut acc = 0.0;
                law.iter()
                    .map(|o| {
                        acc += o.prob.as_f64();
                        acc
                    })
                    .collect()
            })
            .collect()
    }
}

/// Square matrix in compressed sparse row form.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanMatrix<T> {
    pub q: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<T>,
}

impl<T: Real> MeanMatrix<T> {
    pub fn from_dense(rows: &[Vec<T>]) -> Self {
        let q = rows.len();
        let mut row_ptr = vec![0];
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for r in rows {
            for (j, &v) in r.iter().enumerate() {
                if v != T::zero() {
                    cols.push(j);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        Self { q, row_ptr, cols, vals }
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()]
            .iter()
            .position(|&c| c == j)
            .map(|p| self.vals[r.start + p])
            .unwrap_or_else(T::zero)
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn to_dense(&self) -> Vec<Vec<T>> {
        let mut d = vec![vec![T::zero(); self.q]; self.q];
        for (i, row) in d.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] = v;
            }
        }
        d
    }

    pub fn row_sums(&self) -> Vec<T> {
        (0..self.q).map(|i| self.row(i).map(|(_, v)| v).sum()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerronResult<T> {
    pub lambda1: T,
    /// Left eigenvector, `a · v₁ = 1`.
    pub v1: Vec<T>,
    /// Right eigenvector, `u₁ · v₁ = 1`.
    pub u1: Vec<T>,
    pub iterations: usize,
    /// Largest of the left and right relative residuals `‖A x − λ₁ x‖ / ‖x‖`.
    pub residual: T,
}

/// Restriction of `A` to a set of bins, as dense rows or CSR.
enum Block<T> {
    Dense(Vec<Vec<T>>),
    Sparse(MeanMatrix<T>),
}

impl<T: Real> Block<T> {
    fn new(a: &MeanMatrix<T>, keep: &[usize]) -> Self {
        let mut index = vec![usize::MAX; a.q];
        for (p, &i) in keep.iter().enumerate() {
            index[i] = p;
        }
        let mut rows = Vec::with_capacity(keep.len());
        for &i in keep {
            rows.push(
                a.row(i)
                    .filter(|&(j, _)| index[j] != usize::MAX)
                    .map(|(j, v)| (index[j], v))
                    .collect::<Vec<_>>(),
            );
        }
        let m = keep.len();
        if m <= DENSE_LIMIT {
            let mut d = vec![vec![T::zero(); m]; m];
            for (i, r) in rows.iter().enumerate() {
                for &(j, v) in r {
                    d[i][j] += v;
                }
            }
            Block::Dense(d)
        } else {
            let mut row_ptr = vec![0];
            let mut cols = Vec::new();
            let mut vals = Vec::new();
            for r in rows {
                for (j, v) in r {
                    cols.push(j);
                    vals.push(v);
                }
                row_ptr.push(cols.len());
            }
            Block::Sparse(MeanMatrix {
                q: m,
                row_ptr,
                cols,
                vals,
            })
        }
    }

    /// `y = A x`.
    fn mul(&self, x: &[T], y: &mut [T]) {
        match self {
            Block::Dense(d) => {
                for (yi, row) in y.iter_mut().zip(d) {
                    *yi = row.iter().zip(x).map(|(&a, &b)| a * b).sum();
                }
            }
            Block::Sparse(s) => {
                for (i, yi) in y.iter_mut().enumerate() {
                    *yi = s.row(i).map(|(j, v)| v * x[j]).sum();
                }
            }
        }
    }

    /// `y = Aᵀ x`.
    fn mul_t(&self, x: &[T], y: &mut [T]) {
        y.iter_mut().for_each(|v| *v = T::zero());
        match self {
            Block::Dense(d) => {
                for (row, &xi) in d.iter().zip(x) {
                    for (yj, &a) in y.iter_mut().zip(row) {
                        *yj += a * xi;
                    }
                }
            }
            Block::Sparse(s) => {
                for (i, &xi) in x.iter().enumerate() {
                    for (j, v) in s.row(i) {
                        y[j] += v * xi;
                    }
                }
            }
        }
    }

    fn diag_min(&self) -> T {
        let m = match self {
            Block::Dense(d) => d.len(),
            Block::Sparse(s) => s.q,
        };
        (0..m)
            .map(|i| match self {
                Block::Dense(d) => d[i][i],
                Block::Sparse(s) => s.get(i, i),
            })
            .fold(T::infinity(), T::min)
    }
}

/// Dense products are used up to this many bins.
pub const DENSE_LIMIT: usize = 256;
pub const PERRON_MAX_ITER: usize = 100_000;

fn norm2<T: Real>(x: &[T]) -> T {
    x.iter().map(|&v| v * v).sum::<T>().sqrt()
}

/// One shifted power iteration; returns `(vector, λ, residual, iterations)`.
fn power<T: Real>(block: &Block<T>, transpose: bool, alpha: T, tol: T) -> Result<(Vec<T>, T, T, usize), UrnError> {
    let m = match block {
        Block::Dense(d) => d.len(),
        Block::Sparse(s) => s.q,
    };
    let mut x = vec![T::one() / T::from_usize_lossy(m).sqrt(); m];
    let mut y = vec![T::zero(); m];
    let mut last_res = T::infinity();
    for it in 1..=PERRON_MAX_ITER {
        if transpose {
            block.mul_t(&x, &mut y);
        } else {
            block.mul(&x, &mut y);
        }
        // y = A x, so the Rayleigh quotient and residual are available before shifting.
        if it % 8 == 0 || it == 1 {
            let lambda = x.iter().zip(&y).map(|(&a, &b)| a * b).sum::<T>();
            let res = x
                .iter()
                .zip(&y)
                .map(|(&xi, &yi)| (yi - lambda * xi) * (yi - lambda * xi))
                .sum::<T>()
                .sqrt();
            last_res = res;
            if res <= tol {
                return Ok((x, lambda, res, it));
            }
        }
        for (yi, &xi) in y.iter_mut().zip(&x) {
            *yi += alpha * xi;
        }
        let n = norm2(&y);
        if !(n > T::zero()) || !n.is_finite() {
            return Err(UrnError::NoConvergence {
                iterations: it,
                residual: f64::NAN,
            });
        }
        for (xi, &yi) in x.iter_mut().zip(&y) {
            *xi = yi / n;
        }
    }
    Err(UrnError::NoConvergence {
        iterations: PERRON_MAX_ITER,
        residual: last_res.as_f64(),
    })
}

/// Perron pair of `A` by power iteration on `A + αI`, `α = 1 + max(0, -min A_ii)`.
///
/// Bins with zero activity are counters: their rows of `A` vanish, so the
/// iteration runs on the positive-activity block and the counters are filled
/// in afterwards with `v_j = Σ_i v_i A_ij / λ₁` and `u_j = 0`.
pub fn perron<T: Real>(a: &MeanMatrix<T>, activities: &[T]) -> Result<PerronResult<T>, UrnError> {
    let keep: Vec<usize> = (0..a.q).filter(|&i| activities[i] > T::zero()).collect();
    if keep.is_empty() {
        return Err(UrnError::InvalidSpec("no bin has positive activity".into()));
    }
    let block = Block::new(a, &keep);
    let alpha = T::one() + T::zero().max(-block.diag_min());
    // Residuals are relative to the matrix scale.
    let scale = (0..a.q)
        .map(|i| {
            a.vals[a.row_ptr[i]..a.row_ptr[i + 1]]
                .iter()
                .map(|x| x.abs())
                .sum::<T>()
        })
        .fold(T::one(), T::max);
    let tol = T::floor_tol(1e-13, 16.0) * scale;
    let (vb, lv, rv, iv) = power(&block, true, alpha, tol)?;
    let (ub, lu, ru, iu) = power(&block, false, alpha, tol)?;
    let lambda1 = (lv + lu) * T::lit(0.5);
    if !(lambda1 > T::zero()) {
        return Err(UrnError::InvalidSpec(format!(
            "dominant eigenvalue {lambda1} is not positive"
        )));
    }
    let mut v1 = vec![T::zero(); a.q];
    let mut u1 = vec![T::zero(); a.q];
    for (p, &i) in keep.iter().enumerate() {
        v1[i] = vb[p];
        u1[i] = ub[p];
    }
    for j in 0..a.q {
        if activities[j] > T::zero() {
            continue;
        }
        let mut s = T::zero();
        for &i in &keep {
            s += v1[i] * a.get(i, j);
        }
        v1[j] = s / lambda1;
    }
    let av: T = activities.iter().zip(&v1).map(|(&x, &y)| x * y).sum();
    v1.iter_mut().for_each(|x| *x /= av);
    let uv: T = u1.iter().zip(&v1).map(|(&x, &y)| x * y).sum();
    u1.iter_mut().for_each(|x| *x /= uv);
    Ok(PerronResult {
        lambda1,
        v1,
        u1,
        iterations: iv.max(iu),
        residual: rv.max(ru),
    })
}

/// [`perron`] on the spec's mean matrix.
pub fn perron_spec<T: Real>(spec: &UrnSpec<T>) -> Result<PerronResult<T>, UrnError> {
    perron(&spec.mean_matrix(), &spec.activities)
}

/// Ball counts, with the tenability check applied on every update.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UrnState {
    pub counts: Vec<i64>,
    pub step: u64,
}

impl UrnState {
    pub fn new(bins: usize) -> Self {
        Self {
            counts: vec![0; bins],
            step: 0,
        }
    }

    /// Adds `delta`; on a negative count the state is left unchanged.
    pub fn apply(&mut self, bin: usize, delta: &[(usize, i64)]) -> Result<(), UrnError> {
        if delta.iter().any(|&(j, v)| self.counts[j] + v < 0) {
            return Err(UrnError::Tenability {
                step: self.step + 1,
                bin,
                state: self.counts.clone(),
                update: delta.to_vec(),
            });
        }
        for &(j, v) in delta {
            self.counts[j] += v;
        }
        self.step += 1;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UrnTrajectory {
    /// `(step, counts)` at each checkpoint.
    pub checkpoints: Vec<(u64, Vec<i64>)>,
    pub initial: Vec<i64>,
}

impl UrnTrajectory {
    pub fn last(&self) -> &[i64] {
        self.checkpoints
            .last()
            .map(|(_, c)| c.as_slice())
            .unwrap_or(&self.initial)
    }

    /// CSV with columns `step,bin,count`; bins are 1-based.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "step,bin,count")?;
        for (i, c) in self.initial.iter().enumerate() {
            writeln!(w, "0,{},{}", i + 1, c)?;
        }
        for (step, counts) in &self.checkpoints {
            for (i, c) in counts.iter().enumerate() {
                writeln!(w, "{step},{},{c}", i + 1)?;
            }
        }
        Ok(())
    }
}

fn pick(cumulative: &[f64], u: f64) -> usize {
    let total = *cumulative.last().unwrap();
    cumulative
        .partition_point(|&c| c <= u * total)
        .min(cumulative.len() - 1)
}

/// Runs `n` steps and records the counts at each checkpoint.
pub fn run_urn<T: Real, R: Rng + ?Sized>(
    spec: &UrnSpec<T>,
    n: u64,
    schedule: &CheckpointSchedule,
    rng: &mut R,
) -> Result<UrnTrajectory, UrnError> {
    spec.validate()?;
    let q = spec.bins();
    let laws = spec.compile();
    let init_cum: Vec<f64> = {
        let mut acc = 0.0;
        spec.initial_law
            .iter()
            .map(|l| {
                acc += l.prob.as_f64();
                acc
            })
            .collect()
    };
    let mut state = UrnState::new(q);
    for &(j, c) in &spec.initial_law[pick(&init_cum, rng.gen())].counts {
        state.counts[j] += c as i64;
    }
    let initial = state.counts.clone();
    let weight = |i: usize, c: i64| spec.activities[i] * T::lit(c as f64);
    let mut tree = SumTree::from_weights(&(0..q).map(|i| weight(i, state.counts[i])).collect::<Vec<_>>());
    let points = schedule.points(n);
    let mut next = 0;
    let mut checkpoints = Vec::with_capacity(points.len());
    for step in 1..=n {
        let bin = tree.sample(rng).ok_or(UrnError::ZeroWeight { step })?;
        let o = &spec.update_laws[bin][pick(&laws[bin], rng.gen())];
        state.apply(bin, &o.delta)?;
        for &(j, _) in &o.delta {
            tree.set(j, weight(j, state.counts[j]));
        }
        if next < points.len() && points[next] == step {
            checkpoints.push((step, state.counts.clone()));
            next += 1;
        }
    }
    Ok(UrnTrajectory { checkpoints, initial })
}

fn deterministic<T: Real>(delta: SparseDelta) -> Vec<Outcome<T>> {
    vec![Outcome { prob: T::one(), delta }]
}

/// Urn of the plain degree process with degrees `1..=k` tracked and one
/// overflow bin `k+1`; bin `ℓ <= k` holds `ℓ L_ℓ` balls, bin `k+1` the total
/// degree of vertices with degree above `k`. Bins are 0-based internally.
pub fn degree_urn<T: Real>(k: usize) -> UrnSpec<T> {
    assert!(k >= 1, "degree cap must be at least 1");
    let r = k + 1;
    let mut laws = Vec::with_capacity(r);
    for l in 1..=k {
        let mut d = vec![(0, 1), (l - 1, -(l as i64)), (l, l as i64 + 1)];
        merge(&mut d);
        laws.push(deterministic(d));
    }
    laws.push(deterministic(vec![(0, 1), (k, 1)]));
    UrnSpec {
        activities: vec![T::one(); r],
        update_laws: laws,
        initial_law: vec![InitialLoad {
            prob: T::one(),
            counts: vec![(1, 2)],
        }],
        bound: r as i64,
        labels: (1..=k)
            .map(|l| format!("degree={l}"))
            .chain([format!("degree>{k}")])
            .collect(),
    }
}

fn finite_parts<T: Real>(model: &FitnessModel<T>, op: &'static str) -> Result<FiniteDiscrete<T>, UrnError> {
    match model {
        FitnessModel::FiniteDiscrete(m, _) => Ok(m.clone()),
        other => Err(UrnError::Fitness(FitnessError::InvalidVariant {
            op,
            variant: other.variant_name(),
        })),
    }
}

/// Urn with one bin per fitness atom counting its edge endpoints.
pub fn fitness_urn<T: Real>(model: &FitnessModel<T>) -> Result<UrnSpec<T>, UrnError> {
    let m = finite_parts(model, "fitness_urn")?;
    let j = m.len();
    let laws = (0..j)
        .map(|i| {
            (0..j)
                .map(|jn| {
                    let mut d = vec![(i, 1), (jn, 1)];
                    merge(&mut d);
                    Outcome {
                        prob: m.probs[jn],
                        delta: d,
                    }
                })
                .collect()
        })
        .collect();
    Ok(UrnSpec {
        activities: m.fitnesses.clone(),
        update_laws: laws,
        initial_law: (0..j)
            .map(|i| InitialLoad {
                prob: m.probs[i],
                counts: vec![(i, 2)],
            })
            .collect(),
        bound: 2,
        labels: (1..=j).map(|i| format!("atom={i}")).collect(),
    })
}

/// Bin of atom `i` (1-based) and degree class `l` in `1..=k+1` of the joint urn.
pub fn joint_bin(i: usize, l: usize, k: usize) -> usize {
    (i - 1) * (k + 1) + (l - 1)
}

/// Update of the joint urn after drawing bin `(i, l)` and adding a vertex of atom `i_new`.
pub fn joint_update(i: usize, l: usize, i_new: usize, k: usize) -> SparseDelta {
    let r = k + 1;
    let mut d = if l <= k {
        vec![
            (joint_bin(i, l, k), -(l as i64)),
            (joint_bin(i, l + 1, k), l as i64 + 1),
        ]
    } else {
        vec![(joint_bin(i, r, k), 1)]
    };
    d.push((joint_bin(i_new, 1, k), 1));
    merge(&mut d);
    d
}

/// Urn on pairs (atom `i`, degree class `l`), `l = 1..=k` exact and
/// `l = k+1` for degrees above `k`; bin `(i, l)` holds `l N_{(i,l)}` balls
/// for `l <= k`.
pub fn joint_urn<T: Real>(model: &FitnessModel<T>, k: usize) -> Result<UrnSpec<T>, UrnError> {
    assert!(k >= 1, "degree cap must be at least 1");
    let m = finite_parts(model, "joint_urn")?;
    let jn = m.len();
    let r = k + 1;
    let mut activities = Vec::with_capacity(jn * r);
    let mut laws = Vec::with_capacity(jn * r);
    let mut labels = Vec::with_capacity(jn * r);
    for i in 1..=jn {
        for l in 1..=r {
            activities.push(m.fitnesses[i - 1]);
            laws.push(
                (1..=jn)
                    .map(|inew| Outcome {
                        prob: m.probs[inew - 1],
                        delta: joint_update(i, l, inew, k),
                    })
                    .collect(),
            );
            labels.push(if l <= k {
                format!("atom={i},degree={l}")
            } else {
                format!("atom={i},degree>{k}")
            });
        }
    }
    Ok(UrnSpec {
        activities,
        update_laws: laws,
        initial_law: (1..=jn)
            .map(|i| InitialLoad {
                prob: m.probs[i - 1],
                counts: vec![(joint_bin(i, 2, k), 2)],
            })
            .collect(),
        bound: r as i64,
        labels,
    })
}

/// The `I + 1`-bin urn approximating a bounded density from below.
///
/// Bin `i <= I` has activity `f̄_i = h i / I`; bin `I + 1` has activity `h`.
/// Drawing bin `i <= I` keeps the ball there with probability `f̲_i / f̄_i`
/// and otherwise moves the new endpoint to bin `I + 1`; the new vertex lands
/// in cell `i*` drawn from the cell masses, or nowhere with probability `1 - G`.
pub fn discretization_urn<T: Real>(spec: &DiscretizationSpec<T>) -> UrnSpec<T> {
    let cells = spec.cells;
    let over = cells;
    let mut laws = Vec::with_capacity(cells + 1);
    let lost = (T::one() - spec.total_mass).max(T::zero());
    let new_vertex: Vec<(T, Option<usize>)> = spec
        .cell_masses
        .iter()
        .enumerate()
        .map(|(j, &q)| (q, Some(j)))
        .chain((lost > T::zero()).then_some((lost, None)))
        .collect();
    for i in 0..cells {
        let keep = spec.lower[i] / spec.upper[i];
        let mut law = Vec::new();
        for (gamma, pg) in [(1, keep), (0, T::one() - keep)] {
            if pg == T::zero() {
                continue;
            }
            for &(pq, star) in &new_vertex {
                let mut d = Vec::new();
                if gamma == 1 {
                    d.push((i, 1));
                } else {
                    d.push((over, 1));
                }
                if let Some(s) = star {
                    d.push((s, 1));
                }
                merge(&mut d);
                law.push(Outcome {
                    prob: pg * pq,
                    delta: d,
                });
            }
        }
        laws.push(law);
    }
    laws.push(
        new_vertex
            .iter()
            .map(|&(pq, star)| {
                let mut d = vec![(over, 1)];
                if let Some(s) = star {
                    d.push((s, 1));
                }
                merge(&mut d);
                Outcome { prob: pq, delta: d }
            })
            .collect(),
    );
    let mut activities = spec.upper.clone();
    activities.push(spec.h);
    UrnSpec {
        activities,
        update_laws: laws,
        initial_law: spec
            .cell_masses
            .iter()
            .enumerate()
            .filter(|(_, &q)| q > T::zero())
            .map(|(j, &q)| InitialLoad {
                prob: q / spec.total_mass,
                counts: vec![(j, 2)],
            })
            .collect(),
        bound: 2,
        labels: (1..=cells)
            .map(|i| format!("cell={i}"))
            .chain(["overflow".to_string()])
            .collect(),
    }
}
