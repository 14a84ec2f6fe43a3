//! The growth simulator.
//!
//! Time 0 is a single vertex with a self-loop (degree 2). Step `n` adds one
//! vertex of degree 1 and one edge to an old vertex `v` chosen with
//! probability proportional to `f_v · d_v`, so after `n` steps there are
//! `n + 1` vertices and the degrees sum to `2n + 2`.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fitness::{FitnessModel, ModelDescriptor};
use crate::sampling::SumTree;
use crate::scalar::Real;
use crate::schedule::{geometric, CheckpointSchedule};
use crate::urn::{joint_bin, joint_update};

/// Largest run for which the opt-in edge log is kept.
pub const EDGE_LOG_LIMIT: u64 = 100_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("run length must be at least 1")]
    EmptyRun,
    #[error("invalid fitness model: {0}")]
    InvalidModel(String),
    #[error("invalid class grid: {0}")]
    InvalidGrid(String),
}

/// How vertices are grouped into classes for `M` and `N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum ClassLayout {
    /// Class `j - 1` is atom `j`; grows as new atoms appear.
    Atoms,
    /// Cells `[e_i, e_{i+1})`, the last one closed; values outside go to an
    /// extra class with index `edges.len() - 1`.
    Intervals { edges: Vec<f64> },
}

impl ClassLayout {
    pub fn equal_cells(h: f64, cells: usize) -> Self {
        ClassLayout::Intervals {
            edges: (0..=cells).map(|i| h * i as f64 / cells as f64).collect(),
        }
    }

    fn validate(&self) -> Result<(), GraphError> {
        if let ClassLayout::Intervals { edges } = self {
            if edges.len() < 2 {
                return Err(GraphError::InvalidGrid("need at least two edges".into()));
            }
            if !edges.windows(2).all(|w| w[0] < w[1]) {
                return Err(GraphError::InvalidGrid("edges must be strictly increasing".into()));
            }
        }
        Ok(())
    }

    /// Class of a vertex; `None` only for a continuous fitness under `Atoms`.
    pub fn class_of(&self, fitness: f64, atom: Option<usize>) -> Option<usize> {
        match self {
            ClassLayout::Atoms => atom.map(|j| j - 1),
            ClassLayout::Intervals { edges } => {
                let cells = edges.len() - 1;
                let last = edges[cells];
                if !(fitness >= edges[0] && fitness <= last) {
                    return Some(cells);
                }
                if fitness == last {
                    return Some(cells - 1);
                }
                Some(edges.partition_point(|&e| e <= fitness) - 1)
            }
        }
    }

    pub fn label(&self, class: usize) -> String {
        match self {
            ClassLayout::Atoms => format!("{}", class + 1),
            ClassLayout::Intervals { edges } => {
                // `f64::MAX` stands for an open upper end.
                let edge = |e: f64| {
                    if e == f64::MAX {
                        "inf".to_string()
                    } else {
                        e.to_string()
                    }
                };
                if class + 1 < edges.len() {
                    format!(
                        "[{},{}{}",
                        edge(edges[class]),
                        edge(edges[class + 1]),
                        if class + 2 == edges.len() { "]" } else { ")" }
                    )
                } else {
                    "outside".to_string()
                }
            }
        }
    }
}

/// Which vertices log their degree trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "rule")]
pub enum TrackRule {
    /// Vertices `0..count` (vertex 0 is the initial one).
    FirstK { count: u64 },
    /// Up to `max` vertices with fitness in `[lo, hi]`, in order of birth.
    FitnessWindow { lo: f64, hi: f64, max: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub vertex: u64,
    pub fitness: f64,
    pub atom: Option<usize>,
    /// `(t, degree)`, starting at the birth step.
    pub points: Vec<(u64, u32)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrowthOptions {
    /// Class layout; `None` means [`default_layout`].
    pub layout: Option<ClassLayout>,
    pub track: Vec<TrackRule>,
    /// Trajectory sampling ratio between consecutive logging times.
    pub track_ratio: f64,
    pub edge_log: bool,
}

impl Default for GrowthOptions {
    fn default() -> Self {
        Self {
            layout: None,
            track: Vec::new(),
            track_ratio: 2f64.powf(0.25),
            edge_log: false,
        }
    }
}

/// Run-level flags written to the run report.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunFlags {
    /// Steps where every old vertex had weight 0 and the target was uniform.
    pub zero_weight_fallbacks: u64,
    /// Largest relative drift seen when the sum tree was rebuilt.
    pub max_rebuild_drift: f64,
    pub rebuilds: u64,
    /// Vertices whose fitness fell outside the class grid.
    pub unclassified: u64,
}

/// What one step did.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Attachment<T> {
    pub target: u64,
    pub target_class: Option<usize>,
    /// Degree of the target before the step.
    pub target_degree: u32,
    pub new_vertex: u64,
    pub new_fitness: T,
    pub new_class: Option<usize>,
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NCell {
    pub class: usize,
    pub degree: u64,
    pub count: u64,
}

/// Collector state at one checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub n: u64,
    pub vertices: u64,
    pub degree_sum: u64,
    /// Edge endpoints per class.
    pub m: Vec<u64>,
    /// Nonzero `(class, degree, count)` cells, sorted.
    pub cells: Vec<NCell>,
    /// Nonzero `(degree, count)` over all vertices.
    pub degree_hist: Vec<(u64, u64)>,
    pub max_fitness: f64,
}

impl Snapshot {
    pub fn m_of(&self, class: usize) -> u64 {
        self.m.get(class).copied().unwrap_or(0)
    }

    pub fn n_of(&self, class: usize, degree: u64) -> u64 {
        self.cells
            .binary_search_by(|c| (c.class, c.degree).cmp(&(class, degree)))
            .map(|p| self.cells[p].count)
            .unwrap_or(0)
    }

    /// `T_{(class,k)} = Σ_{k' >= k} k' N_{(class,k')}`.
    pub fn t_of(&self, class: usize, k: u64) -> u64 {
        self.cells
            .iter()
            .filter(|c| c.class == class && c.degree >= k)
            .map(|c| c.degree * c.count)
            .sum()
    }

    /// Vertices with degree `k`, over all classes.
    pub fn l_of(&self, k: u64) -> u64 {
        self.degree_hist
            .binary_search_by_key(&k, |&(d, _)| d)
            .map(|p| self.degree_hist[p].1)
            .unwrap_or(0)
    }

    /// Degree counts of one class as `(degree, count)`.
    pub fn class_degrees(&self, class: usize) -> Vec<(u64, u64)> {
        self.cells
            .iter()
            .filter(|c| c.class == class)
            .map(|c| (c.degree, c.count))
            .collect()
    }

    pub fn vertices_in_class(&self, class: usize) -> u64 {
        self.cells.iter().filter(|c| c.class == class).map(|c| c.count).sum()
    }
}

/// Statistics of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalSummary {
    pub model: ModelDescriptor,
    pub seed: u64,
    pub layout: ClassLayout,
    pub snapshots: Vec<Snapshot>,
    pub trajectories: Vec<Trajectory>,
    pub flags: RunFlags,
}

impl EmpiricalSummary {
    pub fn last(&self) -> &Snapshot {
        self.snapshots.last().expect("summary has at least one snapshot")
    }

    pub fn at(&self, n: u64) -> Option<&Snapshot> {
        self.snapshots.iter().find(|s| s.n == n)
    }

    pub fn trajectory(&self, vertex: u64) -> Option<&Trajectory> {
        self.trajectories.iter().find(|t| t.vertex == vertex)
    }

    /// `checkpoint,class,M,n,M_over_n`.
    pub fn write_m_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "checkpoint,class,M,n,M_over_n")?;
        for s in &self.snapshots {
            for (c, &m) in s.m.iter().enumerate() {
                let label = self.layout.label(c);
                writeln!(w, "{},\"{}\",{},{},{}", s.n, label, m, s.n, m as f64 / s.n as f64)?;
            }
        }
        Ok(())
    }

    /// `checkpoint,class,degree,N`.
    pub fn write_n_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "checkpoint,class,degree,N")?;
        for s in &self.snapshots {
            for c in &s.cells {
                writeln!(w, "{},\"{}\",{},{}", s.n, self.layout.label(c.class), c.degree, c.count)?;
            }
        }
        Ok(())
    }

    /// `vertex,t,degree`.
    pub fn write_trajectories_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "vertex,t,degree")?;
        for t in &self.trajectories {
            for &(step, d) in &t.points {
                writeln!(w, "{},{},{}", t.vertex, step, d)?;
            }
        }
        Ok(())
    }
}

struct Tracked {
    index: usize,
    vertex: u64,
}

/// Vertices, the weight index over `f_v · d_v`, and the collectors.
pub struct GrowthState<T: Real> {
    model: FitnessModel<T>,
    seed: u64,
    rng: ChaCha8Rng,
    layout: ClassLayout,
    fitness: Vec<T>,
    class: Vec<u32>,
    degree: Vec<u32>,
    tree: SumTree<T>,
    n: u64,
    m: Vec<u64>,
    hist: Vec<Vec<u64>>,
    degree_hist: Vec<u64>,
    max_fitness: T,
    flags: RunFlags,
    track_rules: Vec<TrackRule>,
    window_counts: Vec<usize>,
    tracked: Vec<Tracked>,
    trajectories: Vec<Trajectory>,
    track_times: Vec<u64>,
    next_track: usize,
    track_ratio: f64,
    edges: Option<Vec<(u64, u64)>>,
}

const NO_CLASS: u32 = u32::MAX;

impl<T: Real> GrowthState<T> {
    pub fn model(&self) -> &FitnessModel<T> {
        &self.model
    }

    pub fn steps(&self) -> u64 {
        self.n
    }

    pub fn vertex_count(&self) -> usize {
        self.degree.len()
    }

    pub fn degree(&self, v: u64) -> u32 {
        self.degree[v as usize]
    }

    pub fn fitness(&self, v: u64) -> T {
        self.fitness[v as usize]
    }

    pub fn class(&self, v: u64) -> Option<usize> {
        let c = self.class[v as usize];
        (c != NO_CLASS).then_some(c as usize)
    }

    pub fn total_weight(&self) -> T {
        self.tree.total()
    }

    pub fn weight_tree(&self) -> &SumTree<T> {
        &self.tree
    }

    pub fn flags(&self) -> &RunFlags {
        &self.flags
    }

    pub fn layout(&self) -> &ClassLayout {
        &self.layout
    }

    pub fn edge_log(&self) -> Option<&[(u64, u64)]> {
        self.edges.as_deref()
    }

    pub fn degree_sum(&self) -> u64 {
        self.degree.iter().map(|&d| d as u64).sum()
    }

    /// Vertices of class `c` with degree `k`.
    pub fn n_of(&self, c: usize, k: u64) -> u64 {
        self.hist.get(c).and_then(|h| h.get(k as usize)).copied().unwrap_or(0)
    }

    pub fn m_of(&self, c: usize) -> u64 {
        self.m.get(c).copied().unwrap_or(0)
    }

    fn add_to_class(&mut self, c: u32, old_degree: u32, new_degree: u32, endpoints: u64) {
        if c == NO_CLASS {
            return;
        }
        let c = c as usize;
        if self.m.len() <= c {
            self.m.resize(c + 1, 0);
            self.hist.resize(c + 1, Vec::new());
        }
        self.m[c] += endpoints;
        let h = &mut self.hist[c];
        if h.len() <= new_degree as usize {
            h.resize(new_degree as usize + 1, 0);
        }
        if old_degree > 0 {
            h[old_degree as usize] -= 1;
        }
        h[new_degree as usize] += 1;
    }

    fn bump_degree_hist(&mut self, old: u32, new: u32) {
        if self.degree_hist.len() <= new as usize {
            self.degree_hist.resize(new as usize + 1, 0);
        }
        if old > 0 {
            self.degree_hist[old as usize] -= 1;
        }
        self.degree_hist[new as usize] += 1;
    }

    fn add_vertex(&mut self, f: T, atom: Option<usize>, degree: u32) -> u64 {
        let v = self.degree.len() as u64;
        let c = match self.layout.class_of(f.as_f64(), atom) {
            Some(c) => c as u32,
            None => {
                self.flags.unclassified += 1;
                NO_CLASS
            }
        };
        if let ClassLayout::Intervals { edges } = &self.layout {
            if c as usize == edges.len() - 1 {
                self.flags.unclassified += 1;
            }
        }
        self.fitness.push(f);
        self.class.push(c);
        self.degree.push(degree);
        self.tree.push(f * T::from_u32(degree).unwrap());
        self.add_to_class(c, 0, degree, degree as u64);
        self.bump_degree_hist(0, degree);
        if f > self.max_fitness {
            self.max_fitness = f;
        }
        self.register_if_tracked(v, f, atom, degree);
        v
    }

    fn register_if_tracked(&mut self, v: u64, f: T, atom: Option<usize>, degree: u32) {
        let fv = f.as_f64();
        let mut hit = false;
        for (r, rule) in self.track_rules.iter().enumerate() {
            match rule {
                TrackRule::FirstK { count } => hit |= v < *count,
                TrackRule::FitnessWindow { lo, hi, max } => {
                    if fv >= *lo && fv <= *hi && self.window_counts[r] < *max {
                        self.window_counts[r] += 1;
                        hit = true;
                    }
                }
            }
        }
        if hit {
            self.tracked.push(Tracked {
                index: self.trajectories.len(),
                vertex: v,
            });
            self.trajectories.push(Trajectory {
                vertex: v,
                fitness: fv,
                atom,
                points: vec![(self.n, degree)],
            });
        }
    }

    /// One attachment step.
    pub fn step(&mut self) -> Attachment<T> {
        let (target, fallback) = match self.tree.sample(&mut self.rng) {
            Some(v) => (v, false),
            None => {
                self.flags.zero_weight_fallbacks += 1;
                (self.rng.gen_range(0..self.degree.len()), true)
            }
        };
        let old = self.degree[target];
        let new = old + 1;
        self.degree[target] = new;
        self.tree.set(target, self.fitness[target] * T::from_u32(new).unwrap());
        let tc = self.class[target];
        self.add_to_class(tc, old, new, 1);
        self.bump_degree_hist(old, new);
        if let Some(e) = self.edges.as_mut() {
            e.push((target as u64, self.degree.len() as u64));
        }
        self.n += 1;
        let (f, atom) = self.model.sample(&mut self.rng);
        let v = self.add_vertex(f, atom, 1);
        if let Some(e) = self.edges.as_ref() {
            if e.len() as u64 >= EDGE_LOG_LIMIT {
                self.edges = None;
            }
        }
        self.log_tracks();
        Attachment {
            target: target as u64,
            target_class: (tc != NO_CLASS).then_some(tc as usize),
            target_degree: old,
            new_vertex: v,
            new_fitness: f,
            new_class: self.class(v),
            fallback,
        }
    }

    fn log_tracks(&mut self) {
        while self.next_track < self.track_times.len() && self.track_times[self.next_track] < self.n {
            self.next_track += 1;
        }
        if self.next_track < self.track_times.len() && self.track_times[self.next_track] == self.n {
            for t in &self.tracked {
                let d = self.degree[t.vertex as usize];
                let pts = &mut self.trajectories[t.index].points;
                if pts.last().map(|p| p.0) != Some(self.n) {
                    pts.push((self.n, d));
                }
            }
            self.next_track += 1;
        }
    }

    fn sync_audits(&mut self) {
        let audits = self.tree.audits();
        self.flags.rebuilds = audits.len() as u64;
        self.flags.max_rebuild_drift = audits.iter().map(|a| a.relative_drift()).fold(0.0, f64::max);
    }

    pub fn snapshot(&mut self) -> Snapshot {
        self.sync_audits();
        let mut cells = Vec::new();
        for (c, h) in self.hist.iter().enumerate() {
            for (k, &cnt) in h.iter().enumerate() {
                if cnt > 0 {
                    cells.push(NCell {
                        class: c,
                        degree: k as u64,
                        count: cnt,
                    });
                }
            }
        }
        let degree_hist = self
            .degree_hist
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(k, &c)| (k as u64, c))
            .collect();
        Snapshot {
            n: self.n,
            vertices: self.degree.len() as u64,
            degree_sum: 2 * self.n + 2,
            m: self.m.clone(),
            cells,
            degree_hist,
            max_fitness: self.max_fitness.as_f64(),
        }
    }

    /// Registers a rule; existing vertices that match are tracked from now on.
    pub fn track_vertices(&mut self, rule: TrackRule) {
        self.track_rules.push(rule);
        self.window_counts.push(0);
        let r = self.track_rules.len() - 1;
        for v in 0..self.degree.len() {
            let fv = self.fitness[v].as_f64();
            let hit = match &self.track_rules[r] {
                TrackRule::FirstK { count } => (v as u64) < *count,
                TrackRule::FitnessWindow { lo, hi, max } => {
                    let ok = fv >= *lo && fv <= *hi && self.window_counts[r] < *max;
                    if ok {
                        self.window_counts[r] += 1;
                    }
                    ok
                }
            };
            if hit && !self.tracked.iter().any(|t| t.vertex == v as u64) {
                self.tracked.push(Tracked {
                    index: self.trajectories.len(),
                    vertex: v as u64,
                });
                self.trajectories.push(Trajectory {
                    vertex: v as u64,
                    fitness: fv,
                    atom: None,
                    points: vec![(self.n, self.degree[v])],
                });
            }
        }
    }

    /// Trajectory of `v`; empty for untracked vertices.
    pub fn trajectory(&self, v: u64) -> &[(u64, u32)] {
        self.tracked
            .iter()
            .find(|t| t.vertex == v)
            .map(|t| self.trajectories[t.index].points.as_slice())
            .unwrap_or(&[])
    }

    /// Runs `n` more steps, snapshotting at the schedule's checkpoints
    /// (counted from the current step).
    pub fn run(&mut self, n: u64, schedule: &CheckpointSchedule) -> Result<EmpiricalSummary, GraphError> {
        if n == 0 {
            return Err(GraphError::EmptyRun);
        }
        let start = self.n;
        let points = schedule.points(n);
        let end = start + n;
        self.track_times = geometric(end + 1, self.track_ratio_value());
        self.track_times.push(end);
        self.next_track = 0;
        let mut snapshots = Vec::with_capacity(points.len());
        let mut next = 0;
        while self.n < end {
            self.step();
            if next < points.len() && self.n - start == points[next] {
                snapshots.push(self.snapshot());
                next += 1;
            }
        }
        Ok(EmpiricalSummary {
            model: self.model.descriptor().clone(),
            seed: self.seed,
            layout: self.layout.clone(),
            snapshots,
            trajectories: self.trajectories.clone(),
            flags: self.flags.clone(),
        })
    }

    fn track_ratio_value(&self) -> f64 {
        self.track_ratio
    }
}

/// Initial graph: one vertex with fitness drawn from the model and a self-loop.
pub fn new_growth<T: Real>(
    model: &FitnessModel<T>,
    seed: u64,
    opts: GrowthOptions,
) -> Result<GrowthState<T>, GraphError> {
    let layout = match opts.layout {
        Some(l) => l,
        None => default_layout(model),
    };
    layout.validate()?;
    let mut s = GrowthState {
        model: model.clone(),
        seed,
        rng: ChaCha8Rng::seed_from_u64(seed),
        layout,
        fitness: Vec::new(),
        class: Vec::new(),
        degree: Vec::new(),
        tree: SumTree::new(),
        n: 0,
        m: Vec::new(),
        hist: Vec::new(),
        degree_hist: Vec::new(),
        max_fitness: T::neg_infinity(),
        flags: RunFlags::default(),
        track_rules: Vec::new(),
        window_counts: Vec::new(),
        tracked: Vec::new(),
        trajectories: Vec::new(),
        track_times: Vec::new(),
        next_track: 0,
        edges: opts.edge_log.then(Vec::new),
        track_ratio: opts.track_ratio,
    };
    let (f, atom) = s.model.sample(&mut s.rng);
    s.add_vertex(f, atom, 2);
    if let Some(e) = s.edges.as_mut() {
        e.push((0, 0));
    }
    for rule in opts.track {
        s.track_vertices(rule);
    }
    Ok(s)
}

/// Atoms for discrete models; 20 equal cells of `[0, h]` for bounded densities;
/// deciles of the distribution for unbounded ones.
pub fn default_layout<T: Real>(model: &FitnessModel<T>) -> ClassLayout {
    match model {
        FitnessModel::FiniteDiscrete(..) | FitnessModel::CountableDiscrete(..) => ClassLayout::Atoms,
        FitnessModel::ContinuousDensity(m, _) => ClassLayout::equal_cells(m.h.as_f64(), 20),
        FitnessModel::ContinuousUnbounded(m, _) => {
            let mut edges: Vec<f64> = (0..10)
                .map(|i| (m.inverse_cdf)(T::lit(i as f64 / 10.0)).as_f64())
                .collect();
            edges.push(f64::MAX);
            ClassLayout::Intervals { edges }
        }
    }
}

/// `new_growth` followed by `run`.
pub fn simulate<T: Real>(
    model: &FitnessModel<T>,
    seed: u64,
    n: u64,
    schedule: &CheckpointSchedule,
    opts: GrowthOptions,
) -> Result<EmpiricalSummary, GraphError> {
    let mut s = new_growth(model, seed, opts)?;
    s.run(n, schedule)
}

/// Outcome of driving the joint and fitness urns from a growth run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointRun {
    pub steps: u64,
    pub k: usize,
    /// Bin comparisons made, over all steps.
    pub checks: u64,
    pub mismatches: u64,
    /// `(step, bin, urn count, graph count)` of the first mismatch.
    pub first_mismatch: Option<(u64, usize, i64, i64)>,
}

/// Runs the graph for `n` steps and applies each attachment event to the
/// joint urn on (atom, degree class) and to the fitness urn, comparing
/// `X_{(i,l)}` with `l N_{(i,l)}` (the overflow bin with the degree mass
/// above `k`) and `X_i` with `M_i` after every step.
pub fn joint_urn_run<T: Real>(model: &FitnessModel<T>, k: usize, n: u64, seed: u64) -> Result<JointRun, GraphError> {
    let atoms = match model {
        FitnessModel::FiniteDiscrete(m, _) => m.len(),
        other => {
            return Err(GraphError::InvalidModel(format!(
                "joint urn needs a finite discrete model, got {}",
                other.variant_name()
            )))
        }
    };
    if k == 0 {
        return Err(GraphError::InvalidGrid("degree cap must be at least 1".into()));
    }
    let mut g = new_growth(
        model,
        seed,
        GrowthOptions {
            layout: Some(ClassLayout::Atoms),
            ..Default::default()
        },
    )?;
    let r = k + 1;
    let mut joint = vec![0i64; atoms * r];
    let mut fit = vec![0i64; atoms];
    let root = g.class(0).expect("atoms are classified") + 1;
    joint[joint_bin(root, 2.min(r), k)] += 2;
    fit[root - 1] += 2;
    let mut run = JointRun {
        steps: n,
        k,
        checks: 0,
        mismatches: 0,
        first_mismatch: None,
    };
    for step in 1..=n {
        let a = g.step();
        let i = a.target_class.expect("atoms are classified") + 1;
        let l = (a.target_degree as usize).min(r);
        let inew = a.new_class.expect("atoms are classified") + 1;
        for (b, d) in joint_update(i, l, inew, k) {
            joint[b] += d;
        }
        fit[i - 1] += 1;
        fit[inew - 1] += 1;
        let mut note = |bin: usize, urn: i64, graph: i64| {
            run.checks += 1;
            if urn != graph {
                run.mismatches += 1;
                run.first_mismatch.get_or_insert((step, bin, urn, graph));
            }
        };
        for c in 0..atoms {
            let m = g.m_of(c) as i64;
            let mut low = 0i64;
            for l in 1..=k {
                let x = l as i64 * g.n_of(c, l as u64) as i64;
                low += x;
                note(joint_bin(c + 1, l, k), joint[joint_bin(c + 1, l, k)], x);
            }
            note(joint_bin(c + 1, r, k), joint[joint_bin(c + 1, r, k)], m - low);
            note(atoms * r + c, fit[c], m);
        }
    }
    Ok(run)
}
