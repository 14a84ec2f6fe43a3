//! Simulation against theory: link shares, degree cells, tail exponents,
//! vertex dynamics and condensation trends.
//!
//! Everything here is a pure function of finished summaries.

use std::io::Write;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

use crate::fitness::FitnessModel;
use crate::graph::{simulate, ClassLayout, EmpiricalSummary, GraphError, GrowthOptions, Snapshot};
use crate::schedule::CheckpointSchedule;
use crate::theory::{mu_k, LimitLaw, Phase, TheoryError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VerifyError {
    #[error("no summaries to compare")]
    Empty,
    #[error("summaries do not match: {0}")]
    Mismatch(String),
    #[error("not enough data: need {needed} {what}, got {got}")]
    Insufficient {
        what: &'static str,
        needed: usize,
        got: usize,
    },
    #[error(transparent)]
    Theory(#[from] TheoryError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// One compared quantity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub target: String,
    pub theory: f64,
    /// Median over seeds.
    pub empirical: f64,
    pub mean: f64,
    pub abs_error: f64,
    pub rel_error: f64,
    pub seeds: usize,
    pub checkpoint: u64,
    pub tolerance: f64,
    pub pass: bool,
}

impl ComparisonRow {
    fn new(target: String, theory: f64, per_seed: &[f64], checkpoint: u64, tolerance: f64) -> Self {
        let empirical = median(per_seed);
        let mean = per_seed.iter().sum::<f64>() / per_seed.len() as f64;
        let abs_error = (empirical - theory).abs();
        Self {
            target,
            theory,
            empirical,
            mean,
            abs_error,
            rel_error: if theory != 0.0 {
                abs_error / theory.abs()
            } else {
                f64::INFINITY
            },
            seeds: per_seed.len(),
            checkpoint,
            tolerance,
            pass: abs_error <= tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub rows: Vec<ComparisonRow>,
    /// Median over seeds of the summed empirical shares.
    pub empirical_total: f64,
    pub theory_total: f64,
}

impl ComparisonReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn failures(&self) -> Vec<&ComparisonRow> {
        self.rows.iter().filter(|r| !r.pass).collect()
    }

    pub fn row(&self, target: &str) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.target == target)
    }

    /// `target,theory,empirical,mean,abs_error,rel_error,seeds,checkpoint,tolerance,pass`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "target,theory,empirical,mean,abs_error,rel_error,seeds,checkpoint,tolerance,pass"
        )?;
        for r in &self.rows {
            writeln!(
                w,
                "\"{}\",{},{},{},{},{},{},{},{},{}",
                r.target,
                r.theory,
                r.empirical,
                r.mean,
                r.abs_error,
                r.rel_error,
                r.seeds,
                r.checkpoint,
                r.tolerance,
                r.pass
            )?;
        }
        Ok(())
    }
}

pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Final snapshots of all summaries, checked to share the model, layout and step count.
fn finals(summaries: &[EmpiricalSummary]) -> Result<Vec<&Snapshot>, VerifyError> {
    let first = summaries.first().ok_or(VerifyError::Empty)?;
    let n = first.last().n;
    for s in summaries {
        if s.model != first.model {
            return Err(VerifyError::Mismatch(format!("models {} and {}", first.model, s.model)));
        }
        if s.layout != first.layout {
            return Err(VerifyError::Mismatch("class layouts differ".into()));
        }
        if s.last().n != n {
            return Err(VerifyError::Mismatch(format!("run lengths {} and {}", n, s.last().n)));
        }
    }
    Ok(summaries.iter().map(|s| s.last()).collect())
}

/// `M/n` per atom or interval at the final checkpoint against `ν`.
///
/// Atoms are those present in any run; intervals are the layout's cells
/// (the overflow class is skipped). The empirical value is the median over seeds.
pub fn compare_link_shares(
    summaries: &[EmpiricalSummary],
    law: &LimitLaw<f64>,
    tolerance: f64,
) -> Result<ComparisonReport, VerifyError> {
    let snaps = finals(summaries)?;
    if law.model.descriptor() != &summaries[0].model {
        return Err(VerifyError::Mismatch(format!(
            "law is for {}, runs are of {}",
            law.model.descriptor(),
            summaries[0].model
        )));
    }
    let n = snaps[0].n;
    let nf = n as f64;
    let mut rows = Vec::new();
    let mut theory_total = 0.0;
    match &summaries[0].layout {
        ClassLayout::Atoms => {
            let classes = snaps.iter().map(|s| s.m.len()).max().unwrap_or(0);
            for c in 0..classes {
                let theory = law.nu_atom(c + 1)?;
                theory_total += theory;
                let per: Vec<f64> = snaps.iter().map(|s| s.m_of(c) as f64 / nf).collect();
                rows.push(ComparisonRow::new(
                    format!("atom {}", c + 1),
                    theory,
                    &per,
                    n,
                    tolerance,
                ));
            }
        }
        ClassLayout::Intervals { edges } => {
            let h = law.model.sup();
            for c in 0..edges.len() - 1 {
                let (a, b) = (edges[c], edges[c + 1].min(h));
                if a >= b {
                    continue;
                }
                let theory = law.nu_interval(a, b)?;
                theory_total += theory;
                let per: Vec<f64> = snaps.iter().map(|s| s.m_of(c) as f64 / nf).collect();
                rows.push(ComparisonRow::new(
                    summaries[0].layout.label(c),
                    theory,
                    &per,
                    n,
                    tolerance,
                ));
            }
        }
    }
    let totals: Vec<f64> = snaps.iter().map(|s| s.m.iter().sum::<u64>() as f64 / nf).collect();
    Ok(ComparisonReport {
        rows,
        empirical_total: median(&totals),
        theory_total,
    })
}

/// `N_{(j,k)}/n` against `η_{(j,k)}` for the given atoms and `k = 1..=kmax`.
pub fn compare_degree_cells(
    summaries: &[EmpiricalSummary],
    law: &LimitLaw<f64>,
    atoms: &[usize],
    kmax: u64,
    tolerance: f64,
) -> Result<ComparisonReport, VerifyError> {
    let snaps = finals(summaries)?;
    if summaries[0].layout != ClassLayout::Atoms {
        return Err(VerifyError::Mismatch("degree cells need an atom layout".into()));
    }
    let n = snaps[0].n;
    let mut rows = Vec::new();
    for &j in atoms {
        for k in 1..=kmax {
            let theory = law.eta(j, k)?;
            let per: Vec<f64> = snaps.iter().map(|s| s.n_of(j - 1, k) as f64 / n as f64).collect();
            rows.push(ComparisonRow::new(
                format!("atom {j}, degree {k}"),
                theory,
                &per,
                n,
                tolerance,
            ));
        }
    }
    Ok(ComparisonReport {
        rows,
        empirical_total: f64::NAN,
        theory_total: f64::NAN,
    })
}

/// `L_{n,k}/n` against `μ_k = 4 / (k (k+1) (k+2))` for `k = 1..=kmax`.
pub fn compare_degree_law(
    summaries: &[EmpiricalSummary],
    kmax: u64,
    tolerance: f64,
) -> Result<ComparisonReport, VerifyError> {
    let snaps = finals(summaries)?;
    let n = snaps[0].n;
    let mut rows = Vec::new();
    for k in 1..=kmax {
        let theory: f64 = mu_k(k)?;
        let per: Vec<f64> = snaps.iter().map(|s| s.l_of(k) as f64 / n as f64).collect();
        rows.push(ComparisonRow::new(format!("degree {k}"), theory, &per, n, tolerance));
    }
    Ok(ComparisonReport {
        rows,
        empirical_total: f64::NAN,
        theory_total: f64::NAN,
    })
}

/// Tail fit over `[kmin, kmax]`.
///
/// The degree laws of the process are Yule-type,
/// `P(D = k) ∝ Γ(k) / Γ(k + 1 + s)`, with survival function decaying like
/// `k^{-s}`. `mle` maximizes the likelihood of that family truncated to
/// the fitted range; `ls` fits the same family to the empirical log
/// survival function by least squares. `power_law_mle` and `loglog_slope`
/// are the plain pure-power-law estimates, reported for comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    pub kmin: u64,
    pub kmax: u64,
    pub vertices: u64,
    pub mle: f64,
    pub mle_stderr: f64,
    pub ls: f64,
    pub ls_stderr: f64,
    pub power_law_mle: f64,
    pub loglog_slope: f64,
}

impl TailFit {
    /// `|mle - ls|` in units of the pooled standard error.
    pub fn disagreement(&self) -> f64 {
        (self.mle - self.ls).abs() / (self.mle_stderr.powi(2) + self.ls_stderr.powi(2)).sqrt()
    }
}

pub const DEFAULT_KMIN: u64 = 5;
/// `kmax` defaults to the largest degree with at least this many vertices.
pub const DEFAULT_KMAX_COUNT: u64 = 20;
pub const MIN_TAIL_VERTICES: u64 = 200;

fn yule_log_weight(k: f64, s: f64) -> f64 {
    ln_gamma(k) - ln_gamma(k + 1.0 + s)
}

/// `ln Σ_{k ≥ k0} Γ(k) / Γ(k + 1 + s) = ln(Γ(k0) / (s Γ(k0 + s)))`.
fn yule_log_survival(k0: f64, s: f64) -> f64 {
    ln_gamma(k0) - s.ln() - ln_gamma(k0 + s)
}

/// Maximizer of a unimodal function on `[lo, hi]` by golden-section search in log space.
fn argmax_log<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (lo.ln(), hi.ln());
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c.exp()), f(d.exp()));
    for _ in 0..200 {
        if (b - a).abs() < 1e-12 {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c.exp());
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d.exp());
        }
    }
    (0.5 * (a + b)).exp()
}

fn second_derivative<F: Fn(f64) -> f64>(f: &F, x: f64) -> f64 {
    let h = 1e-4 * x.max(1e-3);
    (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h)
}

/// Fits the degree tail of one class (or of all vertices when `class` is `None`).
pub fn estimate_tail_exponent(
    snapshot: &Snapshot,
    class: Option<usize>,
    kmin: u64,
    kmax: Option<u64>,
) -> Result<TailFit, VerifyError> {
    let counts: Vec<(u64, u64)> = match class {
        Some(c) => snapshot.class_degrees(c),
        None => snapshot.degree_hist.clone(),
    };
    let kmax = kmax.unwrap_or_else(|| {
        counts
            .iter()
            .filter(|&&(_, n)| n >= DEFAULT_KMAX_COUNT)
            .map(|&(k, _)| k)
            .max()
            .unwrap_or(kmin)
    });
    let in_range: Vec<(f64, f64)> = counts
        .iter()
        .filter(|&&(k, _)| k >= kmin && k <= kmax)
        .map(|&(k, n)| (k as f64, n as f64))
        .collect();
    let vertices = in_range.iter().map(|&(_, n)| n).sum::<f64>() as u64;
    if vertices < MIN_TAIL_VERTICES || kmax <= kmin + 1 {
        return Err(VerifyError::Insufficient {
            what: "vertices in the fitted degree range",
            needed: MIN_TAIL_VERTICES as usize,
            got: vertices as usize,
        });
    }
    let total = vertices as f64;
    let (k0, k1) = (kmin as f64, kmax as f64);

    // Truncated Yule likelihood: normalizer is S(kmin) - S(kmax + 1).
    let loglik = |s: f64| {
        let la = yule_log_survival(k0, s);
        let lb = yule_log_survival(k1 + 1.0, s);
        let log_z = la + (-(lb - la).exp()).ln_1p();
        in_range.iter().map(|&(k, n)| n * yule_log_weight(k, s)).sum::<f64>() - total * log_z
    };
    let mle = argmax_log(loglik, 0.05, 50.0);
    let info = -second_derivative(&loglik, mle);
    let mle_stderr = if info > 0.0 { info.sqrt().recip() } else { f64::INFINITY };

    // Empirical survival conditional on D >= kmin, including degrees above kmax.
    let above: f64 = counts.iter().filter(|&&(k, _)| k >= kmin).map(|&(_, n)| n as f64).sum();
    let mut surv = Vec::new();
    let mut acc = above;
    for k in kmin..=kmax {
        if k > kmin {
            surv.push((k as f64, (acc / above).ln()));
        }
        acc -= counts.iter().find(|&&(d, _)| d == k).map_or(0.0, |&(_, n)| n as f64);
    }
    let sse = |s: f64| {
        let base = yule_log_survival(k0, s);
        surv.iter()
            .map(|&(k, y)| {
                let r = y - (yule_log_survival(k, s) - base);
                r * r
            })
            .sum::<f64>()
    };
    let ls = argmax_log(|s| -sse(s), 0.05, 50.0);
    let m = surv.len() as f64;
    let sigma2 = sse(ls) / (m - 1.0).max(1.0);
    let curv = 0.5 * second_derivative(&sse, ls);
    let ls_stderr = if curv > 0.0 {
        (sigma2 / curv).sqrt()
    } else {
        f64::INFINITY
    };

    // Pure power law p(k) ∝ k^{-α} on the range, survival exponent α - 1.
    let sum_log: f64 = in_range.iter().map(|&(k, n)| n * k.ln()).sum();
    let pl = |a: f64| {
        let z: f64 = (kmin..=kmax).map(|k| (k as f64).powf(-a)).sum();
        -a * sum_log - total * z.ln()
    };
    let power_law_mle = argmax_log(pl, 1.01, 50.0) - 1.0;
    let (sx, sy, sxx, sxy) = surv.iter().fold((0.0, 0.0, 0.0, 0.0), |(a, b, c, d), &(k, y)| {
        let x = k.ln();
        (a + x, b + y, c + x * x, d + x * y)
    });
    let loglog_slope = -(m * sxy - sx * sy) / (m * sxx - sx * sx);

    Ok(TailFit {
        kmin,
        kmax,
        vertices,
        mle,
        mle_stderr,
        ls,
        ls_stderr,
        power_law_mle,
        loglog_slope,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub stderr: f64,
    pub intercept: f64,
    pub points: usize,
}

pub const MIN_TRAJECTORY_POINTS: usize = 10;

/// Least-squares slope of `ln d` against `ln t` over the points with `t >= t0`.
pub fn vertex_exponent(trajectory: &[(u64, u32)], t0: u64) -> Result<SlopeFit, VerifyError> {
    let pts: Vec<(f64, f64)> = trajectory
        .iter()
        .filter(|&&(t, _)| t >= t0 && t > 0)
        .map(|&(t, d)| ((t as f64).ln(), (d as f64).ln()))
        .collect();
    if pts.len() < MIN_TRAJECTORY_POINTS {
        return Err(VerifyError::Insufficient {
            what: "trajectory points after t0",
            needed: MIN_TRAJECTORY_POINTS,
            got: pts.len(),
        });
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let stderr = (rss / (m - 2.0) / sxx).sqrt();
    Ok(SlopeFit {
        slope,
        stderr,
        intercept,
        points: pts.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CondensationRow {
    pub n: u64,
    /// `M_{[h-ε, h]} / n`.
    pub top_mass: f64,
    /// `M_{[0, h-ε)} / n`.
    pub below_mass: f64,
    pub max_fitness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CondensationScan {
    pub phase: Phase,
    /// Set when the model is not in the condensation phase.
    pub warning: Option<String>,
    pub window: f64,
    /// `2 - ν_{[0, h-ε]}`, or `ν_{[h-ε, h]}` outside the condensation phase.
    pub target: f64,
    pub rows: Vec<CondensationRow>,
    pub strictly_increasing: bool,
    /// Per-cell comparison below the window at the last checkpoint.
    pub cells: ComparisonReport,
}

impl CondensationScan {
    /// `n,top_mass,below_mass,max_fitness,target`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "n,top_mass,below_mass,max_fitness,target")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{}",
                r.n, r.top_mass, r.below_mass, r.max_fitness, self.target
            )?;
        }
        Ok(())
    }
}

/// Runs one simulation to the largest `n` with cells of width `window` and
/// records the top-window share at each `n`.
///
/// `window` must divide `h` into a whole number of cells (up to rounding).
pub fn condensation_scan(
    model: &FitnessModel<f64>,
    ns: &[u64],
    window: f64,
    seed: u64,
    cell_tolerance: f64,
) -> Result<CondensationScan, VerifyError> {
    let law = LimitLaw::new(model.clone())?;
    let h = law.report.h;
    let cells = (h / window).round().max(1.0) as usize;
    let layout = ClassLayout::equal_cells(h, cells);
    let mut ns = ns.to_vec();
    ns.sort_unstable();
    ns.dedup();
    let nmax = *ns.last().ok_or(VerifyError::Empty)?;
    let summary = simulate(
        model,
        seed,
        nmax,
        &CheckpointSchedule::Explicit { steps: ns.clone() },
        GrowthOptions {
            layout: Some(layout),
            ..Default::default()
        },
    )?;
    let top = cells - 1;
    let ClassLayout::Intervals { edges } = &summary.layout else {
        unreachable!("interval layout requested")
    };
    let a = edges[top];
    let condensed = law.report.phase.uses_supremum();
    let warning =
        (!condensed).then(|| format!("model is in the {} phase, not condensation", law.report.phase.as_str()));
    let target = law.nu_interval(a, h)?;
    let rows: Vec<CondensationRow> = summary
        .snapshots
        .iter()
        .filter(|s| ns.contains(&s.n))
        .map(|s| {
            let nf = s.n as f64;
            let topm = s.m_of(top) as f64;
            let below: u64 = (0..top).map(|c| s.m_of(c)).sum();
            CondensationRow {
                n: s.n,
                top_mass: topm / nf,
                below_mass: below as f64 / nf,
                max_fitness: s.max_fitness,
            }
        })
        .collect();
    let strictly_increasing = rows.windows(2).all(|w| w[1].top_mass > w[0].top_mass);
    let mut cells_report = compare_link_shares(std::slice::from_ref(&summary), &law, cell_tolerance)?;
    cells_report.rows.truncate(top);
    Ok(CondensationScan {
        phase: law.report.phase,
        warning,
        window,
        target,
        rows,
        strictly_increasing,
        cells: cells_report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::NCell;

    fn snapshot_from(dist: impl Fn(u64) -> f64, n: f64, kmax: u64) -> Snapshot {
        let degree_hist: Vec<(u64, u64)> = (1..=kmax)
            .map(|k| (k, (dist(k) * n).round() as u64))
            .filter(|&(_, c)| c > 0)
            .collect();
        Snapshot {
            n: n as u64,
            vertices: degree_hist.iter().map(|p| p.1).sum(),
            degree_sum: 0,
            m: vec![],
            cells: degree_hist
                .iter()
                .map(|&(k, c)| NCell {
                    class: 0,
                    degree: k,
                    count: c,
                })
                .collect(),
            degree_hist,
            max_fitness: 1.0,
        }
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn yule_mle_recovers_exponent_on_exact_law() {
        // 4 / (k (k+1) (k+2)) is the s = 2 member of the family.
        let snap = snapshot_from(|k| 4.0 / (k * (k + 1) * (k + 2)) as f64, 1e9, 100_000);
        let fit = estimate_tail_exponent(&snap, None, 5, Some(60)).unwrap();
        assert!((fit.mle - 2.0).abs() < 1e-3, "{fit:?}");
        assert!((fit.ls - 2.0).abs() < 1e-3, "{fit:?}");
        assert!(fit.power_law_mle < 1.9);
    }

    #[test]
    fn yule_survival_matches_direct_sum() {
        let s: f64 = 1.7;
        let direct: f64 = (5..200_000).map(|k| yule_log_weight(k as f64, s).exp()).sum();
        assert!((direct.ln() - yule_log_survival(5.0, s)).abs() < 1e-6);
    }

    #[test]
    fn too_few_vertices() {
        let snap = snapshot_from(|k| if k < 6 { 1.0 } else { 0.0 }, 10.0, 10);
        assert!(matches!(
            estimate_tail_exponent(&snap, None, 5, None),
            Err(VerifyError::Insufficient { .. })
        ));
    }

    #[test]
    fn slope_of_exact_power() {
        let traj: Vec<(u64, u32)> = (0..20).map(|i| (1u64 << i, 1u32 << (i / 2))).collect();
        let fit = vertex_exponent(&traj, 1).unwrap();
        assert!((fit.slope - 0.5).abs() < 0.05);
        let flat: Vec<(u64, u32)> = (0..20).map(|i| (1u64 << i, 1)).collect();
        assert_eq!(vertex_exponent(&flat, 1).unwrap().slope, 0.0);
        assert!(vertex_exponent(&flat, 1 << 15).is_err());
    }
}
