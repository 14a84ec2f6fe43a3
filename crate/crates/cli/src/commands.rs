use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use anyhow::{bail, Context, Result};
use fitpa::coupling::{coupled_degree_run, discretize, lambda0_convergence_scan, write_violations, ScanTable};
use fitpa::fitness::FitnessModel;
use fitpa::graph::{default_layout, simulate, ClassLayout, EmpiricalSummary, GrowthOptions, TrackRule};
use fitpa::theory::{theory_report, LimitLaw, ReportTables};
use fitpa::urn::{degree_urn, fitness_urn, joint_urn, perron_spec, run_urn, PerronResult, UrnSpec};
use fitpa::verify::{compare_degree_cells, compare_link_shares, condensation_scan, ComparisonReport};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::{Builder, ExperimentConfig, ModelArgs};
use crate::output::{say, RunDir};

const RESIDUAL_TOL: f64 = 1e-10;
const NU_SUM_TOL: f64 = 1e-9;

/// What a command will run, resolved before the run directory exists.
pub struct Plan {
    pub model: Option<FitnessModel<f64>>,
    /// Loaded instead of simulated (`verify --summary`).
    pub summaries: Vec<EmpiricalSummary>,
    pub dir_name: String,
}

impl Plan {
    pub fn model_json(&self) -> Value {
        self.model
            .as_ref()
            .map(|m| serde_json::to_value(m.descriptor()).expect("descriptor serializes"))
            .unwrap_or(Value::Null)
    }
}

pub struct Outcome {
    pub passed: bool,
    pub details: Value,
}

fn load_summary(path: &Path) -> Result<EmpiricalSummary> {
    let f = File::open(path).with_context(|| format!("opening summary {}", path.display()))?;
    let s: EmpiricalSummary =
        serde_json::from_reader(BufReader::new(f)).with_context(|| format!("reading summary {}", path.display()))?;
    if s.snapshots.is_empty() {
        bail!("summary {} has no snapshots", path.display());
    }
    Ok(s)
}

pub fn plan(command: &str, cfg: &ExperimentConfig) -> Result<Plan> {
    let mut summaries = Vec::new();
    if command == "verify" {
        for p in cfg.verify.summary.iter().flatten() {
            summaries.push(load_summary(p)?);
        }
    }
    let needs_model = !(command == "urn" && cfg.urn.builder == Some(Builder::Degree));
    let model = if cfg.model.name.is_some() {
        Some(cfg.model.build()?)
    } else if let Some(s) = summaries.first() {
        Some(ModelArgs::from_descriptor(&s.model)?.build()?)
    } else if needs_model {
        bail!("no model given; pass --model or set [model] name in the config");
    } else {
        None
    };
    let model_name = model
        .as_ref()
        .map_or("degree".to_string(), |m| m.descriptor().name.clone());
    let run = &cfg.run;
    let dir_name = match command {
        "phase" | "scan" => format!("{command}-{model_name}"),
        "verify" if !summaries.is_empty() => format!("verify-{model_name}-from-summaries"),
        _ => format!(
            "{command}-{model_name}-n{}-seed{}",
            run.n_or(default_n(command))?,
            run.seed.unwrap_or(1)
        ),
    };
    Ok(Plan {
        model,
        summaries,
        dir_name,
    })
}

fn default_n(command: &str) -> u64 {
    match command {
        "couple" => 10_000,
        _ => 100_000,
    }
}

pub fn execute(command: &str, cfg: &ExperimentConfig, plan: &Plan, dir: &RunDir) -> Result<Outcome> {
    match command {
        "phase" => phase(cfg, model(plan)?, dir),
        "simulate" => simulate_cmd(cfg, model(plan)?, dir),
        "verify" => verify(cfg, plan, dir),
        "urn" => urn(cfg, plan.model.as_ref(), dir),
        "couple" => couple(cfg, model(plan)?, dir),
        "scan" => scan(cfg, model(plan)?, dir),
        other => bail!("unknown command {other}"),
    }
}

fn model(plan: &Plan) -> Result<&FitnessModel<f64>> {
    plan.model.as_ref().context("command needs a model")
}

/// Runs `f` on every seed in a bounded pool; results keep the seed order.
fn fan_out<R, F>(seeds: &[u64], workers: Option<usize>, f: F) -> Result<Vec<R>>
where
    R: Send,
    F: Fn(u64) -> Result<R> + Sync,
{
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        b = b.num_threads(w.max(1));
    }
    let pool = b.build()?;
    pool.install(|| seeds.par_iter().map(|&s| f(s)).collect())
}

fn phase(cfg: &ExperimentConfig, model: &FitnessModel<f64>, dir: &RunDir) -> Result<Outcome> {
    let law = LimitLaw::new(model.clone())?;
    let a = &cfg.phase;
    let mut tables = ReportTables {
        eta_kmax: a.kmax.unwrap_or(10),
        ..Default::default()
    };
    match model {
        FitnessModel::FiniteDiscrete(..) => tables.atoms = (1..=model.atom_count().unwrap_or(0)).collect(),
        FitnessModel::CountableDiscrete(..) => tables.atoms = (1..=a.atoms.unwrap_or(10)).collect(),
        FitnessModel::ContinuousDensity(..) => {
            let cells = a.cells.unwrap_or(20).max(1);
            let h = model.sup();
            tables.intervals = (0..cells)
                .map(|i| (h * i as f64 / cells as f64, h * (i + 1) as f64 / cells as f64))
                .collect();
        }
        FitnessModel::ContinuousUnbounded(..) => {
            // Deciles; the last one is [q_0.9, ∞).
            if let ClassLayout::Intervals { edges } = default_layout(model) {
                tables.intervals = edges.windows(2).map(|w| (w[0], w[1])).collect();
            }
        }
    }
    let report = theory_report(&law, &tables)?;
    say!("{}", serde_json::to_string_pretty(&report)?);
    dir.write_json("phase.json", &report)?;
    let passed = law.report.residual().is_none_or(|r| r.abs() <= RESIDUAL_TOL);
    Ok(Outcome {
        passed,
        details: json!({
            "phase": law.report.phase.as_str(),
            "lambda0": report["lambda0"],
            "residual": report["residual"],
        }),
    })
}

fn growth_options(cfg: &ExperimentConfig, layout: Option<ClassLayout>) -> GrowthOptions {
    GrowthOptions {
        layout,
        track: cfg
            .run
            .track_first
            .map(|count| vec![TrackRule::FirstK { count }])
            .unwrap_or_default(),
        ..Default::default()
    }
}

fn write_summary(dir: &RunDir, s: &EmpiricalSummary) -> Result<()> {
    let tag = format!("seed{}-n{}", s.seed, s.last().n);
    dir.write_with(&format!("summary-{tag}.json"), |w| {
        serde_json::to_writer(&mut *w, s).map_err(std::io::Error::other)
    })?;
    dir.write_with(&format!("m-{tag}.csv"), |w| s.write_m_csv(w))?;
    dir.write_with(&format!("n-{tag}.csv"), |w| s.write_n_csv(w))?;
    if !s.trajectories.is_empty() {
        dir.write_with(&format!("trajectories-{tag}.csv"), |w| s.write_trajectories_csv(w))?;
    }
    Ok(())
}

fn simulate_runs(
    cfg: &ExperimentConfig,
    model: &FitnessModel<f64>,
    layout: Option<ClassLayout>,
) -> Result<Vec<EmpiricalSummary>> {
    let n = cfg.run.n_or(default_n("simulate"))?;
    let seeds = cfg.run.seed_list(1)?;
    let schedule = cfg.run.schedule();
    fan_out(&seeds, cfg.run.workers, |seed| {
        Ok(simulate(
            model,
            seed,
            n,
            &schedule,
            growth_options(cfg, layout.clone()),
        )?)
    })
}

fn simulate_cmd(cfg: &ExperimentConfig, model: &FitnessModel<f64>, dir: &RunDir) -> Result<Outcome> {
    let runs = simulate_runs(cfg, model, None)?;
    let mut per_seed = Vec::new();
    for s in &runs {
        write_summary(dir, s)?;
        let last = s.last();
        per_seed.push(json!({
            "seed": s.seed,
            "n": last.n,
            "vertices": last.vertices,
            "max_fitness": last.max_fitness,
            "degree_one_fraction": last.l_of(1) as f64 / last.n as f64,
            "flags": s.flags,
        }));
        say!(
            "seed {}: n = {}, L_1/n = {:.6}",
            s.seed,
            last.n,
            last.l_of(1) as f64 / last.n as f64
        );
    }
    Ok(Outcome {
        passed: true,
        details: json!({ "runs": per_seed }),
    })
}

fn print_report(title: &str, r: &ComparisonReport) {
    say!("{title}: {} rows, {} failed", r.rows.len(), r.failures().len());
    for row in r.rows.iter().take(40) {
        say!(
            "  {:<24} theory {:>10.6}  empirical {:>10.6}  |err| {:>9.2e}  {}",
            row.target,
            row.theory,
            row.empirical,
            row.abs_error,
            if row.pass { "PASS" } else { "FAIL" }
        );
    }
    if r.rows.len() > 40 {
        say!("  ... {} more rows in the CSV", r.rows.len() - 40);
    }
}

fn verify(cfg: &ExperimentConfig, plan: &Plan, dir: &RunDir) -> Result<Outcome> {
    let model = model(plan)?;
    let v = &cfg.verify;
    if let Some(window) = v.window {
        return verify_condensation(cfg, model, window, dir);
    }
    let layout = match model {
        FitnessModel::ContinuousDensity(..) if v.cells.is_some() || v.cell_top.is_some() => {
            let top = v.cell_top.unwrap_or(model.sup());
            if !(top > 0.0 && top <= model.sup()) {
                bail!("cell_top must lie in (0, h], got {top}");
            }
            Some(ClassLayout::equal_cells(top, v.cells.unwrap_or(20).max(1)))
        }
        _ => None,
    };
    let runs = if plan.summaries.is_empty() {
        let runs = simulate_runs(cfg, model, layout)?;
        for s in &runs {
            write_summary(dir, s)?;
        }
        runs
    } else {
        plan.summaries.clone()
    };
    let law = LimitLaw::new(model.clone())?;
    let shares = compare_link_shares(&runs, &law, v.tolerance.unwrap_or(0.02))?;
    print_report("link shares", &shares);
    dir.write_with("shares.csv", |w| shares.write_csv(w))?;
    let mut passed = shares.passed();
    let mut degree = None;
    let kmax = v.degree_kmax.unwrap_or(0);
    if kmax > 0 && model.is_discrete() {
        if runs[0].layout != ClassLayout::Atoms {
            bail!("degree cells need summaries with the atom layout");
        }
        let count = model.atom_count().unwrap_or(v.atoms.unwrap_or(5));
        let atoms: Vec<usize> = (1..=count).collect();
        let cells = compare_degree_cells(&runs, &law, &atoms, kmax, v.degree_tolerance.unwrap_or(0.01))?;
        print_report("degree cells", &cells);
        dir.write_with("degree-cells.csv", |w| cells.write_csv(w))?;
        passed &= cells.passed();
        degree = Some(cells);
    }
    let details = json!({
        "seeds": runs.iter().map(|s| s.seed).collect::<Vec<_>>(),
        "n": runs[0].last().n,
        "shares": shares,
        "degree_cells": degree,
    });
    dir.write_json("comparison.json", &details)?;
    Ok(Outcome { passed, details })
}

fn verify_condensation(
    cfg: &ExperimentConfig,
    model: &FitnessModel<f64>,
    window: f64,
    dir: &RunDir,
) -> Result<Outcome> {
    let v = &cfg.verify;
    if !(window > 0.0 && window < model.sup()) {
        bail!("window must lie in (0, h), got {window}");
    }
    let n = cfg.run.n_or(1_000_000)?;
    let ns = match &cfg.run.checkpoints {
        Some(c) => {
            let mut c: Vec<u64> = c.iter().copied().filter(|&x| x >= 1 && x < n).collect();
            c.push(n);
            c
        }
        None => vec![(n / 100).max(1), (n / 10).max(1), n],
    };
    let seeds = cfg.run.seed_list(1)?;
    let cell_tol = v.tolerance.unwrap_or(0.02);
    let top_tol = v.window_tolerance.unwrap_or(0.08);
    let scans = fan_out(&seeds, cfg.run.workers, |seed| {
        Ok(condensation_scan(model, &ns, window, seed, cell_tol)?)
    })?;
    let mut passed = true;
    let mut per_seed = Vec::new();
    for (seed, s) in seeds.iter().zip(&scans) {
        dir.write_with(&format!("condensation-seed{seed}.csv"), |w| s.write_csv(w))?;
        dir.write_with(&format!("cells-seed{seed}.csv"), |w| s.cells.write_csv(w))?;
        let last = s.rows.last().map_or(f64::NAN, |r| r.top_mass);
        let ok = s.strictly_increasing && (last - s.target).abs() <= top_tol && s.cells.passed();
        passed &= ok;
        say!(
            "seed {seed}: top window {} (target {:.5}), increasing {}, cells {}",
            s.rows
                .iter()
                .map(|r| format!("{:.4}", r.top_mass))
                .collect::<Vec<_>>()
                .join(" -> "),
            s.target,
            s.strictly_increasing,
            if s.cells.passed() { "pass" } else { "fail" }
        );
        if let Some(w) = &s.warning {
            say!("  warning: {w}");
        }
        per_seed.push(json!({ "seed": seed, "passed": ok, "scan": s }));
    }
    Ok(Outcome {
        passed,
        details: json!({ "window": window, "checkpoints": ns, "runs": per_seed }),
    })
}

fn perron_json(spec: &UrnSpec<f64>, p: &PerronResult<f64>) -> Value {
    json!({
        "lambda1": p.lambda1,
        "v1": p.v1,
        "u1": p.u1,
        "residual": p.residual,
        "iterations": p.iterations,
        "labels": spec.labels,
    })
}

fn urn(cfg: &ExperimentConfig, model: Option<&FitnessModel<f64>>, dir: &RunDir) -> Result<Outcome> {
    let a = &cfg.urn;
    let k = a.k.unwrap_or(5);
    let need = || model.context("this builder needs a model");
    let spec: UrnSpec<f64> = match a.builder.unwrap_or(Builder::Joint) {
        Builder::Degree => degree_urn(k),
        Builder::Fitness => fitness_urn(need()?)?,
        Builder::Joint => joint_urn(need()?, k)?,
        Builder::Discretization => discretize(need()?, a.cells.unwrap_or(50))?.1,
    };
    dir.write_json("urn.json", &spec)?;
    let perron = if a.perron.unwrap_or(false) {
        let p = perron_spec(&spec)?;
        say!("lambda1 = {:.12}", p.lambda1);
        dir.write_json("perron.json", &perron_json(&spec, &p))?;
        Some(p)
    } else {
        None
    };
    let n = cfg.run.n_or(default_n("urn"))?;
    let seeds = cfg.run.seed_list(1)?;
    let schedule = cfg.run.schedule();
    let runs = fan_out(&seeds, cfg.run.workers, |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(run_urn(&spec, n, &schedule, &mut rng)?)
    })?;
    let mut per_seed = Vec::new();
    for (seed, r) in seeds.iter().zip(&runs) {
        dir.write_with(&format!("urn-seed{seed}-n{n}.csv"), |w| r.write_csv(w))?;
        let shares: Vec<f64> = r.last().iter().map(|&x| x as f64 / n as f64).collect();
        let distance = perron.as_ref().map(|p| {
            shares
                .iter()
                .zip(&p.v1)
                .map(|(x, v)| (x - p.lambda1 * v).abs())
                .fold(0.0, f64::max)
        });
        if let Some(d) = distance {
            say!("seed {seed}: max |X/n - λ₁v₁| = {d:.5}");
        }
        per_seed.push(json!({ "seed": seed, "n": n, "shares": shares, "distance_to_perron": distance }));
    }
    Ok(Outcome {
        passed: true,
        details: json!({
            "bins": spec.bins(),
            "lambda1": perron.as_ref().map(|p| p.lambda1),
            "runs": per_seed,
        }),
    })
}

fn couple(cfg: &ExperimentConfig, model: &FitnessModel<f64>, dir: &RunDir) -> Result<Outcome> {
    let index = cfg.couple.index.unwrap_or(5);
    let n = cfg.run.n_or(default_n("couple"))?;
    let seeds = cfg.run.seed_list(1)?;
    let schedule = cfg.run.schedule();
    let reports = fan_out(&seeds, cfg.run.workers, |seed| {
        Ok(coupled_degree_run(model, index, n, seed, &schedule)?)
    })?;
    let mut passed = true;
    let mut total = [0u64; 4];
    let mut per_seed = Vec::new();
    for r in &reports {
        let run = &r.run;
        let tag = format!("seed{}-n{}", run.seed, n);
        dir.write_with(&format!("tails-{tag}.csv"), |w| r.write_csv(w))?;
        dir.write_with(&format!("violations-{tag}.jsonl"), |w| {
            write_violations(&run.violations, w)
        })?;
        for (chain, s) in [("upper", &run.upper), ("middle", &run.middle), ("lower", &run.lower)] {
            dir.write_with(&format!("m-{chain}-{tag}.csv"), |w| s.write_m_csv(w))?;
        }
        for (t, c) in total.iter_mut().zip(run.violation_counts) {
            *t += c;
        }
        passed &= run.violation_counts.iter().all(|&c| c == 0);
        per_seed.push(json!({
            "seed": run.seed,
            "violation_counts": run.violation_counts,
            "branch_counts": run.branch_counts,
            "fallback_steps": run.fallback_steps,
            "branch_mass_error": run.branch_mass_error,
        }));
    }
    say!(
        "{} seeds, I = {index}, n = {n}: violations by condition {:?}",
        seeds.len(),
        total
    );
    Ok(Outcome {
        passed,
        details: json!({ "I": index, "n": n, "violation_counts": total, "runs": per_seed }),
    })
}

fn scan_passes(t: &ScanTable) -> bool {
    t.rows
        .iter()
        .all(|r| r.bracket_holds && r.residual <= RESIDUAL_TOL && r.nu_sum_error.is_none_or(|e| e.abs() <= NU_SUM_TOL))
}

fn scan(cfg: &ExperimentConfig, model: &FitnessModel<f64>, dir: &RunDir) -> Result<Outcome> {
    let indices = cfg.scan.indices.clone().unwrap_or_else(|| vec![10, 100, 1000]);
    if indices.is_empty() {
        bail!("scan needs at least one index");
    }
    let table = lambda0_convergence_scan(model, &indices)?;
    let mut csv = Vec::new();
    table.write_csv(&mut csv)?;
    let csv = String::from_utf8(csv)?;
    say!("{}", csv.trim_end());
    dir.write_text("scan.csv", &csv)?;
    dir.write_json("scan.json", &table)?;
    Ok(Outcome {
        passed: scan_passes(&table),
        details: json!({ "target": table.target, "phase": table.phase, "monotone": table.monotone, "rows": table.rows.len() }),
    })
}
