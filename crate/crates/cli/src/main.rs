//! `fitpa`: phase reports, simulations, urn runs, coupled certifications,
//! convergence scans and verification gates.
//!
//! Exit codes: 0 success, 1 a gate failed, 2 bad input or an internal error.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Result;
use clap::{Parser, Subcommand};

use crate::config::{
    CoupleArgs, ExperimentConfig, ModelArgs, OutputArgs, PhaseArgs, RunArgs, ScanArgs, UrnArgs, VerifyArgs,
};
use crate::output::{RunDir, RunReport};

#[derive(Parser, Debug)]
#[command(
    name = "fitpa",
    version,
    about = "Preferential attachment with fitness: simulate, solve, verify"
)]
struct Cli {
    /// TOML experiment config; flags override its values.
    #[arg(long, global = true, display_order = 899)]
    config: Option<PathBuf>,
    #[command(flatten)]
    output: OutputArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Phase, λ₀ and limit tables of a fitness law.
    Phase {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        phase: PhaseArgs,
    },
    /// Grow graphs and write summaries per seed.
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Compare simulated shares and degree cells with the limit laws.
    Verify {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        verify: VerifyArgs,
    },
    /// Build an urn, optionally solve its Perron eigenpair, and run it.
    Urn {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        urn: UrnArgs,
    },
    /// Run the original chain and its two truncations on shared randomness.
    Couple {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        couple: CoupleArgs,
    },
    /// Truncated or discretized λ₀ against the exact root.
    Scan {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        scan: ScanArgs,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Phase { .. } => "phase",
            Command::Simulate { .. } => "simulate",
            Command::Verify { .. } => "verify",
            Command::Urn { .. } => "urn",
            Command::Couple { .. } => "couple",
            Command::Scan { .. } => "scan",
        }
    }

    /// Flag values as a config holding only this command's sections.
    fn flags(self, output: OutputArgs) -> ExperimentConfig {
        let mut c = ExperimentConfig {
            output,
            ..Default::default()
        };
        match self {
            Command::Phase { model, phase } => (c.model, c.phase) = (model, phase),
            Command::Simulate { model, run } => (c.model, c.run) = (model, run),
            Command::Verify { model, run, verify } => (c.model, c.run, c.verify) = (model, run, verify),
            Command::Urn { model, run, urn } => (c.model, c.run, c.urn) = (model, run, urn),
            Command::Couple { model, run, couple } => (c.model, c.run, c.couple) = (model, run, couple),
            Command::Scan { model, scan } => (c.model, c.scan) = (model, scan),
        }
        c
    }
}

/// Drops the sections a command does not read, so the echo reflects the run.
fn relevant(command: &str, c: ExperimentConfig) -> ExperimentConfig {
    let keep = |s: &str| match command {
        "phase" => s == "phase",
        "simulate" => s == "run",
        "verify" => s == "run" || s == "verify",
        "urn" => s == "run" || s == "urn",
        "couple" => s == "run" || s == "couple",
        "scan" => s == "scan",
        _ => false,
    };
    ExperimentConfig {
        output: c.output,
        model: c.model,
        run: if keep("run") { c.run } else { Default::default() },
        phase: if keep("phase") { c.phase } else { Default::default() },
        verify: if keep("verify") { c.verify } else { Default::default() },
        urn: if keep("urn") { c.urn } else { Default::default() },
        couple: if keep("couple") { c.couple } else { Default::default() },
        scan: if keep("scan") { c.scan } else { Default::default() },
    }
}

fn run(cli: Cli) -> Result<u8> {
    let started = Instant::now();
    let command = cli.command.name();
    let flags = cli.command.flags(cli.output);
    let file = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    let mut cfg = relevant(command, flags.over(file));
    let plan = commands::plan(command, &cfg)?;
    if let Some(m) = &plan.model {
        // Echo the resolved parameters, defaults included.
        cfg.model = ModelArgs::from_descriptor(m.descriptor())?;
    }
    let name = cfg.output.name.clone().unwrap_or_else(|| plan.dir_name.clone());
    let dir = RunDir::create(&cfg.output.root(), &name, &cfg.to_toml()?)?;
    let outcome = commands::execute(command, &cfg, &plan, &dir)?;
    let exit_code = if outcome.passed { 0 } else { 1 };
    dir.write_json(
        "report.json",
        &RunReport {
            command,
            model: plan.model_json(),
            passed: outcome.passed,
            exit_code,
            elapsed_ms: started.elapsed().as_millis(),
            details: outcome.details,
        },
    )?;
    eprintln!(
        "{command}: {} ({})",
        if outcome.passed { "PASS" } else { "FAIL" },
        dir.path.display()
    );
    Ok(exit_code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
