//! Flags and TOML config share one set of option structs. A value given on
//! the command line wins over the config file; unset values fall back to the
//! defaults in the `*_or` accessors.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use fitpa::fitness::{FitnessModel, ModelDescriptor};
use fitpa::schedule::CheckpointSchedule;
use serde::{Deserialize, Serialize};

pub const OUT_ENV: &str = "FITPA_OUT";
pub const DEFAULT_OUT: &str = "runs";

trait Merge {
    /// Fields set in `self` win over `base`.
    fn merge(self, base: Self) -> Self;
}

macro_rules! merge_fields {
    ($t:ty { $($f:ident),* $(,)? }) => {
        impl Merge for $t {
            fn merge(self, base: Self) -> Self {
                Self { $($f: self.$f.or(base.$f)),* }
            }
        }
    };
}

/// Accepts plain integers and scientific notation such as `1e6`.
pub fn parse_count(s: &str) -> Result<u64, String> {
    if let Ok(v) = s.parse::<u64>() {
        return Ok(v);
    }
    let x: f64 = s.parse().map_err(|_| format!("not a count: {s}"))?;
    if x >= 0.0 && x.fract() == 0.0 && x < 1.8e19 {
        Ok(x as u64)
    } else {
        Err(format!("not a nonnegative integer: {s}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelName {
    Dirac,
    Twopoint,
    Finite,
    Uniform,
    Beta,
    Zeta,
    Exponential,
}

impl ModelName {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Dirac => "dirac",
            Self::Twopoint => "twopoint",
            Self::Finite => "finite",
            Self::Uniform => "uniform",
            Self::Beta => "beta",
            Self::Zeta => "zeta",
            Self::Exponential => "exponential",
        }
    }

    fn params(self) -> &'static [&'static str] {
        match self {
            Self::Dirac => &["f"],
            Self::Twopoint => &["f1", "f2", "q1"],
            Self::Finite => &["fitnesses", "probs"],
            Self::Uniform => &["h"],
            Self::Beta => &["alpha", "beta"],
            Self::Zeta => &["theta"],
            Self::Exponential => &["rate"],
        }
    }
}

#[derive(Args, Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelArgs {
    /// Fitness law.
    #[arg(id = "model", long = "model", value_enum)]
    #[serde(rename = "name", skip_serializing_if = "Option::is_none")]
    pub name: Option<ModelName>,
    /// Dirac atom (default 1).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f: Option<f64>,
    /// First two-point atom (defaults 1, 2, 0.5 for f1, f2, q1).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f1: Option<f64>,
    /// Second two-point atom.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f2: Option<f64>,
    /// Mass of the first two-point atom.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q1: Option<f64>,
    /// Ascending atoms of a finite law, comma separated.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fitnesses: Option<Vec<f64>>,
    /// Probabilities of the finite atoms, comma separated.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probs: Option<Vec<f64>>,
    /// Uniform support `[0, h]` (default 1).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    /// First Beta shape parameter (defaults 1, 3).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Second Beta shape parameter.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    /// Zeta family exponent (default 2).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    /// Exponential rate (default 1).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rate: Option<f64>,
}

merge_fields!(ModelArgs {
    name,
    f,
    f1,
    f2,
    q1,
    fitnesses,
    probs,
    h,
    alpha,
    beta,
    theta,
    rate
});

impl ModelArgs {
    /// Recovers the arguments that build a model with this descriptor.
    pub fn from_descriptor(d: &ModelDescriptor) -> Result<Self> {
        let name = ModelName::from_str(&d.name, true).map_err(|_| anyhow::anyhow!("unknown model {:?}", d.name))?;
        let p = |k: &str| d.params.get(k).copied();
        let mut a = ModelArgs {
            name: Some(name),
            ..Default::default()
        };
        match name {
            ModelName::Dirac => a.f = p("f"),
            ModelName::Twopoint => (a.f1, a.f2, a.q1) = (p("f1"), p("f2"), p("q1")),
            ModelName::Finite => {
                let count = d.params.len() / 2;
                let get = |c: char| (1..=count).map(|j| p(&format!("{c}{j}"))).collect::<Option<Vec<_>>>();
                a.fitnesses = Some(get('f').context("finite model descriptor without atoms")?);
                a.probs = Some(get('q').context("finite model descriptor without masses")?);
            }
            ModelName::Uniform => a.h = p("h"),
            ModelName::Beta => (a.alpha, a.beta) = (p("alpha"), p("beta")),
            ModelName::Zeta => a.theta = p("theta"),
            ModelName::Exponential => a.rate = p("rate"),
        }
        Ok(a)
    }

    fn given(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        let mut push = |k: &'static str, set: bool| {
            if set {
                out.push(k);
            }
        };
        push("f", self.f.is_some());
        push("f1", self.f1.is_some());
        push("f2", self.f2.is_some());
        push("q1", self.q1.is_some());
        push("fitnesses", self.fitnesses.is_some());
        push("probs", self.probs.is_some());
        push("h", self.h.is_some());
        push("alpha", self.alpha.is_some());
        push("beta", self.beta.is_some());
        push("theta", self.theta.is_some());
        push("rate", self.rate.is_some());
        out
    }

    /// Builds and validates the model.
    pub fn build(&self) -> Result<FitnessModel<f64>> {
        let Some(name) = self.name else {
            bail!("no model given; pass --model or set [model] name in the config");
        };
        for k in self.given() {
            if !name.params().contains(&k) {
                bail!("parameter {k} does not apply to model {}", name.as_str());
            }
        }
        let positive = |k: &str, v: f64| -> Result<f64> {
            if v.is_finite() && v > 0.0 {
                Ok(v)
            } else {
                bail!("{k} must be positive and finite, got {v}")
            }
        };
        let model = match name {
            ModelName::Dirac => FitnessModel::dirac(positive("f", self.f.unwrap_or(1.0))?),
            ModelName::Twopoint => {
                let f1 = positive("f1", self.f1.unwrap_or(1.0))?;
                let f2 = positive("f2", self.f2.unwrap_or(2.0))?;
                let q1 = self.q1.unwrap_or(0.5);
                if f1 >= f2 {
                    bail!("two-point atoms must satisfy f1 < f2, got {f1} and {f2}");
                }
                if !(q1 > 0.0 && q1 < 1.0) {
                    bail!("q1 must lie in (0, 1), got {q1}");
                }
                FitnessModel::two_point(f1, f2, q1)
            }
            ModelName::Finite => {
                let (Some(f), Some(q)) = (&self.fitnesses, &self.probs) else {
                    bail!("model finite needs --fitnesses and --probs");
                };
                if f.len() != q.len() || f.is_empty() {
                    bail!(
                        "--fitnesses and --probs need the same nonzero length, got {} and {}",
                        f.len(),
                        q.len()
                    );
                }
                FitnessModel::finite(f.clone(), q.clone())
            }
            ModelName::Uniform => FitnessModel::uniform(positive("h", self.h.unwrap_or(1.0))?),
            ModelName::Beta => FitnessModel::beta(
                positive("alpha", self.alpha.unwrap_or(1.0))?,
                positive("beta", self.beta.unwrap_or(3.0))?,
            ),
            ModelName::Zeta => {
                let theta = self.theta.unwrap_or(2.0);
                if !(theta.is_finite() && theta > -1.0) {
                    bail!("theta must exceed -1, got {theta}");
                }
                FitnessModel::zeta_family(theta)
            }
            ModelName::Exponential => FitnessModel::exponential(positive("rate", self.rate.unwrap_or(1.0))?),
        };
        let report = model.validate();
        if !report.passed() {
            bail!("model {} failed validation:\n{report}", model.descriptor());
        }
        Ok(model)
    }
}

#[derive(Args, Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunArgs {
    /// Steps per run (accepts 1e6).
    #[arg(long, value_parser = parse_count)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<u64>,
    /// Number of seeds.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seeds: Option<u64>,
    /// First seed; runs use `seed, seed+1, ...`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Checkpoint steps, comma separated (default powers of two).
    #[arg(long, value_delimiter = ',', value_parser = parse_count)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoints: Option<Vec<u64>>,
    /// Log degree trajectories of the first K vertices.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub track_first: Option<u64>,
    /// Worker threads for the seed fan-out (default: available cores).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

merge_fields!(RunArgs {
    n,
    seeds,
    seed,
    checkpoints,
    track_first,
    workers
});

impl RunArgs {
    pub fn n_or(&self, default: u64) -> Result<u64> {
        match self.n.unwrap_or(default) {
            0 => bail!("n must be at least 1"),
            n => Ok(n),
        }
    }

    pub fn seed_list(&self, default_count: u64) -> Result<Vec<u64>> {
        let count = self.seeds.unwrap_or(default_count);
        if count == 0 {
            bail!("seeds must be at least 1");
        }
        let first = self.seed.unwrap_or(1);
        (0..count)
            .map(|i| first.checked_add(i).context("seed range overflows u64"))
            .collect()
    }

    pub fn schedule(&self) -> CheckpointSchedule {
        match &self.checkpoints {
            Some(steps) => CheckpointSchedule::Explicit { steps: steps.clone() },
            None => CheckpointSchedule::PowersOfTwo,
        }
    }
}

#[derive(Args, Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseArgs {
    /// Atoms listed for countable models (default 10).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub atoms: Option<usize>,
    /// Equal cells of `[0, h]` listed for densities (default 20).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cells: Option<usize>,
    /// Largest degree in the per-atom degree table (default 10).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kmax: Option<u64>,
}

merge_fields!(PhaseArgs { atoms, cells, kmax });

#[derive(Args, Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyArgs {
    /// Gate on `|M/n - ν|` (default 0.02).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    /// Also gate `N_{(j,k)}/n` for `k <= K` on discrete models (default 0, off).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub degree_kmax: Option<u64>,
    /// Gate on `|N/n - η|` (default 0.01).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub degree_tolerance: Option<f64>,
    /// Atoms compared for countable models (default 5).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub atoms: Option<usize>,
    /// Equal cells for densities (default 20).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cells: Option<usize>,
    /// Upper edge of the cell grid (default h); mass above it is not compared.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cell_top: Option<f64>,
    /// Run the condensation check with a top window of this width instead.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<f64>,
    /// Gate on the top-window share at the last checkpoint (default 0.08).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window_tolerance: Option<f64>,
    /// Summary JSON files from earlier `simulate` runs; skips simulation.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub summary: Option<Vec<PathBuf>>,
}

merge_fields!(VerifyArgs {
    tolerance,
    degree_kmax,
    degree_tolerance,
    atoms,
    cells,
    cell_top,
    window,
    window_tolerance,
    summary
});

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Builder {
    Degree,
    Fitness,
    Joint,
    Discretization,
}

#[derive(Args, Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UrnArgs {
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub builder: Option<Builder>,
    /// Degree cap for the degree and joint urns (default 5).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    /// Cells of the discretization urn (default 50).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cells: Option<usize>,
    /// Compute the Perron eigenpair of the mean matrix.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub perron: Option<bool>,
}

merge_fields!(UrnArgs {
    builder,
    k,
    cells,
    perron
});

#[derive(Args, Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoupleArgs {
    /// Truncation index (default 5).
    #[arg(long = "I")]
    #[serde(rename = "I", skip_serializing_if = "Option::is_none")]
    pub index: Option<usize>,
}

merge_fields!(CoupleArgs { index });

#[derive(Args, Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanArgs {
    /// Truncation indices or cell counts, comma separated (default 10,100,1000).
    #[arg(long = "I", value_delimiter = ',')]
    #[serde(rename = "I", skip_serializing_if = "Option::is_none")]
    pub indices: Option<Vec<usize>>,
}

merge_fields!(ScanArgs { indices });

#[derive(Args, Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputArgs {
    /// Output root (default $FITPA_OUT, then ./runs).
    #[arg(long = "out", global = true, display_order = 900)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub root: Option<PathBuf>,
    /// Run directory name under the root.
    #[arg(id = "run_name", long = "name", global = true, display_order = 901)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

merge_fields!(OutputArgs { root, name });

impl OutputArgs {
    pub fn root(&self) -> PathBuf {
        self.root
            .clone()
            .or_else(|| std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
    }
}

/// The config file. Every section is optional; unknown keys are errors.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "is_default")]
    pub output: OutputArgs,
    #[serde(default, skip_serializing_if = "is_default")]
    pub model: ModelArgs,
    #[serde(default, skip_serializing_if = "is_default")]
    pub run: RunArgs,
    #[serde(default, skip_serializing_if = "is_default")]
    pub phase: PhaseArgs,
    #[serde(default, skip_serializing_if = "is_default")]
    pub verify: VerifyArgs,
    #[serde(default, skip_serializing_if = "is_default")]
    pub urn: UrnArgs,
    #[serde(default, skip_serializing_if = "is_default")]
    pub couple: CoupleArgs,
    #[serde(default, skip_serializing_if = "is_default")]
    pub scan: ScanArgs,
}

fn is_default<T: Default + PartialEq>(x: &T) -> bool {
    *x == T::default()
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Flags in `self` override values in `file`.
    pub fn over(self, file: Self) -> Self {
        Self {
            output: self.output.merge(file.output),
            model: self.model.merge(file.model),
            run: self.run.merge(file.run),
            phase: self.phase.merge(file.phase),
            verify: self.verify.merge(file.verify),
            urn: self.urn.merge(file.urn),
            couple: self.couple.merge(file.couple),
            scan: self.scan.merge(file.scan),
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }
}
