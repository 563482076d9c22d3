//! Command-line flags and the small string grammars used by them.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nlfp_core::convq::{Rule, TimeGrid};
use nlfp_core::fpsolver::{InitialCondition, MixtureComponent};
use nlfp_core::kernels::KernelSpec;

#[derive(Debug, Parser)]
#[command(name = "nlfp", version, about = "Entropy decay for Fokker-Planck equations with memory")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Relaxation function s_mu with its envelopes.
    Relax(RelaxArgs),
    /// Run an experiment described by a JSON config.
    Simulate(SimulateArgs),
    /// Randomized inequality and identity sweeps.
    Verify(VerifyArgs),
    /// Per-mode decay table for the Ornstein-Uhlenbeck oracle.
    Spectral(SpectralArgs),
}

#[derive(Debug, Clone, Args)]
pub struct TimeArgs {
    /// Final time.
    #[arg(long, default_value_t = 10.0)]
    pub t_max: f64,
    /// Number of time steps.
    #[arg(long, default_value_t = 1000)]
    pub steps: usize,
    /// `uniform` or `geometric:FIRST_STEP`.
    #[arg(long, default_value = "uniform", value_parser = parse_grid_flag)]
    pub grid: GridFlag,
}

impl TimeArgs {
    pub fn grid(&self) -> nlfp_core::Result<TimeGrid<f64>> {
        match self.grid {
            GridFlag::Uniform => TimeGrid::uniform_to(self.t_max, self.steps),
            GridFlag::Geometric { first_step } => TimeGrid::geometric_to(first_step, self.t_max, self.steps),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct RelaxArgs {
    /// `frac:A`, `tempered:A,GAMMA`, `multiterm:D1,A1,D2,A2,...` or `distributed`.
    #[arg(long, value_parser = parse_kernel)]
    pub kernel: KernelSpec<f64>,
    #[arg(long)]
    pub mu: f64,
    #[command(flatten)]
    pub time: TimeArgs,
    /// `rectangle` or `corrected[:TERMS]`.
    #[arg(long, default_value = "rectangle", value_parser = parse_rule)]
    pub quadrature: Rule,
    /// CSV destination; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Fit window `A,B`.
    #[arg(long, value_parser = parse_window)]
    pub fit_window: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Experiment config (JSON).
    pub config: PathBuf,
    /// Overrides `output_dir` from the config.
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Pointwise,
    Ckp,
    Sobolev,
    Identity,
    Holder,
    Bounds,
}

impl Suite {
    pub fn name(self) -> &'static str {
        match self {
            Suite::Pointwise => "pointwise",
            Suite::Ckp => "ckp",
            Suite::Sobolev => "sobolev",
            Suite::Identity => "identity",
            Suite::Holder => "holder",
            Suite::Bounds => "bounds",
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    #[arg(value_enum)]
    pub suite: Suite,
    /// Number of random cases (suite default when absent).
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Kernel for `bounds` and `identity`; all four families when absent.
    #[arg(long, value_parser = parse_kernel)]
    pub kernel: Option<KernelSpec<f64>>,
    /// Directory for `verify_<suite>.json` and `verify_<suite>.csv`.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SpectralArgs {
    #[arg(long, value_parser = parse_kernel)]
    pub kernel: KernelSpec<f64>,
    /// Basis size K (modes 0..=K).
    #[arg(long, default_value_t = 8)]
    pub modes: usize,
    /// `hermite:K,AMPLITUDE` or `mixture:W,MEAN,STD[;W,MEAN,STD...]`.
    #[arg(long, default_value = "hermite:1,0.5", value_parser = parse_u0)]
    pub u0: InitialCondition<f64>,
    #[command(flatten)]
    pub time: TimeArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GridFlag {
    Uniform,
    Geometric { first_step: f64 },
}

fn numbers(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|_| format!("`{p}` is not a number")))
        .collect()
}

pub fn parse_kernel(s: &str) -> Result<KernelSpec<f64>, String> {
    let (name, rest) = s.split_once(':').unwrap_or((s, ""));
    let spec = match name {
        "frac" | "fractional" => match numbers(rest)?.as_slice() {
            [a] => KernelSpec::fractional(*a),
            _ => return Err("expected frac:ALPHA".into()),
        },
        "tempered" => match numbers(rest)?.as_slice() {
            [a, g] => KernelSpec::tempered(*a, *g),
            _ => return Err("expected tempered:ALPHA,GAMMA".into()),
        },
        "multiterm" => {
            let v = numbers(rest)?;
            if v.is_empty() || v.len() % 2 != 0 {
                return Err("expected multiterm:DELTA1,ALPHA1,DELTA2,ALPHA2,...".into());
            }
            let pairs: Vec<(f64, f64)> = v.chunks(2).map(|c| (c[0], c[1])).collect();
            KernelSpec::multi_term(&pairs)
        }
        "distributed" if rest.is_empty() => Ok(KernelSpec::DistributedOrder),
        _ => return Err(format!("unknown kernel `{s}`")),
    };
    spec.map_err(|e| e.to_string())
}

pub fn parse_grid_flag(s: &str) -> Result<GridFlag, String> {
    if s == "uniform" {
        return Ok(GridFlag::Uniform);
    }
    match s.strip_prefix("geometric:") {
        Some(v) => {
            let first_step: f64 = v.parse().map_err(|_| format!("`{v}` is not a number"))?;
            if !(first_step > 0.0) {
                return Err("first step must be positive".into());
            }
            Ok(GridFlag::Geometric { first_step })
        }
        None => Err(format!("expected `uniform` or `geometric:FIRST`, got `{s}`")),
    }
}

pub fn parse_rule(s: &str) -> Result<Rule, String> {
    match s.split_once(':') {
        None if s == "rectangle" => Ok(Rule::Rectangle),
        None if s == "corrected" => Ok(Rule::CorrectedTrapezoid { terms: 3 }),
        Some(("corrected", n)) => n
            .parse()
            .map(|terms| Rule::CorrectedTrapezoid { terms })
            .map_err(|_| format!("`{n}` is not a term count")),
        _ => Err(format!("expected `rectangle` or `corrected[:TERMS]`, got `{s}`")),
    }
}

pub fn parse_window(s: &str) -> Result<(f64, f64), String> {
    match numbers(s)?.as_slice() {
        [a, b] if a < b => Ok((*a, *b)),
        _ => Err("expected A,B with A < B".into()),
    }
}

pub fn parse_u0(s: &str) -> Result<InitialCondition<f64>, String> {
    if s == "steady" {
        return Ok(InitialCondition::Steady);
    }
    if let Some(rest) = s.strip_prefix("hermite:") {
        let (k, a) = rest.split_once(',').ok_or("expected hermite:K,AMPLITUDE")?;
        let k: usize = k.trim().parse().map_err(|_| format!("`{k}` is not a mode index"))?;
        let amplitude: f64 = a.trim().parse().map_err(|_| format!("`{a}` is not a number"))?;
        return Ok(InitialCondition::SingleHermite { k, amplitude });
    }
    if let Some(rest) = s.strip_prefix("mixture:") {
        let components = rest
            .split(';')
            .map(|c| match numbers(c)?.as_slice() {
                [weight, mean, std] => Ok(MixtureComponent { weight: *weight, mean: *mean, std: *std }),
                _ => Err("each mixture component is W,MEAN,STD".to_string()),
            })
            .collect::<Result<Vec<_>, String>>()?;
        let ic = InitialCondition::GaussianMixture { components };
        ic.validate().map_err(|e| e.to_string())?;
        return Ok(ic);
    }
    Err(format!("unknown initial datum `{s}`"))
}
