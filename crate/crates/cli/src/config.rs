//! Experiment configuration file.

use std::fs;
use std::path::{Path, PathBuf};

use nlfp_core::convq::TimeGrid;
use nlfp_core::entropy::EntropyGenerator;
use nlfp_core::fpsolver::{Experiment, InitialCondition, MixtureComponent, Potential1D, Scheme, SpatialGrid};
use nlfp_core::kernels::KernelSpec;
use serde::{Deserialize, Serialize};

use crate::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeName {
    Nonlocal,
    BackwardDifference,
    Spectral,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialConfig {
    /// `V(x) = m x²/2`.
    Quadratic { m: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Half width of the spatial domain `[-L, L]`.
    #[serde(rename = "L")]
    pub half_width: f64,
    /// Number of cells.
    #[serde(rename = "N")]
    pub cells: usize,
    pub time: TimeGrid<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum U0Config {
    SingleHermite { k: usize, amplitude: f64 },
    GaussianMixture { components: Vec<MixtureComponent<f64>> },
    /// Cell values, whitespace or comma separated; `#` starts a comment.
    File { path: PathBuf },
    Steady,
}

fn default_slack() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub kernel: Option<KernelSpec<f64>>,
    pub scheme: SchemeName,
    /// Basis size for the spectral scheme.
    #[serde(default)]
    pub modes: Option<usize>,
    pub potential: PotentialConfig,
    pub generators: Vec<EntropyGenerator<f64>>,
    pub grid: GridConfig,
    pub u0: U0Config,
    #[serde(default)]
    pub seed: u64,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub allow_signed: bool,
    #[serde(default = "default_slack")]
    pub envelope_slack: f64,
    #[serde(default)]
    pub fit_window: Option<(f64, f64)>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::usage(format!("config: {e}")))
    }

    /// Relative paths are resolved against `base`, the directory of the config file.
    pub fn resolve(&self, base: &Path, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    }

    pub fn experiment(&self, base: &Path) -> CliResult<Experiment<f64>> {
        let scheme = match (self.scheme, &self.kernel) {
            (SchemeName::Nonlocal, Some(k)) => Scheme::Nonlocal { kernel: k.clone() },
            (SchemeName::Spectral, Some(k)) => Scheme::Spectral {
                kernel: k.clone(),
                modes: self.modes.unwrap_or(40),
            },
            (SchemeName::BackwardDifference, None) => Scheme::BackwardDifference,
            (SchemeName::BackwardDifference, Some(_)) => {
                return Err(CliError::usage("backward_difference takes no kernel"));
            }
            (_, None) => return Err(CliError::usage("this scheme needs a kernel")),
        };
        if self.modes.is_some() && self.scheme != SchemeName::Spectral {
            return Err(CliError::usage("modes is only used by the spectral scheme"));
        }
        if !(self.envelope_slack >= 0.0) {
            return Err(CliError::usage("envelope_slack must be nonnegative"));
        }
        let potential = match self.potential {
            PotentialConfig::Quadratic { m } => Potential1D::quadratic(m)?,
        };
        let initial = match &self.u0 {
            U0Config::SingleHermite { k, amplitude } => InitialCondition::SingleHermite { k: *k, amplitude: *amplitude },
            U0Config::GaussianMixture { components } => InitialCondition::GaussianMixture {
                components: components.clone(),
            },
            U0Config::Steady => InitialCondition::Steady,
            U0Config::File { path } => InitialCondition::Table {
                values: read_table(&self.resolve(base, path))?,
            },
        };
        Ok(Experiment {
            scheme,
            potential,
            generators: self.generators.clone(),
            space: SpatialGrid::new(self.grid.half_width, self.grid.cells)?,
            time: self.grid.time.clone(),
            initial,
            allow_signed: self.allow_signed,
            envelope_slack: self.envelope_slack,
        })
    }
}

pub fn read_table(path: &Path) -> CliResult<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for line in text.lines() {
        let line = line.split('#').next().unwrap_or("");
        for tok in line.split(|c: char| c.is_whitespace() || c == ',').filter(|t| !t.is_empty()) {
            let v: f64 = tok
                .parse()
                .map_err(|_| CliError::usage(format!("{}: `{tok}` is not a number", path.display())))?;
            out.push(v);
        }
    }
    Ok(out)
}
