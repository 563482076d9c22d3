//! Front end for `nlfp-core`: relaxation curves, simulations, inequality
//! sweeps and spectral mode tables, written as CSV and JSON.

pub mod args;
pub mod config;
pub mod output;
pub mod relax;
pub mod simulate;
pub mod spectral;
pub mod verify;

use std::fmt;

/// Failure of a subcommand; [`CliError::exit_code`] maps it to the process status.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, bad configuration, missing input files.
    Usage(String),
    /// The numerics failed (accuracy target, singular solve, I/O on output).
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Numerical(_) => 1,
        }
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<nlfp_core::Error> for CliError {
    fn from(e: nlfp_core::Error) -> Self {
        use nlfp_core::Error as E;
        match e {
            E::Domain(_) | E::Usage(_) | E::Construction(_) => CliError::Usage(e.to_string()),
            E::Accuracy { .. } | E::EnvelopeViolation { .. } | E::Numerical(_) => CliError::Numerical(e.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub(crate) fn io_err(path: &std::path::Path, e: impl fmt::Display) -> CliError {
    CliError::Numerical(format!("{}: {e}", path.display()))
}

/// Runs a parsed command line.
pub fn run(cli: args::Cli) -> CliResult<()> {
    match cli.command {
        args::Command::Relax(a) => relax::run(&a),
        args::Command::Simulate(a) => simulate::run(&a),
        args::Command::Verify(a) => verify::run(&a),
        args::Command::Spectral(a) => spectral::run(&a),
    }
}
