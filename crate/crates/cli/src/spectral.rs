use nlfp_core::convq::build_weights;
use nlfp_core::fpsolver::InitialCondition;
use nlfp_core::spectral::{self as sp, OUModel};

use crate::args::SpectralArgs;
use crate::output::{num, write_csv};
use crate::{CliError, CliResult};

/// `u_0/u_∞` at the Gauss-Hermite nodes of the model.
pub fn node_values(u0: &InitialCondition<f64>, model: &OUModel<f64>) -> CliResult<Vec<f64>> {
    let xs = model.nodes();
    Ok(match u0 {
        InitialCondition::SingleHermite { k, amplitude } => {
            if *k > model.modes() {
                return Err(CliError::usage("Hermite index exceeds the basis size"));
            }
            xs.iter().map(|x| 1.0 + amplitude * sp::hermite_phi(*k, *x)).collect()
        }
        InitialCondition::GaussianMixture { components } => {
            if components.iter().any(|c| c.std >= std::f64::consts::SQRT_2) {
                return Err(CliError::usage("mixture components need std < sqrt(2)"));
            }
            let s2pi = (2.0 * std::f64::consts::PI).sqrt();
            xs.iter()
                .map(|x| InitialCondition::mixture_density(components, *x) / ((-x * x / 2.0).exp() / s2pi))
                .collect()
        }
        InitialCondition::Steady => vec![1.0; xs.len()],
        InitialCondition::Table { .. } => return Err(CliError::usage("tabulated data cannot be projected")),
    })
}

pub fn run(a: &SpectralArgs) -> CliResult<()> {
    let model = OUModel::new(a.modes)?;
    let coeffs = sp::project(&node_values(&a.u0, &model)?, &model)?;
    let w = build_weights(&a.kernel, &a.time.grid()?)?;
    let rows = sp::mode_rows(&w, &coeffs)?;
    let header: Vec<String> = ["t", "k", "c_k", "s_lambda_k"].iter().map(|s| s.to_string()).collect();
    write_csv(
        a.out.as_deref(),
        &header,
        rows.into_iter().map(|(t, k, c, s)| [num(t), k.to_string(), num(c), num(s)]),
    )
}
