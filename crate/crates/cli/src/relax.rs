use nlfp_core::convq::{build_weights_with, solve_relaxation};
use nlfp_core::fpsolver::fit_decay_rate;
use nlfp_core::kernels::DecayClass;

use crate::args::RelaxArgs;
use crate::output::{num, write_csv};
use crate::{CliError, CliResult};

/// Default fit window: the last two decades, or `[√T, T]` for logarithmic decay.
pub fn default_window(class: &DecayClass<f64>, t_max: f64) -> (f64, f64) {
    match class {
        DecayClass::Logarithmic => (t_max.sqrt().max(std::f64::consts::E), t_max),
        _ => (t_max / 100.0, t_max),
    }
}

pub fn class_name(class: &DecayClass<f64>) -> String {
    match class {
        DecayClass::Algebraic { exponent } => format!("algebraic (exponent {exponent})"),
        DecayClass::Exponential => "exponential".into(),
        DecayClass::Logarithmic => "logarithmic".into(),
    }
}

pub fn run(a: &RelaxArgs) -> CliResult<()> {
    if !(a.mu >= 0.0 && a.mu.is_finite()) {
        return Err(CliError::usage("--mu must be a nonnegative number"));
    }
    let grid = a.time.grid()?;
    let w = build_weights_with(&a.kernel, &grid, a.quadrature)?;
    let curve = solve_relaxation(&w, a.mu)?;
    let header: Vec<String> = ["t", "s_mu", "lower_env", "upper_env"].iter().map(|s| s.to_string()).collect();
    write_csv(a.out.as_deref(), &header, curve.rows().map(|r| r.map(num)))?;

    let class = a.kernel.decay_class();
    let window = a.fit_window.unwrap_or_else(|| default_window(&class, grid.t_max()));
    let report = match fit_decay_rate(&curve.series(), &class, window) {
        Ok(f) => {
            let what = if matches!(class, DecayClass::Logarithmic) { "constant c in s = c/log t" } else { "rate" };
            format!(
                "decay class: {}; fitted {what} on [{}, {}]: {} (R^2 {:.6}, {} points)",
                class_name(&class),
                num(window.0),
                num(window.1),
                num(f.rate),
                f.r_squared,
                f.points
            )
        }
        // an explicit window that does not fit is the caller's mistake
        Err(e) if a.fit_window.is_some() => return Err(e.into()),
        Err(e) => format!("decay class: {}; no fit: {e}", class_name(&class)),
    };
    if a.out.is_some() {
        println!("{report}");
    } else {
        eprintln!("{report}");
    }
    Ok(())
}
