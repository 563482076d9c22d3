use std::fs;
use std::path::Path;
use std::time::Instant;

use nlfp_core::fpsolver::{fit_decay_rate, run_experiment, Scheme, SimResult};
use nlfp_core::kernels::{DecayClass, KernelSpec};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::args::SimulateArgs;
use crate::config::ExperimentConfig;
use crate::output::{num, write_csv, write_json};
use crate::relax::default_window;
use crate::{CliError, CliResult};

pub const CSV_NAME: &str = "simulation.csv";
pub const SUMMARY_NAME: &str = "summary.json";

pub fn run(a: &SimulateArgs) -> CliResult<()> {
    let started = Instant::now();
    let bytes =
        fs::read(&a.config).map_err(|e| CliError::usage(format!("{}: {e}", a.config.display())))?;
    let text = String::from_utf8(bytes.clone()).map_err(|_| CliError::usage("config is not UTF-8"))?;
    let cfg = ExperimentConfig::parse(&text)?;
    let base = a.config.parent().unwrap_or(Path::new("."));
    let exp = cfg.experiment(base)?;
    let out_dir = match &a.output_dir {
        Some(d) => d.clone(),
        None => cfg.resolve(base, &cfg.output_dir),
    };

    let res = run_experiment(&exp)?;

    let csv_path = out_dir.join(CSV_NAME);
    write_csv(
        Some(&csv_path),
        &res.csv_header(),
        res.csv_rows().into_iter().map(|r| r.into_iter().map(num)),
    )?;

    let class = match &exp.scheme {
        Scheme::Nonlocal { kernel } | Scheme::Spectral { kernel, .. } => kernel.decay_class(),
        Scheme::BackwardDifference => DecayClass::Exponential,
    };
    let window = cfg.fit_window.unwrap_or_else(|| default_window(&class, exp.time.t_max()));
    let summary = json!({
        "config_hash": hex(&Sha256::digest(&bytes)),
        "seed": cfg.seed,
        "fitted_rates": fitted_rates(&res, &class, window, matches!(exp.scheme, Scheme::BackwardDifference)),
        "envelope_margins": envelope_margins(&res),
        "invariants": invariants(&res, &exp.scheme),
        "violations": serde_json::to_value(&res.violations).expect("violations serialize"),
        "runtime_seconds": started.elapsed().as_secs_f64(),
    });
    let json_path = out_dir.join(SUMMARY_NAME);
    write_json(&json_path, &summary)?;
    println!(
        "wrote {} and {}; {} envelope or invariant violations",
        csv_path.display(),
        json_path.display(),
        res.violations.len()
    );
    Ok(())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn fitted_rates(res: &SimResult<f64>, class: &DecayClass<f64>, window: (f64, f64), per_step: bool) -> Value {
    let mut m = Map::new();
    for (g, h) in res.generators.iter().zip(&res.entropy_series) {
        let series: Vec<(f64, f64)> = res
            .times
            .iter()
            .copied()
            .zip(h.iter().copied())
            .filter(|(_, v)| *v > 0.0)
            .collect();
        let mut entry = match fit_decay_rate(&series, class, window) {
            Ok(f) => json!({
                "class": class_label(class),
                "window": [window.0, window.1],
                "rate": f.rate,
                "r_squared": f.r_squared,
                "points": f.points,
            }),
            Err(e) => json!({ "class": class_label(class), "window": [window.0, window.1], "error": e.to_string() }),
        };
        if per_step {
            let worst = h
                .windows(2)
                .filter(|w| w[0] > 1e-300)
                .map(|w| w[1] / w[0])
                .fold(f64::NEG_INFINITY, f64::max);
            entry["max_step_ratio"] = if worst.is_finite() { json!(worst) } else { Value::Null };
        }
        m.insert(g.label(), entry);
    }
    Value::Object(m)
}

fn class_label(c: &DecayClass<f64>) -> &'static str {
    match c {
        DecayClass::Algebraic { .. } => "algebraic",
        DecayClass::Exponential => "exponential",
        DecayClass::Logarithmic => "logarithmic",
    }
}

fn envelope_margins(res: &SimResult<f64>) -> Value {
    let mut m = Map::new();
    for (g, v) in res.generators.iter().zip(res.envelope_margins()) {
        m.insert(g.label(), if v.is_finite() { json!(v) } else { Value::Null });
    }
    Value::Object(m)
}

/// `true` when the invariant held at every node.
fn invariants(res: &SimResult<f64>, scheme: &Scheme<f64>) -> Value {
    let mut names: Vec<&str> = match scheme {
        Scheme::BackwardDifference => vec!["discrete_a", "discrete_b"],
        _ => vec!["part_a", "part_b"],
    };
    names.extend(["monotone", "ckp"]);
    let fractional = matches!(
        scheme,
        Scheme::Nonlocal { kernel: KernelSpec::Fractional { .. } } | Scheme::Spectral { kernel: KernelSpec::Fractional { .. }, .. }
    );
    if fractional {
        names.extend(["timefrac_a", "timefrac_b"]);
    }
    if !matches!(scheme, Scheme::Spectral { .. }) {
        names.push("mass");
        if !res.signed {
            names.push("positivity");
        }
    }
    let mut m = Map::new();
    for n in names {
        m.insert(n.to_string(), json!(!res.violations.iter().any(|v| v.invariant == n)));
    }
    Value::Object(m)
}
