use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn nlfp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nlfp")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn csv_column(text: &str, name: &str) -> Vec<f64> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let i = header.iter().position(|h| *h == name).unwrap_or_else(|| panic!("no column {name}"));
    lines.map(|l| l.split(',').nth(i).unwrap().parse().unwrap()).collect()
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

fn summary(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

const OU_FRAC: &str = r#"{
  "kernel": {"type": "fractional", "alpha": 0.5},
  "scheme": "nonlocal",
  "potential": {"type": "quadratic", "m": 1.0},
  "generators": [{"type": "power", "beta": 2.0}, {"type": "log"}],
  "grid": {"L": 10.0, "N": 200, "time": {"kind": "uniform", "step": 0.05, "steps": 2000}},
  "u0": {"mode": "single_hermite", "k": 1, "amplitude": 0.5},
  "seed": 3,
  "output_dir": "run"
}"#;

#[test]
fn relax_fractional_matches_mittag_leffler() {
    let o = nlfp(&["relax", "--kernel", "frac:0.5", "--mu", "1", "--t-max", "100", "--steps", "2000"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.starts_with("t,s_mu,lower_env,upper_env\n"));
    let t = csv_column(&text, "t");
    let s = csv_column(&text, "s_mu");
    let i = t.iter().position(|x| (*x - 1.0).abs() < 1e-12).unwrap();
    // E_{1/2}(-1) = e erfc(1)
    assert!((s[i] - 0.42758357615580705).abs() < 5e-3, "s(1) = {}", s[i]);

    let o = nlfp(&[
        "relax", "--kernel", "frac:0.5", "--mu", "1", "--t-max", "100", "--steps", "2000", "--quadrature", "corrected",
    ]);
    let s = csv_column(&stdout(&o), "s_mu");
    assert!((s[i] - 0.42758357615580705).abs() < 1e-4, "s(1) = {}", s[i]);
}

#[test]
fn relax_without_relaxation_is_one() {
    let o = nlfp(&["relax", "--kernel", "frac:0.5", "--mu", "0", "--t-max", "5", "--steps", "50"]);
    assert!(o.status.success());
    let s = csv_column(&stdout(&o), "s_mu");
    assert_eq!(s.len(), 51);
    assert!(s.iter().all(|v| *v == 1.0));
}

#[test]
fn relax_distributed_reports_logarithmic_constant() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d.csv");
    let o = nlfp(&[
        "relax", "--kernel", "distributed", "--mu", "1", "--t-max", "1e6", "--steps", "2000", "--grid",
        "geometric:1e-6", "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let report = stdout(&o);
    assert!(report.contains("logarithmic"), "{report}");
    let c: f64 = report.split("]: ").nth(1).unwrap().split_whitespace().next().unwrap().parse().unwrap();
    assert!(c > 0.5 && c < 2.0, "c = {c}");
    assert!(fs::read_to_string(out).unwrap().starts_with("t,s_mu,"));
}

#[test]
fn relax_rejects_bad_flags() {
    for args in [
        &["relax", "--kernel", "frac:1.5", "--mu", "1"][..],
        &["relax", "--kernel", "bogus", "--mu", "1"],
        &["relax", "--kernel", "frac:0.5", "--mu", "-1"],
        &["relax", "--kernel", "frac:0.5", "--mu", "1", "--grid", "geometric:0"],
        &["relax", "--kernel", "frac:0.5"],
    ] {
        assert_eq!(nlfp(args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn simulate_ou_fractional_rate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "ou.json", OU_FRAC);
    let o = nlfp(&["simulate", &cfg]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let run = dir.path().join("run");
    let s = summary(&run);
    for key in ["config_hash", "fitted_rates", "envelope_margins", "violations", "runtime_seconds"] {
        assert!(s.get(key).is_some(), "missing {key}");
    }
    let rate = s["fitted_rates"]["H_beta2"]["rate"].as_f64().unwrap();
    assert!((-1.15..=-0.85).contains(&rate), "rate {rate}");
    assert_eq!(s["violations"].as_array().unwrap().len(), 0);
    assert_eq!(s["seed"], 3);
    let head = fs::read_to_string(run.join("simulation.csv")).unwrap();
    assert!(head.starts_with("t,H_beta2,H_log,l1,envelopeA,envelopeB_2,mass_err\n"));
}

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "ou.json", OU_FRAC);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(nlfp(&["simulate", &cfg, "--output-dir", a.to_str().unwrap()]).status.success());
    assert!(nlfp(&["simulate", &cfg, "--output-dir", b.to_str().unwrap()]).status.success());
    let ca = fs::read(a.join("simulation.csv")).unwrap();
    assert_eq!(ca, fs::read(b.join("simulation.csv")).unwrap());
    assert_eq!(summary(&a)["config_hash"], summary(&b)["config_hash"]);
}

#[test]
fn simulate_backward_difference_step_factor() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "bd.json",
        r#"{
          "scheme": "backward_difference",
          "potential": {"type": "quadratic", "m": 1.0},
          "generators": [{"type": "power", "beta": 2.0}],
          "grid": {"L": 10.0, "N": 800, "time": {"kind": "uniform", "step": 0.1, "steps": 40}},
          "u0": {"mode": "single_hermite", "k": 1, "amplitude": 0.5},
          "output_dir": "bd"
        }"#,
    );
    assert!(nlfp(&["simulate", &cfg]).status.success());
    let s = summary(&dir.path().join("bd"));
    let ratio = s["fitted_rates"]["H_beta2"]["max_step_ratio"].as_f64().unwrap();
    assert!(ratio <= 0.8265, "ratio {ratio}");
    assert!(s["invariants"]["discrete_b"].as_bool().unwrap());
}

#[test]
fn simulate_steady_has_zero_entropy() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "steady.json",
        r#"{
          "kernel": {"type": "tempered_fractional", "alpha": 0.5, "gamma_rate": 1.0},
          "scheme": "nonlocal",
          "potential": {"type": "quadratic", "m": 2.0},
          "generators": [{"type": "power", "beta": 1.5}, {"type": "power", "beta": 2.0}, {"type": "log"}],
          "grid": {"L": 8.0, "N": 160, "time": {"kind": "uniform", "step": 0.05, "steps": 200}},
          "u0": {"mode": "steady"},
          "output_dir": "steady"
        }"#,
    );
    assert!(nlfp(&["simulate", &cfg]).status.success());
    let run = dir.path().join("steady");
    let text = fs::read_to_string(run.join("simulation.csv")).unwrap();
    for col in ["H_beta1.5", "H_beta2", "H_log"] {
        assert!(csv_column(&text, col).iter().all(|h| h.abs() <= 1e-12), "{col}");
    }
    assert_eq!(summary(&run)["violations"].as_array().unwrap().len(), 0);
}

#[test]
fn simulate_reads_initial_table() {
    let dir = tempfile::tempdir().unwrap();
    let cells = 80;
    let h = 16.0 / cells as f64;
    let vals: Vec<String> = (0..cells)
        .map(|i| {
            let x = -8.0 + (i as f64 + 0.5) * h;
            format!("{}", (-(x - 1.0) * (x - 1.0) / 2.0).exp())
        })
        .collect();
    fs::write(dir.path().join("u0.txt"), format!("# shifted gaussian\n{}\n", vals.join("\n"))).unwrap();
    let cfg = write_config(
        dir.path(),
        "table.json",
        r#"{
          "kernel": {"type": "distributed_order"},
          "scheme": "nonlocal",
          "potential": {"type": "quadratic", "m": 1.0},
          "generators": [{"type": "log"}],
          "grid": {"L": 8.0, "N": 80, "time": {"kind": "uniform", "step": 0.1, "steps": 50}},
          "u0": {"mode": "file", "path": "u0.txt"},
          "output_dir": "table"
        }"#,
    );
    let o = nlfp(&["simulate", &cfg]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let h = csv_column(&fs::read_to_string(dir.path().join("table/simulation.csv")).unwrap(), "H_log");
    assert!(h[0] > 0.1 && h[50] < h[0]);
}

#[test]
fn simulate_config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let extra = OU_FRAC.replacen("\"seed\": 3,", "\"seed\": 3, \"colour\": 1,", 1);
    let bad_key = write_config(dir.path(), "extra.json", &extra);
    let o = nlfp(&["simulate", &bad_key]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("colour"));

    let missing_u0 = OU_FRAC.replacen(
        r#"{"mode": "single_hermite", "k": 1, "amplitude": 0.5}"#,
        r#"{"mode": "file", "path": "absent.txt"}"#,
        1,
    );
    let cfg = write_config(dir.path(), "missing.json", &missing_u0);
    assert_eq!(nlfp(&["simulate", &cfg]).status.code(), Some(2));

    let absent = dir.path().join("nope.json");
    assert_eq!(nlfp(&["simulate", absent.to_str().unwrap()]).status.code(), Some(2));

    let bd_kernel = OU_FRAC.replacen("\"nonlocal\"", "\"backward_difference\"", 1);
    let cfg = write_config(dir.path(), "bdk.json", &bd_kernel);
    assert_eq!(nlfp(&["simulate", &cfg]).status.code(), Some(2));
}

fn verify(args: &[&str]) -> Value {
    let mut full = vec!["verify"];
    full.extend_from_slice(args);
    let o = nlfp(&full);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_str(&stdout(&o)).unwrap()
}

#[test]
fn verify_pointwise_sweep() {
    let r = verify(&["pointwise", "--samples", "100000", "--seed", "7"]);
    assert_eq!(r["cases"], 100000);
    assert!(r["min_margin"].as_f64().unwrap() >= -1e-12);
    assert!(r["details"]["max_diagonal_gap"].as_f64().unwrap() <= 1e-12);
    assert_eq!(r["pass"], true);
}

#[test]
fn verify_identity_sweep() {
    let r = verify(&["identity"]);
    assert!(r["details"]["max_identity_residual"].as_f64().unwrap() <= 1e-12);
    assert!(r["min_margin"].as_f64().unwrap() >= -1e-12);
    assert_eq!(r["pass"], true);
}

#[test]
fn verify_bounds_multiterm() {
    let r = verify(&["bounds", "--kernel", "multiterm:1,0.3,1,0.7"]);
    assert_eq!(r["pass"], true);
    assert!(r["min_margin"].as_f64().unwrap() >= -1e-10);
}

#[test]
fn verify_small_suites_pass_and_write_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    for suite in ["ckp", "holder", "sobolev"] {
        let r = verify(&[suite, "--samples", "10", "--seed", "2", "--out-dir", d]);
        assert_eq!(r["pass"], true, "{suite}");
        assert!(dir.path().join(format!("verify_{suite}.json")).exists());
        let csv = fs::read_to_string(dir.path().join(format!("verify_{suite}.csv"))).unwrap();
        assert!(csv.starts_with("case_id,lhs,rhs,margin\n"));
    }
}

#[test]
fn verify_same_seed_same_report() {
    let a = verify(&["holder", "--samples", "20", "--seed", "11"]);
    let b = verify(&["holder", "--samples", "20", "--seed", "11"]);
    assert_eq!(a["min_margin"], b["min_margin"]);
    assert_eq!(a["worst_cases"], b["worst_cases"]);
}

#[test]
fn verify_unknown_suite_exit_2() {
    assert_eq!(nlfp(&["verify", "nope"]).status.code(), Some(2));
}

#[test]
fn spectral_table() {
    let o = nlfp(&["spectral", "--kernel", "frac:0.5", "--modes", "4", "--t-max", "1", "--steps", "10"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.starts_with("t,k,c_k,s_lambda_k\n"));
    assert_eq!(text.lines().count(), 1 + 11 * 5);
    let c = csv_column(&text, "c_k");
    assert!((c[1] - 0.5).abs() < 1e-12);
    assert!(c[2].abs() < 1e-12);

    let o = nlfp(&["spectral", "--kernel", "frac:0.5", "--u0", "hermite:9,0.1", "--modes", "4"]);
    assert_eq!(o.status.code(), Some(2));
}
