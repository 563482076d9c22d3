//! Randomized sweeps. Every case reports `margin = rhs - lhs`; a suite passes
//! when the smallest margin is at least `-tolerance`.

use std::time::Instant;

use nlfp_core::convq::{
    apply_nonlocal_derivative, build_weights, solve_relaxation_unchecked, ConvexFn, PowerFn, TimeGrid, ENVELOPE_SLACK,
};
use nlfp_core::entropy::{
    ckp_bound, convex_sobolev_residual, entropy_holder_bound, l1_distance, pointwise_f, relative_entropy,
    EntropyGenerator, SteadyState1D, SweepCase,
};
use nlfp_core::fpsolver::{Field1D, SpatialGrid};
use nlfp_core::kernels::KernelSpec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};

use crate::args::{Suite, VerifyArgs};
use crate::output::{num, write_csv, write_json};
use crate::CliResult;

pub struct Report {
    pub suite: Suite,
    pub tolerance: f64,
    pub cases: Vec<SweepCase>,
    /// Suite-specific figures, e.g. the diagonal gap.
    pub extra: Map<String, Value>,
}

impl Report {
    fn new(suite: Suite, tolerance: f64) -> Self {
        Report { suite, tolerance, cases: Vec::new(), extra: Map::new() }
    }

    fn push(&mut self, case_id: String, lhs: f64, rhs: f64) {
        self.cases.push(SweepCase { case_id, lhs, rhs, margin: rhs - lhs });
    }

    fn push_margin(&mut self, case_id: String, lhs: f64, rhs: f64, margin: f64) {
        self.cases.push(SweepCase { case_id, lhs, rhs, margin });
    }

    pub fn min_margin(&self) -> f64 {
        self.cases.iter().map(|c| c.margin).fold(f64::INFINITY, f64::min)
    }

    pub fn passed(&self) -> bool {
        !self.cases.is_empty() && self.cases.iter().all(|c| c.margin >= -self.tolerance)
    }

    pub fn to_json(&self, seed: u64, runtime: f64) -> Value {
        let mut worst: Vec<&SweepCase> = self.cases.iter().collect();
        worst.sort_by(|a, b| a.margin.total_cmp(&b.margin));
        worst.truncate(5);
        json!({
            "suite": self.suite.name(),
            "seed": seed,
            "cases": self.cases.len(),
            "tolerance": self.tolerance,
            "min_margin": self.min_margin(),
            "pass": self.passed(),
            "worst_cases": worst,
            "details": self.extra,
            "runtime_seconds": runtime,
        })
    }
}

pub fn run(a: &VerifyArgs) -> CliResult<()> {
    let started = Instant::now();
    let report = sweep(a.suite, a.samples, a.seed, a.kernel.as_ref())?;
    let js = report.to_json(a.seed, started.elapsed().as_secs_f64());
    if let Some(dir) = &a.out_dir {
        let stem = format!("verify_{}", a.suite.name());
        write_json(&dir.join(format!("{stem}.json")), &js)?;
        let header: Vec<String> = ["case_id", "lhs", "rhs", "margin"].iter().map(|s| s.to_string()).collect();
        write_csv(
            Some(&dir.join(format!("{stem}.csv"))),
            &header,
            report.cases.iter().map(|c| [c.case_id.clone(), num(c.lhs), num(c.rhs), num(c.margin)]),
        )?;
    }
    println!("{}", serde_json::to_string_pretty(&js).expect("report serializes"));
    Ok(())
}

pub fn sweep(suite: Suite, samples: Option<usize>, seed: u64, kernel: Option<&KernelSpec<f64>>) -> CliResult<Report> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kernels: Vec<KernelSpec<f64>> = match kernel {
        Some(k) => vec![k.clone()],
        None => vec![
            KernelSpec::fractional(0.5)?,
            KernelSpec::tempered(0.5, 1.0)?,
            KernelSpec::multi_term(&[(1.0, 0.3), (1.0, 0.7)])?,
            KernelSpec::DistributedOrder,
        ],
    };
    Ok(match suite {
        Suite::Pointwise => pointwise(&mut rng, samples.unwrap_or(100_000)),
        Suite::Ckp => ckp(&mut rng, samples.unwrap_or(100))?,
        Suite::Sobolev => sobolev(&mut rng, samples.unwrap_or(30))?,
        Suite::Identity => identity(&mut rng, samples.unwrap_or(1000), &kernels)?,
        Suite::Holder => holder(&mut rng, samples.unwrap_or(1000))?,
        Suite::Bounds => bounds(&kernels)?,
    })
}

fn beta(rng: &mut ChaCha8Rng) -> f64 {
    // (1, 2]
    2.0 - rng.gen_range(0.0..1.0)
}

fn pointwise(rng: &mut ChaCha8Rng, n: usize) -> Report {
    let mut r = Report::new(Suite::Pointwise, 1e-12);
    let mut diag = 0.0f64;
    for i in 0..n {
        let b = beta(rng);
        let x: f64 = 10.0 - rng.gen_range(0.0..10.0);
        let y = 10.0 - rng.gen_range(0.0..10.0);
        let g = EntropyGenerator::PowerBeta { beta: b };
        let lhs = x.powf(b - 1.0) * y + (1.0 - b) * x - y + b - 1.0;
        let rhs = g.phi_unchecked(x).max(0.0).powf((b - 1.0) / b) * g.phi_unchecked(y).max(0.0).powf(1.0 / b);
        r.push_margin(format!("p{i}"), lhs, rhs, pointwise_f(b, x, y));
        diag = diag.max(pointwise_f(b, x, x).abs());
    }
    r.extra.insert("max_diagonal_gap".into(), json!(diag));
    r
}

/// Random smooth density `exp(Σ c_j sin(a_j x + b_j)) w(x)`, normalized.
pub fn random_density(rng: &mut ChaCha8Rng, base: &SteadyState1D<f64>) -> Field1D<f64> {
    let terms: Vec<(f64, f64, f64)> = (0..4)
        .map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(0.2..2.0), rng.gen_range(0.0..6.3)))
        .collect();
    let vals: Vec<f64> = base
        .grid
        .centers()
        .iter()
        .zip(&base.values)
        .map(|(x, g)| terms.iter().map(|(c, a, b)| c * (a * x + b).sin()).sum::<f64>().exp() * g)
        .collect();
    let m: f64 = vals.iter().sum::<f64>() * base.grid.h();
    Field1D { grid: base.grid, values: vals.iter().map(|v| v / m).collect() }
}

fn gaussian(cells: usize, half: f64) -> CliResult<SteadyState1D<f64>> {
    let grid = SpatialGrid::new(half, cells)?;
    let v: Vec<f64> = grid.centers().iter().map(|x| 0.5 * x * x).collect();
    Ok(SteadyState1D::from_potential_values(grid, &v)?)
}

fn as_steady(f: &Field1D<f64>) -> CliResult<SteadyState1D<f64>> {
    let v: Vec<f64> = f.values.iter().map(|x| -x.ln()).collect();
    Ok(SteadyState1D::from_potential_values(f.grid, &v)?)
}

fn ckp(rng: &mut ChaCha8Rng, n: usize) -> CliResult<Report> {
    let mut r = Report::new(Suite::Ckp, 1e-8);
    let base = gaussian(241, 8.0)?;
    for i in 0..n {
        let f = random_density(rng, &base);
        let g = as_steady(&random_density(rng, &base))?;
        let d = l1_distance(&f, &g)?;
        for gen in [EntropyGenerator::power(beta(rng))?, EntropyGenerator::Logarithmic] {
            let h = relative_entropy(&gen, &f, &g)?;
            r.push(format!("{i}-{}", gen.label()), d, ckp_bound(&gen, h));
        }
    }
    Ok(r)
}

fn sobolev(rng: &mut ChaCha8Rng, n: usize) -> CliResult<Report> {
    let mut r = Report::new(Suite::Sobolev, 1e-6);
    let st = gaussian(2001, 10.0)?;
    let gens = [EntropyGenerator::Logarithmic, EntropyGenerator::power(1.5)?, EntropyGenerator::power(2.0)?];
    let add = |r: &mut Report, id: String, u: &Field1D<f64>, g: &EntropyGenerator<f64>| -> CliResult<f64> {
        let h = relative_entropy(g, u, &st)?;
        let res = convex_sobolev_residual(g, u, &st, 1.0)?;
        r.push(id, h, h + res);
        Ok(res)
    };
    for i in 0..n {
        let u = random_density(rng, &st);
        for g in &gens {
            add(&mut r, format!("{i}-{}", g.label()), &u, g)?;
        }
    }
    // (1 + 0.3 x) u_∞ is the first Hermite mode: equality up to the grid
    let raw: Vec<f64> = st.grid.centers().iter().zip(&st.values).map(|(x, g)| (1.0 + 0.3 * x) * g).collect();
    let m: f64 = raw.iter().sum::<f64>() * st.grid.h();
    let u = Field1D { grid: st.grid, values: raw.iter().map(|v| v / m).collect() };
    let sat = add(&mut r, "single-mode".into(), &u, &gens[2])?;
    r.extra.insert("single_mode_residual".into(), json!(sat));
    Ok(r)
}

fn identity(rng: &mut ChaCha8Rng, n: usize, kernels: &[KernelSpec<f64>]) -> CliResult<Report> {
    let mut r = Report::new(Suite::Identity, 1e-12);
    let mut worst_fi = 0.0f64;
    for i in 0..n {
        let p = rng.gen_range(1.0..3.0);
        let tau = rng.gen_range(0.1..1.0);
        let prev: f64 = rng.gen_range(0.1..2.0);
        let cur: f64 = rng.gen_range(0.1..2.0);
        let psi = PowerFn(p);
        let dp = psi.deriv(cur);
        let lhs = dp * (cur - prev) / tau;
        let rhs = (psi.value(cur) - psi.value(prev)) / tau + (psi.value(prev) - psi.value(cur) - dp * (prev - cur)) / tau;
        worst_fi = worst_fi.max((lhs - rhs).abs());
        r.push_margin(format!("fi{i}"), lhs, rhs, -(lhs - rhs).abs());
    }
    r.extra.insert("max_identity_residual".into(), json!(worst_fi));
    let grid = TimeGrid::uniform_to(5.0, 60)?;
    let per_kernel = (n / 20).max(1);
    for k in kernels {
        let w = build_weights(k, &grid)?;
        for i in 0..per_kernel {
            let vals: Vec<f64> = (0..60).map(|_| rng.gen_range(0.1..2.0)).collect();
            let base = rng.gen_range(0.1..2.0);
            let psi = PowerFn(rng.gen_range(1.0..3.0));
            let mapped: Vec<f64> = vals.iter().map(|v| psi.value(*v)).collect();
            let mut best = (f64::INFINITY, 0.0, 0.0);
            for m in 1..=vals.len() {
                let rhs = psi.deriv(vals[m - 1]) * apply_nonlocal_derivative(&w, &vals[..m], base)?;
                let lhs = apply_nonlocal_derivative(&w, &mapped[..m], psi.value(base))?;
                if rhs - lhs < best.0 {
                    best = (rhs - lhs, lhs, rhs);
                }
            }
            r.push(format!("convexity-{}-{i}", kernel_tag(k)), best.1, best.2);
        }
    }
    Ok(r)
}

fn holder(rng: &mut ChaCha8Rng, n: usize) -> CliResult<Report> {
    let mut r = Report::new(Suite::Holder, 1e-10);
    let base = gaussian(241, 8.0)?;
    let mut diag = 0.0f64;
    for i in 0..n {
        let b = beta(rng);
        let f1 = random_density(rng, &base);
        let f2 = random_density(rng, &base);
        let g = as_steady(&random_density(rng, &base))?;
        let (lhs, rhs) = entropy_holder_bound(b, &f1, &f2, &g)?;
        r.push(format!("h{i}"), lhs, rhs);
        let (l, rr) = entropy_holder_bound(b, &f1, &f1, &g)?;
        diag = diag.max((l - rr).abs());
    }
    r.extra.insert("max_diagonal_gap".into(), json!(diag));
    Ok(r)
}

fn kernel_tag(k: &KernelSpec<f64>) -> &'static str {
    match k {
        KernelSpec::Fractional { .. } => "fractional",
        KernelSpec::TemperedFractional { .. } => "tempered",
        KernelSpec::MultiTerm { .. } => "multiterm",
        KernelSpec::DistributedOrder => "distributed",
    }
}

fn bounds(kernels: &[KernelSpec<f64>]) -> CliResult<Report> {
    let mut r = Report::new(Suite::Bounds, ENVELOPE_SLACK);
    let grids = [("uniform", TimeGrid::uniform_to(10.0, 1000)?), ("geometric", TimeGrid::geometric_to(1e-4, 1e4, 800)?)];
    for k in kernels {
        for (gname, g) in &grids {
            let w = build_weights(k, g)?;
            for mu in [0.5, 1.0, 2.0] {
                let c = solve_relaxation_unchecked(&w, mu)?;
                for n in 1..c.values.len() {
                    let id = format!("{}/{gname}/mu={mu}/n={n}", kernel_tag(k));
                    r.push(format!("{id}/lower"), c.lower_env[n], c.values[n]);
                    r.push(format!("{id}/upper"), c.values[n], c.upper_env[n]);
                }
            }
        }
    }
    Ok(r)
}
