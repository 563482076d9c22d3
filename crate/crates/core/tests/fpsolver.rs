use nlfp_core::convq::{build_weights, TimeGrid};
use nlfp_core::entropy::{relative_entropy, EntropyGenerator, SteadyState1D};
use nlfp_core::fpsolver::{
    build_spatial_operator, fit_decay_rate, run_experiment, step_backward_difference, step_nonlocal, Experiment, Field1D,
    InitialCondition, MixtureComponent, Potential1D, Scheme, SpatialGrid, SpatialOperator,
};
use nlfp_core::kernels::{DecayClass, KernelSpec};
use nlfp_core::specfun::{mittag_leffler, MLSeriesPolicy};
use nlfp_core::Error;

fn ou(cells: usize) -> (SpatialGrid<f64>, Potential1D<f64>, SteadyState1D<f64>, SpatialOperator<f64>) {
    let grid = SpatialGrid::new(8.0, cells).unwrap();
    let pot = Potential1D::quadratic(1.0).unwrap();
    let st = SteadyState1D::from_potential_values(grid, &pot.values_on(&grid).unwrap()).unwrap();
    let op = build_spatial_operator(&pot, &grid).unwrap();
    (grid, pot, st, op)
}

fn experiment(scheme: Scheme<f64>, cells: usize, time: TimeGrid<f64>, initial: InitialCondition<f64>) -> Experiment<f64> {
    Experiment {
        scheme,
        potential: Potential1D::quadratic(1.0).unwrap(),
        generators: vec![EntropyGenerator::power(2.0).unwrap()],
        space: SpatialGrid::new(8.0, cells).unwrap(),
        time,
        initial,
        allow_signed: true,
        envelope_slack: 0.05,
    }
}

fn s1_exact(alpha: f64, t: f64) -> f64 {
    mittag_leffler(alpha, -t.powf(alpha), &MLSeriesPolicy::default()).unwrap()
}

#[test]
fn gibbs_state_is_in_the_kernel() {
    let (_, _, st, op) = ou(400);
    let r = op.apply(&st.values);
    let scale = st.values.iter().cloned().fold(0.0, f64::max);
    assert!(r.iter().all(|x| x.abs() <= 1e-12 * scale / (16.0 / 400.0f64).powi(2)));
    assert!(op.column_sums().iter().all(|c| c.abs() <= 1e-14 * op.diag[200].abs()));
    assert!((st.mass() - 1.0).abs() < 1e-14);
}

#[test]
fn flat_potential_gives_laplacian() {
    let grid = SpatialGrid::new(1.0_f64, 11).unwrap();
    let op = SpatialOperator::from_potential_values(&grid, &[0.0; 11]).unwrap();
    let ih2 = 1.0 / (grid.h() * grid.h());
    assert!((op.diag[5] + 2.0 * ih2).abs() < 1e-10 * ih2);
    assert!((op.diag[0] + ih2).abs() < 1e-10 * ih2);
    assert!((op.upper[5] - ih2).abs() < 1e-10 * ih2);
    assert!((op.lower[5] - ih2).abs() < 1e-10 * ih2);
}

#[test]
fn potential_table_checks_convexity() {
    let grid = SpatialGrid::new(2.0, 21).unwrap();
    let xs = grid.centers();
    let v: Vec<f64> = xs.iter().map(|x| x * x).collect();
    assert!(Potential1D::table(grid, v.clone(), 2.0).is_ok());
    assert!(matches!(Potential1D::table(grid, v, 2.5), Err(Error::Domain(_))));
    let bad: Vec<f64> = xs.iter().map(|x| x.cos()).collect();
    assert!(Potential1D::table(grid, bad, 0.1).is_err());
    assert!(matches!(Potential1D::table(grid, vec![0.0; 3], 1.0), Err(Error::Usage(_))));
    assert!(SpatialGrid::new(1.0_f64, 2).is_err());
    assert!(Potential1D::quadratic(0.0_f64).is_err());
}

#[test]
fn steady_state_is_fixed_point() {
    let (grid, _, st, op) = ou(200);
    let tg = TimeGrid::uniform_to(1.0, 20).unwrap();
    let w = build_weights(&KernelSpec::fractional(0.5).unwrap(), &tg).unwrap();
    let u0 = st.as_field();
    let mut hist: Vec<Field1D<f64>> = Vec::new();
    for _ in 0..20 {
        let u = step_nonlocal(&u0, &hist, &w, &op).unwrap();
        for (a, b) in u.values.iter().zip(&st.values) {
            assert!((a - b).abs() <= 1e-12 * b.max(1e-300) + 1e-300);
        }
        hist.push(u);
    }
    let u = step_backward_difference(&u0, 0.1, &op).unwrap();
    assert_eq!(u.grid, grid);
    for (a, b) in u.values.iter().zip(&st.values) {
        assert!((a - b).abs() <= 1e-12 * b + 1e-300);
    }
}

#[test]
fn backward_difference_matches_discrete_spectral_rate() {
    let (grid, pot, st, op) = ou(400);
    let ic = InitialCondition::SingleHermite { k: 1, amplitude: 0.5 };
    let (mut u, signed) = ic.discretize(&grid, &pot, &st, true).unwrap();
    assert!(signed);
    let g = EntropyGenerator::power(2.0).unwrap();
    for tau in [0.05, 0.1] {
        let mut v = u.clone();
        for n in 1..=40 {
            v = step_backward_difference(&v, tau, &op).unwrap();
            assert!((v.mass() - 1.0).abs() < 1e-12);
            let h = relative_entropy(&g, &v, &st).unwrap();
            let oracle = 0.25 / (1.0 + tau).powi(2 * n);
            assert!((h / oracle - 1.0).abs() < 0.02, "tau {tau} n {n}: {h} vs {oracle}");
        }
    }
    u = step_backward_difference(&u, 0.1, &op).unwrap();
    assert!(matches!(step_backward_difference(&u, 0.0, &op), Err(Error::Domain(_))));
}

#[test]
fn nonlocal_run_conserves_and_tracks_oracle() {
    let exp = experiment(
        Scheme::Nonlocal { kernel: KernelSpec::fractional(0.5).unwrap() },
        200,
        TimeGrid::uniform_to(5.0, 500).unwrap(),
        InitialCondition::SingleHermite { k: 1, amplitude: 0.5 },
    );
    let r = run_experiment(&exp).unwrap();
    assert!(r.signed);
    assert!(r.mass_error.iter().all(|m| m.abs() <= 1e-12));
    for (t, h) in r.times.iter().zip(&r.entropy_series[0]).skip(20) {
        let o = 0.25 * s1_exact(0.5, *t).powi(2);
        assert!((h / o - 1.0).abs() < 0.03, "t {t}: {h} vs {o}");
    }
    let hdr = r.csv_header();
    assert_eq!(hdr, ["t", "H_beta2", "l1", "envelopeA", "envelopeB_2", "mass_err"]);
    assert!(r.csv_rows().iter().all(|row| row.len() == hdr.len()));
}

#[test]
fn refinement_reduces_deviation() {
    let dev = |cells: usize, steps: usize| {
        let exp = experiment(
            Scheme::Nonlocal { kernel: KernelSpec::fractional(0.5).unwrap() },
            cells,
            TimeGrid::uniform_to(2.0, steps).unwrap(),
            InitialCondition::SingleHermite { k: 1, amplitude: 0.5 },
        );
        let r = run_experiment(&exp).unwrap();
        r.times
            .iter()
            .zip(&r.entropy_series[0])
            .filter(|(t, _)| **t >= 0.5)
            .map(|(t, h)| (h / (0.25 * s1_exact(0.5, *t).powi(2)) - 1.0).abs())
            .fold(0.0, f64::max)
    };
    let coarse = dev(60, 100);
    let fine = dev(120, 200);
    assert!(coarse / fine >= 1.5, "{coarse} -> {fine}");
}

#[test]
fn mixture_run_keeps_positivity_and_envelopes() {
    let comps = vec![
        MixtureComponent { weight: 0.6, mean: -1.5, std: 0.6 },
        MixtureComponent { weight: 0.4, mean: 2.0, std: 0.8 },
    ];
    let mut exp = experiment(
        Scheme::Nonlocal { kernel: KernelSpec::fractional(0.6).unwrap() },
        200,
        TimeGrid::uniform_to(10.0, 400).unwrap(),
        InitialCondition::GaussianMixture { components: comps },
    );
    exp.allow_signed = false;
    exp.generators = vec![
        EntropyGenerator::Logarithmic,
        EntropyGenerator::power(1.25).unwrap(),
        EntropyGenerator::power(1.5).unwrap(),
        EntropyGenerator::power(2.0).unwrap(),
    ];
    let r = run_experiment(&exp).unwrap();
    assert!(!r.signed);
    assert!(r.violations.is_empty(), "{:?}", &r.violations[..r.violations.len().min(3)]);
    assert!(r.min_value.iter().all(|m| *m >= 0.0));
    assert!(r.envelope_margins().iter().all(|m| *m >= -0.05));
    let tf = r.timefrac.as_ref().unwrap();
    assert_eq!(tf.part_b.len(), 4);
    assert!(tf.part_b[0].is_none());
}

#[test]
fn steady_initial_gives_zero_entropy() {
    let mut exp = experiment(
        Scheme::BackwardDifference,
        100,
        TimeGrid::uniform(0.1, 30).unwrap(),
        InitialCondition::Steady,
    );
    exp.generators.push(EntropyGenerator::Logarithmic);
    let r = run_experiment(&exp).unwrap();
    for s in &r.entropy_series {
        assert!(s.iter().all(|h| h.abs() <= 1e-12));
    }
}

#[test]
fn backward_difference_contraction_per_step() {
    let exp = experiment(
        Scheme::BackwardDifference,
        800,
        TimeGrid::uniform(0.1, 50).unwrap(),
        InitialCondition::GaussianMixture {
            components: vec![MixtureComponent { weight: 1.0, mean: 1.0, std: 0.7 }],
        },
    );
    let r = run_experiment(&exp).unwrap();
    assert!(r.violations.is_empty(), "{:?}", r.violations.first());
    let h = &r.entropy_series[0];
    for n in 1..h.len() {
        assert!(h[n] <= h[n - 1] * 0.8265, "step {n}: {}", h[n] / h[n - 1]);
    }
    assert!(matches!(
        run_experiment(&experiment(
            Scheme::BackwardDifference,
            50,
            TimeGrid::geometric(0.1, 1.1, 10).unwrap(),
            InitialCondition::Steady
        )),
        Err(Error::Usage(_))
    ));
}

#[test]
fn spectral_scheme_matches_relaxation() {
    let w = TimeGrid::uniform_to(5.0, 200).unwrap();
    let exp = experiment(
        Scheme::Spectral { kernel: KernelSpec::fractional(0.5).unwrap(), modes: 8 },
        100,
        w.clone(),
        InitialCondition::SingleHermite { k: 1, amplitude: 0.5 },
    );
    let r = run_experiment(&exp).unwrap();
    let s = nlfp_core::convq::solve_relaxation(&build_weights(&KernelSpec::fractional(0.5).unwrap(), &w).unwrap(), 1.0)
        .unwrap();
    for (h, s) in r.entropy_series[0].iter().zip(&s.values) {
        assert!((h / (0.25 * s * s) - 1.0).abs() < 1e-8);
    }
    let mut bad = exp.clone();
    bad.allow_signed = false;
    assert!(matches!(run_experiment(&bad), Err(Error::Usage(_))));
    bad.allow_signed = true;
    bad.initial = InitialCondition::Table { values: vec![1.0; 100] };
    assert!(matches!(run_experiment(&bad), Err(Error::Usage(_))));
}

#[test]
fn discretize_floors_and_normalizes() {
    let (grid, pot, st, _) = ou(50);
    let mut vals = vec![1.0; 50];
    vals[3] = -2.0;
    let ic = InitialCondition::Table { values: vals };
    let (u, signed) = ic.discretize(&grid, &pot, &st, false).unwrap();
    assert!(!signed);
    assert!(u.min() > 0.0);
    assert!((u.mass() - 1.0).abs() < 1e-14);
    let (u, signed) = ic.discretize(&grid, &pot, &st, true).unwrap();
    assert!(signed && u.min() < 0.0);
    let short = InitialCondition::Table { values: vec![1.0; 7] };
    assert!(matches!(short.discretize(&grid, &pot, &st, false), Err(Error::Usage(_))));
    let json = r#"{"mode":"gaussian_mixture","components":[{"weight":1,"mean":0,"std":1}]}"#;
    let ic: InitialCondition<f64> = serde_json::from_str(json).unwrap();
    assert!(ic.validate().is_ok());
    assert!(serde_json::from_str::<InitialCondition<f64>>(r#"{"mode":"single_hermite","k":1,"amp":1}"#).is_err());
}

#[test]
fn decay_fit_examples() {
    let ts: Vec<f64> = (0..50).map(|i| 10f64.powf(i as f64 / 49.0 * 3.0)).collect();
    let alg: Vec<(f64, f64)> = ts.iter().map(|t| (*t, t.powf(-0.5))).collect();
    let f = fit_decay_rate(&alg, &DecayClass::Algebraic { exponent: 0.5 }, (1.0, 1e3)).unwrap();
    assert!((f.rate + 0.5).abs() < 1e-6 && f.r_squared > 0.999999);
    let lin: Vec<(f64, f64)> = (0..40).map(|i| i as f64 * 0.1).map(|t| (t, (-2.0 * t).exp())).collect();
    let f = fit_decay_rate(&lin, &DecayClass::Exponential, (0.0, 4.0)).unwrap();
    assert!((f.rate + 2.0).abs() < 1e-6);
    let ml: Vec<(f64, f64)> = (0..30)
        .map(|i| 10f64.powf(2.0 + 2.0 * i as f64 / 29.0))
        .map(|t| (t, s1_exact(0.5, t)))
        .collect();
    let f = fit_decay_rate(&ml, &DecayClass::Algebraic { exponent: 0.5 }, (1e2, 1e4)).unwrap();
    assert!((f.rate + 0.5).abs() < 0.05, "{}", f.rate);
    let lg: Vec<(f64, f64)> = ts.iter().skip(5).map(|t| (*t, 3.0 / t.ln())).collect();
    let f = fit_decay_rate(&lg, &DecayClass::Logarithmic, (2.0, 1e3)).unwrap();
    assert!((f.rate - 3.0).abs() < 1e-12);
    assert!(matches!(
        fit_decay_rate(&alg[..5], &DecayClass::Exponential, (0.0, 1e9)),
        Err(Error::Usage(_))
    ));
}
