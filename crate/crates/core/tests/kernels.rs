use nlfp_core::kernels::{decay_class, distributed_log_threshold, eval_cum_l, eval_k, DecayClass, Term};
use nlfp_core::quad;
use nlfp_core::specfun::{g_beta, gamma};
use nlfp_core::{Error, KernelSpec};

fn frac(a: f64) -> KernelSpec {
    KernelSpec::fractional(a).unwrap()
}

fn multi() -> KernelSpec {
    KernelSpec::multi_term(&[(1.0, 0.3), (1.0, 0.7)]).unwrap()
}

#[test]
fn pointwise_kernel_values() {
    assert!((eval_k(&frac(0.5), 1.0).unwrap() - 0.5641895835477563).abs() < 1e-13);
    // 1/Γ(0.7) + 1/Γ(0.3)
    assert!((eval_k(&multi(), 1.0).unwrap() - 1.1046559364307565).abs() < 1e-13);
    let t = KernelSpec::tempered(0.5, 1.0).unwrap();
    assert!((eval_k(&t, 1.0).unwrap() - 0.20755374871029735).abs() < 1e-13);
}

#[test]
fn distributed_kernel_against_reference() {
    let d = KernelSpec::DistributedOrder;
    for &(t, v) in &[
        (0.001, 22.654172566920806),
        (0.1, 1.3824472979976426),
        (1.0, 0.54123573432867053),
        (10.0, 0.28216606969203029),
        (10000.0, 0.10019296328982986),
    ] {
        let k = eval_k(&d, t).unwrap();
        assert!(((k - v) / v).abs() < 1e-8, "k({t}) = {k}");
    }
    for &(t, v) in &[(1e-8, 0.055777593534374097), (0.5, 0.78293456774970985), (3.0, 1.9698245094757121)] {
        let c = d.cum_k(t).unwrap();
        assert!(((c - v) / v).abs() < 1e-8, "(1*k)({t}) = {c}");
    }
}

#[test]
fn cumulative_resolvent_closed_forms() {
    assert!((eval_cum_l(&frac(0.5), 1.0).unwrap() - 1.1283791670955126).abs() < 1e-13);
    let d = KernelSpec::DistributedOrder;
    for &(t, v) in &[(0.01, 0.050556922369867339), (1.0, 1.1735630272247269), (100.0, 5.1922877931763572)] {
        let c = eval_cum_l(&d, t).unwrap();
        assert!(((c - v) / v).abs() < 1e-10, "distributed (1*l)({t}) = {c}");
    }
    assert!(2.0 * eval_cum_l(&d, 100.0).unwrap() >= 100f64.ln());
    for &(a, g, t, v) in &[
        (0.5, 1.0, 0.1, 0.36860171826038997),
        (0.5, 1.0, 1.0, 1.4716049381348697),
        (0.5, 1.0, 10.0, 10.499999684837035),
        (0.3, 0.2, 0.1, 0.56445031023439969),
        (0.3, 0.2, 1.0, 1.2327127314921457),
        (0.3, 0.2, 10.0, 4.3696555906747781),
    ] {
        let c = eval_cum_l(&KernelSpec::tempered(a, g).unwrap(), t).unwrap();
        assert!(((c - v) / v).abs() < 1e-10, "tempered({a}, {g}) (1*l)({t}) = {c}");
    }
}

#[test]
fn multi_term_resolvent_is_discrete_but_close() {
    // exact: (1*l)(t) = t^0.7 E_{0.4,1.7}(-t^0.4), mpmath
    let m = multi();
    assert!(m.cum_l_closed(1.0).unwrap().is_none());
    for &(t, v) in &[
        (0.1, 0.16206643549128478),
        (1.0, 0.57491160994286539),
        (10.0, 1.6380142619061346),
        (100.0, 3.8997111825876005),
    ] {
        let c = eval_cum_l(&m, t).unwrap();
        assert!(((c - v) / v).abs() < 0.02, "multi-term (1*l)({t}) = {c}, exact {v}");
    }
}

#[test]
fn decay_classes() {
    assert_eq!(decay_class(&frac(0.3)), DecayClass::Algebraic { exponent: 0.3 });
    assert_eq!(decay_class(&multi()), DecayClass::Algebraic { exponent: 0.3 });
    assert_eq!(decay_class(&KernelSpec::tempered(0.5, 2.0).unwrap()), DecayClass::Exponential);
    assert_eq!(decay_class(&KernelSpec::DistributedOrder), DecayClass::Logarithmic);
}

#[test]
fn validation() {
    assert!(matches!(KernelSpec::fractional(1.0), Err(Error::Domain(_))));
    assert!(KernelSpec::fractional(0.0).is_err());
    assert!(KernelSpec::tempered(0.5, 0.0).is_err());
    assert!(KernelSpec::multi_term(&[(1.0, 0.7), (1.0, 0.3)]).is_err());
    assert!(KernelSpec::multi_term(&[(1.0, 0.3), (1.0, 0.3)]).is_err());
    assert!(KernelSpec::multi_term(&[(-1.0, 0.3)]).is_err());
    assert!(KernelSpec::multi_term(&[]).is_err());
    let bad = KernelSpec::MultiTerm {
        terms: vec![Term { delta: 1.0, alpha: 1.5 }],
    };
    assert!(bad.validate().is_err());
    assert!(matches!(eval_k(&frac(0.5), 0.0), Err(Error::Domain(_))));
    assert!(eval_k(&frac(0.5), -1.0).is_err());
    assert!(eval_cum_l(&KernelSpec::DistributedOrder, 0.0).is_err());
}

#[test]
fn kernels_are_monotone() {
    let specs = [
        frac(0.2),
        frac(0.9),
        KernelSpec::tempered(0.4, 3.0).unwrap(),
        multi(),
        KernelSpec::DistributedOrder,
    ];
    for s in &specs {
        let mut pk = f64::INFINITY;
        let mut pl = 0.0;
        for i in 0..120 {
            let t = 1e-5 * (1e9f64).powf(i as f64 / 119.0);
            let k = eval_k(s, t).unwrap();
            assert!(k >= 0.0 && k <= pk, "{s:?} k not nonincreasing at {t}");
            pk = k;
            if let Some(c) = s.cum_l_closed(t).unwrap() {
                assert!(c >= pl, "{s:?} (1*l) not nondecreasing at {t}");
                pl = c;
            }
        }
        if let Some(c) = s.cum_l_closed(1e-30).unwrap() {
            assert!(c < 1e-5, "{s:?}: (1*l)(0+) = {c}");
        }
    }
}

#[test]
fn fractional_pair_is_complementary() {
    // (k * l)(1) = ∫_0^1 g_{1-α}(1-s) g_α(s) ds; split at 1/2 and remove both
    // endpoint singularities by s = u^{1/α} and 1 - s = u^{1/(1-α)}
    for &a in &[0.25, 0.5, 0.8] {
        let b = 1.0 - a;
        let left = quad::adaptive(
            |u: f64| {
                let s = u.powf(1.0 / a);
                g_beta(b, 1.0 - s).unwrap() / gamma(a).unwrap() / a
            },
            0.0,
            0.5f64.powf(a),
            1e-13,
            1e-11,
            2000,
        );
        let right = quad::adaptive(
            |u: f64| {
                let r = u.powf(1.0 / b);
                g_beta(a, 1.0 - r).unwrap() / gamma(b).unwrap() / b
            },
            0.0,
            0.5f64.powf(b),
            1e-13,
            1e-11,
            2000,
        );
        let v = left.value + right.value;
        assert!((v - 1.0).abs() < 1e-6, "alpha {a}: {v}");
    }
}

#[test]
fn distributed_laplace_transform() {
    // k̂(z) = (z - 1)/(z log z); the head [0, δ] is (1*k)(δ)
    let d = KernelSpec::DistributedOrder;
    let delta = 1e-10;
    for &z in &[0.5f64, 1.0, 2.0] {
        let head = d.cum_k(delta).unwrap();
        let tail = quad::adaptive(
            |u: f64| {
                let t = u.exp();
                (-z * t).exp() * d.k(t).unwrap() * t
            },
            delta.ln(),
            (60.0 / z).ln(),
            1e-12,
            1e-10,
            4000,
        );
        let exact = if z == 1.0 { 1.0 } else { (z - 1.0) / (z * z.ln()) };
        let v = head + tail.value;
        assert!((v - exact).abs() < 1e-4, "z = {z}: {v} vs {exact}");
    }
}

#[test]
fn logarithmic_threshold_exists() {
    let nodes: Vec<f64> = (0..200).map(|i| 1.5 * (1e6f64 / 1.5).powf(i as f64 / 199.0)).collect();
    let t1 = distributed_log_threshold(&nodes).unwrap().expect("bounds hold at the far end");
    assert!(t1 > 1.0 && t1 < 1e6);
}

#[test]
fn json_round_trip() {
    let specs = [frac(0.5), KernelSpec::tempered(0.3, 0.2).unwrap(), multi(), KernelSpec::DistributedOrder];
    for s in &specs {
        let j = serde_json::to_string(s).unwrap();
        let back: KernelSpec = serde_json::from_str(&j).unwrap();
        assert_eq!(&back, s);
    }
    let j = r#"{"type":"fractional","alpha":0.4}"#;
    assert_eq!(serde_json::from_str::<KernelSpec>(j).unwrap(), frac(0.4));
    assert!(serde_json::from_str::<KernelSpec>(r#"{"type":"fractional","alpha":0.4,"x":1}"#).is_err());
}
