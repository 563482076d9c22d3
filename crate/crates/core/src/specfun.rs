//! Gamma, standard kernels, Mittag-Leffler on the negative axis, E1, erfc and
//! the regularized incomplete gamma function.

use crate::error::{domain, Error, Result};
use crate::quad;
use crate::real::Real;

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

pub fn euler_gamma<T: Real>() -> T {
    T::lit(EULER_GAMMA)
}

fn check_nan<T: Real>(x: T, what: &str) -> Result<()> {
    if x.is_nan() {
        domain(format!("{what}: NaN argument"))
    } else {
        Ok(())
    }
}

// (t, A(x)) with Γ(x) = sqrt(2π) t^(x-1/2) e^(-t) A(x), valid for x >= 1/2
fn lanczos_parts<T: Real>(x: T) -> (T, T) {
    let xm1 = x - T::one();
    let mut a = T::lit(LANCZOS[0]);
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        a = a + T::lit(*c) / (xm1 + T::from_usize_lossy(i));
    }
    (xm1 + T::lit(LANCZOS_G + 0.5), a)
}

fn gamma_pos<T: Real>(x: T) -> T {
    if x < T::lit(0.5) {
        return gamma_pos(x + T::one()) / x;
    }
    let (t, a) = lanczos_parts(x);
    // split the power so t^(x-1/2) does not overflow before e^-t is applied
    let p = t.powf((x - T::lit(0.5)) * T::lit(0.5));
    (T::TAU()).sqrt() * p * (p * (-t).exp()) * a
}

/// Gamma function for `x > 0`.
pub fn gamma<T: Real>(x: T) -> Result<T> {
    check_nan(x, "gamma")?;
    if x <= T::zero() {
        return domain(format!("gamma requires x > 0, got {x}"));
    }
    Ok(gamma_pos(x))
}

/// Natural logarithm of the gamma function for `x > 0`.
pub fn ln_gamma<T: Real>(x: T) -> Result<T> {
    check_nan(x, "ln_gamma")?;
    if x <= T::zero() {
        return domain(format!("ln_gamma requires x > 0, got {x}"));
    }
    Ok(ln_gamma_pos(x))
}

fn ln_gamma_pos<T: Real>(x: T) -> T {
    if x < T::lit(0.5) {
        return ln_gamma_pos(x + T::one()) - x.ln();
    }
    let (t, a) = lanczos_parts(x);
    T::lit(0.5) * T::TAU().ln() + (x - T::lit(0.5)) * t.ln() - t + a.ln()
}

/// sin(πx) with argument reduction, exactly zero at integers.
pub fn sin_pi<T: Real>(x: T) -> T {
    let two = T::lit(2.0);
    let r = x - two * (x / two).round();
    if r == r.round() {
        return T::zero();
    }
    (T::PI() * r).sin()
}

/// 1/Γ(x), defined on the whole real line (zero at the poles of Γ).
pub fn recip_gamma<T: Real>(x: T) -> T {
    if x.is_nan() {
        return x;
    }
    if x >= T::lit(0.5) {
        if x < T::lit(170.0) {
            return T::one() / gamma_pos(x);
        }
        return (-ln_gamma_pos(x)).exp();
    }
    let s = sin_pi(x);
    if s == T::zero() {
        return T::zero();
    }
    let y = T::one() - x;
    if y < T::lit(170.0) {
        s * gamma_pos(y) / T::PI()
    } else {
        s.signum() * (ln_gamma_pos(y) + s.abs().ln() - T::PI().ln()).exp()
    }
}

/// Standard kernel `g_β(t) = t^(β-1)/Γ(β)`.
pub fn g_beta<T: Real>(beta: T, t: T) -> Result<T> {
    check_nan(beta, "g_beta")?;
    check_nan(t, "g_beta")?;
    if beta <= T::zero() {
        return domain(format!("g_beta requires beta > 0, got {beta}"));
    }
    if t < T::zero() {
        return domain(format!("g_beta requires t >= 0, got {t}"));
    }
    if t == T::zero() {
        return if beta < T::one() {
            domain("g_beta is singular at t = 0 for beta < 1")
        } else if beta == T::one() {
            Ok(T::one())
        } else {
            Ok(T::zero())
        };
    }
    Ok(g_beta_pos(beta, t))
}

pub(crate) fn g_beta_pos<T: Real>(beta: T, t: T) -> T {
    if beta == T::one() {
        T::one()
    } else if beta < T::lit(150.0) {
        t.powf(beta - T::one()) * recip_gamma(beta)
    } else {
        ((beta - T::one()) * t.ln() - ln_gamma_pos(beta)).exp()
    }
}

/// Evaluation strategy for [`mittag_leffler`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MLSeriesPolicy<T> {
    /// The power series is tried only for `|x| <= series_cutoff`.
    pub series_cutoff: T,
    /// Maximal number of terms of the asymptotic expansion.
    pub asymptotic_terms: usize,
    pub target_abs_tol: T,
    /// Subinterval budget for the integral representation used when neither
    /// expansion meets the tolerance.
    pub max_subintervals: usize,
}

impl<T: Real> Default for MLSeriesPolicy<T> {
    fn default() -> Self {
        MLSeriesPolicy {
            series_cutoff: T::lit(5.0),
            asymptotic_terms: 100,
            target_abs_tol: T::lit(1e-12).max(T::epsilon() * T::lit(8.0)),
            max_subintervals: 2000,
        }
    }
}

impl<T: Real> MLSeriesPolicy<T> {
    pub fn new(series_cutoff: T, asymptotic_terms: usize, target_abs_tol: T) -> Result<Self> {
        let p = MLSeriesPolicy {
            series_cutoff,
            asymptotic_terms,
            target_abs_tol,
            ..Self::default()
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.series_cutoff > T::zero()) {
            return domain("series_cutoff must be positive");
        }
        if self.asymptotic_terms < 1 {
            return domain("asymptotic_terms must be at least 1");
        }
        if !(self.target_abs_tol > T::zero() && self.target_abs_tol <= T::lit(1e-6)) {
            return domain("target_abs_tol must lie in (0, 1e-6]");
        }
        if self.max_subintervals < 2 {
            return domain("max_subintervals must be at least 2");
        }
        Ok(())
    }
}

/// Mittag-Leffler function `E_α(x)` for `0 < α <= 1` and `x <= 0`.
///
/// Tries the power series (small `|x|`, accepted only if the cancellation
/// estimate meets the tolerance), then the optimally truncated asymptotic
/// expansion, then the real integral representation
/// `E_α(-z) = sin(απ)/(απ) ∫_0^∞ exp(-(zρ)^(1/α)) / (ρ² + 2ρ cos(απ) + 1) dρ`.
pub fn mittag_leffler<T: Real>(alpha: T, x: T, policy: &MLSeriesPolicy<T>) -> Result<T> {
    check_nan(alpha, "mittag_leffler")?;
    check_nan(x, "mittag_leffler")?;
    if !(alpha > T::zero() && alpha <= T::one()) {
        return domain(format!("mittag_leffler requires alpha in (0, 1], got {alpha}"));
    }
    if x > T::zero() {
        return domain(format!("mittag_leffler is implemented for x <= 0, got {x}"));
    }
    policy.validate()?;
    if alpha == T::one() {
        return Ok(x.exp());
    }
    let z = -x;
    if z == T::zero() {
        return Ok(T::one());
    }
    if z.is_infinite() {
        return Ok(T::zero());
    }
    let tol = policy.target_abs_tol;
    if z <= policy.series_cutoff {
        if let Some(v) = ml_series(alpha, z, tol) {
            return Ok(v);
        }
    }
    if let Some(v) = ml_asymptotic(alpha, z, policy.asymptotic_terms, tol) {
        return Ok(v);
    }
    ml_integral(alpha, z, tol, policy.max_subintervals)
}

fn ml_series<T: Real>(alpha: T, z: T, tol: T) -> Option<T> {
    let eps = T::epsilon();
    let mut sum = T::one();
    let mut abs_sum = T::one();
    let mut zp = T::one();
    let mut prev = T::infinity();
    for j in 1..10_000usize {
        zp = -zp * z;
        let term = zp * recip_gamma(alpha * T::from_usize_lossy(j) + T::one());
        sum = sum + term;
        abs_sum = abs_sum + term.abs();
        if !abs_sum.is_finite() {
            return None;
        }
        let a = term.abs();
        if a <= eps * sum.abs() && a < prev {
            let est = T::lit(4.0) * eps * abs_sum + a;
            return (est <= tol).then(|| sum.min(T::one()));
        }
        prev = a;
    }
    None
}

fn ml_asymptotic<T: Real>(alpha: T, z: T, max_terms: usize, tol: T) -> Option<T> {
    let lnz = z.ln();
    let lnpi = T::PI().ln();
    let mut sum = T::zero();
    let mut last = T::infinity();
    for j in 1..=max_terms {
        let y = alpha * T::from_usize_lossy(j);
        let s = sin_pi(y);
        if s == T::zero() {
            continue;
        }
        // 1/Γ(1-y) = Γ(y) sin(πy)/π
        let ln_mag = -T::from_usize_lossy(j) * lnz + ln_gamma_pos(y) + s.abs().ln() - lnpi;
        let mag = ln_mag.exp();
        if mag > last {
            // expansion started to diverge; the previous term bounds the error
            return (last <= tol).then_some(sum);
        }
        let sign = if j % 2 == 0 { -s.signum() } else { s.signum() };
        sum = sum + sign * mag;
        last = mag;
        if mag <= T::epsilon() * sum.abs().max(T::min_positive_value()) {
            return Some(sum);
        }
    }
    None
}

fn ml_integral<T: Real>(alpha: T, z: T, tol: T, budget: usize) -> Result<T> {
    let c = (alpha * T::PI()).cos();
    let inv = T::one() / alpha;
    let pref = sin_pi(alpha) / (alpha * T::PI());
    let f = |r: T| (-(z * r).powf(inv)).exp() / (r * r + T::lit(2.0) * r * c + T::one());
    let g = |u: T| {
        if u <= T::zero() {
            return T::zero();
        }
        (-(z / u).powf(inv)).exp() / (T::one() + T::lit(2.0) * u * c + u * u)
    };
    let inner = tol / (T::lit(4.0) * pref.max(T::epsilon()));
    let half = budget / 2;
    let r1 = quad::adaptive(f, T::zero(), T::one(), inner, T::zero(), half.max(2));
    let r2 = quad::adaptive(g, T::zero(), T::one(), inner, T::zero(), half.max(2));
    let achieved = pref * (r1.abs_err + r2.abs_err);
    if r1.converged && r2.converged {
        Ok((pref * (r1.value + r2.value)).min(T::one()).max(T::zero()))
    } else {
        Err(Error::Accuracy {
            achieved: achieved.to_f64_lossy(),
            requested: tol.to_f64_lossy(),
        })
    }
}

/// `Ein(t) = Σ_{k>=1} (-1)^(k+1) t^k / (k k!)`, the entire part of E1.
pub fn ein<T: Real>(t: T) -> T {
    let mut term = -T::one();
    let mut sum = T::zero();
    for k in 1..500usize {
        let kf = T::from_usize_lossy(k);
        term = term * (-t) / kf;
        let c = term / kf;
        sum = sum + c;
        if c.abs() <= T::epsilon() * sum.abs() {
            break;
        }
    }
    sum
}

// continued fraction for e^t E1(t), t > 1
fn e1_cf<T: Real>(t: T) -> T {
    let tiny = T::min_positive_value() / T::epsilon();
    let mut b = t + T::one();
    let mut c = T::one() / tiny;
    let mut d = T::one() / b;
    let mut h = d;
    for i in 1..10_000usize {
        let fi = T::from_usize_lossy(i);
        let a = -fi * fi;
        b = b + T::lit(2.0);
        d = T::one() / (a * d + b);
        c = b + a / c;
        let del = c * d;
        h = h * del;
        if (del - T::one()).abs() <= T::epsilon() {
            break;
        }
    }
    h
}

/// Exponential integral `E1(t)` for `t > 0`.
pub fn expint_e1<T: Real>(t: T) -> Result<T> {
    check_nan(t, "expint_e1")?;
    if t <= T::zero() {
        return domain(format!("expint_e1 requires t > 0, got {t}"));
    }
    if t <= T::one() {
        Ok(-euler_gamma::<T>() - t.ln() + ein(t))
    } else {
        Ok(e1_cf(t) * (-t).exp())
    }
}

/// Scaled exponential integral `e^t E1(t)` for `t > 0`; finite for all large t.
pub fn expint_e1_scaled<T: Real>(t: T) -> Result<T> {
    check_nan(t, "expint_e1_scaled")?;
    if t <= T::zero() {
        return domain(format!("expint_e1_scaled requires t > 0, got {t}"));
    }
    if t <= T::one() {
        Ok(t.exp() * (-euler_gamma::<T>() - t.ln() + ein(t)))
    } else {
        Ok(e1_cf(t))
    }
}

/// Complementary error function.
pub fn erfc<T: Real>(x: T) -> Result<T> {
    check_nan(x, "erfc")?;
    let ax = x.abs();
    let v = if ax < T::lit(1.5) {
        return Ok(T::one() - erf_series(x));
    } else {
        erfc_cf(ax)
    };
    Ok(if x < T::zero() { T::lit(2.0) - v } else { v })
}

fn erf_series<T: Real>(x: T) -> T {
    let x2 = x * x;
    let mut term = x;
    let mut sum = x;
    for n in 1..200usize {
        let nf = T::from_usize_lossy(n);
        term = -term * x2 / nf;
        let c = term / (T::lit(2.0) * nf + T::one());
        sum = sum + c;
        if c.abs() <= T::epsilon() * sum.abs() * T::lit(0.1) {
            break;
        }
    }
    sum * T::lit(2.0) / T::PI().sqrt()
}

// Laplace continued fraction, modified Lentz; x >= 1.5
fn erfc_cf<T: Real>(x: T) -> T {
    let tiny = T::min_positive_value() / T::epsilon();
    let mut f = x;
    let mut c = x;
    let mut d = T::zero();
    for n in 1..5_000usize {
        let a = T::from_usize_lossy(n) * T::lit(0.5);
        d = x + a * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = x + a / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = T::one() / d;
        let del = c * d;
        f = f * del;
        if (del - T::one()).abs() <= T::epsilon() {
            break;
        }
    }
    (-x * x).exp() / (T::PI().sqrt() * f)
}

/// Regularized lower incomplete gamma function `P(a, x)` for `a > 0`, `x >= 0`.
pub fn gamma_p<T: Real>(a: T, x: T) -> Result<T> {
    check_nan(a, "gamma_p")?;
    check_nan(x, "gamma_p")?;
    if a <= T::zero() || x < T::zero() {
        return domain(format!("gamma_p requires a > 0 and x >= 0, got ({a}, {x})"));
    }
    if x == T::zero() {
        return Ok(T::zero());
    }
    let lnpre = -x + a * x.ln() - ln_gamma_pos(a);
    if x < a + T::one() {
        let mut ap = a;
        let mut del = T::one() / a;
        let mut sum = del;
        for _ in 0..10_000 {
            ap = ap + T::one();
            del = del * x / ap;
            sum = sum + del;
            if del.abs() <= sum.abs() * T::epsilon() {
                break;
            }
        }
        Ok((sum * lnpre.exp()).min(T::one()))
    } else {
        let tiny = T::min_positive_value() / T::epsilon();
        let mut b = x + T::one() - a;
        let mut c = T::one() / tiny;
        let mut d = T::one() / b;
        let mut h = d;
        for i in 1..10_000usize {
            let fi = T::from_usize_lossy(i);
            let an = -fi * (fi - a);
            b = b + T::lit(2.0);
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = T::one() / d;
            let del = d * c;
            h = h * del;
            if (del - T::one()).abs() <= T::epsilon() {
                break;
            }
        }
        Ok((T::one() - lnpre.exp() * h).max(T::zero()))
    }
}
