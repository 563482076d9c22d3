//! Kernel pairs `(k, l)` with `k * l = 1`: pointwise `k`, the cumulative
//! complementary kernel `(1 * l)`, interval masses and decay classes.

use serde::{Deserialize, Serialize};

use crate::convq::{self, TimeGrid};
use crate::error::{domain, Result};
use crate::quad;
use crate::real::Real;
use crate::specfun::{self, euler_gamma, g_beta_pos, recip_gamma};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Term<T> {
    pub delta: T,
    pub alpha: T,
}

/// Parametric description of a kernel pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec<T> {
    /// `k = g_{1-α}`, `l = g_α`.
    Fractional { alpha: T },
    /// `k = g_{1-α} e^{-γt}`, `l = g_α e^{-γt} + γ (1 * g_α e^{-γ·})`.
    TemperedFractional { alpha: T, gamma_rate: T },
    /// `k = Σ δ_j g_{1-α_j}`; no closed form for `l`.
    MultiTerm { terms: Vec<Term<T>> },
    /// `k = ∫_0^1 g_β dβ`, `l(t) = e^t E1(t)`.
    DistributedOrder,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DecayClass<T> {
    Algebraic { exponent: T },
    Exponential,
    Logarithmic,
}

/// Which member of the pair the discretization is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Representation {
    /// Interval masses of `l` are exact; the discrete derivative is derived.
    Complementary,
    /// Interval masses of `k` are exact; the discrete `l` is derived.
    Kernel,
}

fn in_unit<T: Real>(a: T) -> bool {
    a > T::zero() && a < T::one()
}

/// `(a + w)^p - a^p` for `a, w >= 0` without cancellation.
pub(crate) fn pow_diff<T: Real>(a: T, w: T, p: T) -> T {
    if a <= T::zero() {
        return w.powf(p);
    }
    a.powf(p) * (p * (w / a).ln_1p()).exp_m1()
}

// below this relative width an interval integral is done by Gauss-Legendre
// on the integrand instead of differencing antiderivatives
const SHORT: f64 = 0.25;

impl<T: Real> KernelSpec<T> {
    pub fn fractional(alpha: T) -> Result<Self> {
        let s = KernelSpec::Fractional { alpha };
        s.validate()?;
        Ok(s)
    }

    pub fn tempered(alpha: T, gamma_rate: T) -> Result<Self> {
        let s = KernelSpec::TemperedFractional { alpha, gamma_rate };
        s.validate()?;
        Ok(s)
    }

    pub fn multi_term(terms: &[(T, T)]) -> Result<Self> {
        let s = KernelSpec::MultiTerm {
            terms: terms.iter().map(|&(delta, alpha)| Term { delta, alpha }).collect(),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            KernelSpec::Fractional { alpha } => {
                if !in_unit(*alpha) {
                    return domain(format!("alpha must lie in (0, 1), got {alpha}"));
                }
            }
            KernelSpec::TemperedFractional { alpha, gamma_rate } => {
                if !in_unit(*alpha) {
                    return domain(format!("alpha must lie in (0, 1), got {alpha}"));
                }
                if !(*gamma_rate > T::zero() && gamma_rate.is_finite()) {
                    return domain(format!("gamma_rate must be positive, got {gamma_rate}"));
                }
            }
            KernelSpec::MultiTerm { terms } => {
                if terms.is_empty() {
                    return domain("multi-term kernel needs at least one term");
                }
                for (i, t) in terms.iter().enumerate() {
                    if !in_unit(t.alpha) {
                        return domain(format!("term {i}: alpha must lie in (0, 1), got {}", t.alpha));
                    }
                    if !(t.delta > T::zero() && t.delta.is_finite()) {
                        return domain(format!("term {i}: delta must be positive, got {}", t.delta));
                    }
                    if i > 0 && !(t.alpha > terms[i - 1].alpha) {
                        return domain("multi-term alphas must be strictly increasing");
                    }
                }
            }
            KernelSpec::DistributedOrder => {}
        }
        Ok(())
    }

    pub fn representation(&self) -> Representation {
        match self {
            KernelSpec::MultiTerm { .. } => Representation::Kernel,
            _ => Representation::Complementary,
        }
    }

    pub fn decay_class(&self) -> DecayClass<T> {
        match self {
            KernelSpec::Fractional { alpha } => DecayClass::Algebraic { exponent: *alpha },
            KernelSpec::TemperedFractional { .. } => DecayClass::Exponential,
            KernelSpec::MultiTerm { terms } => DecayClass::Algebraic {
                exponent: terms.iter().map(|t| t.alpha).fold(T::infinity(), T::min),
            },
            KernelSpec::DistributedOrder => DecayClass::Logarithmic,
        }
    }

    /// Pointwise kernel `k(t)`, `t > 0`.
    pub fn k(&self, t: T) -> Result<T> {
        check_t(t)?;
        Ok(match self {
            KernelSpec::Fractional { alpha } => g_beta_pos(T::one() - *alpha, t),
            KernelSpec::TemperedFractional { alpha, gamma_rate } => {
                g_beta_pos(T::one() - *alpha, t) * (-*gamma_rate * t).exp()
            }
            KernelSpec::MultiTerm { terms } => terms
                .iter()
                .map(|term| term.delta * g_beta_pos(T::one() - term.alpha, t))
                .sum(),
            KernelSpec::DistributedOrder => distributed_k(t)?,
        })
    }

    /// Pointwise complementary kernel `l(t)`, `t > 0`; `None` for multi-term
    /// kernels, whose `l` has no closed form.
    pub fn l(&self, t: T) -> Result<Option<T>> {
        check_t(t)?;
        Ok(match self {
            KernelSpec::Fractional { alpha } => Some(g_beta_pos(*alpha, t)),
            KernelSpec::TemperedFractional { alpha, gamma_rate } => {
                let x = *gamma_rate * t;
                Some(
                    g_beta_pos(*alpha, t) * (-x).exp()
                        + gamma_rate.powf(T::one() - *alpha) * specfun::gamma_p(*alpha, x)?,
                )
            }
            KernelSpec::MultiTerm { .. } => None,
            KernelSpec::DistributedOrder => Some(specfun::expint_e1_scaled(t)?),
        })
    }

    /// `(1 * k)(t) = ∫_0^t k`.
    pub fn cum_k(&self, t: T) -> Result<T> {
        if t < T::zero() || t.is_nan() {
            return domain(format!("cum_k requires t >= 0, got {t}"));
        }
        if t == T::zero() {
            return Ok(T::zero());
        }
        Ok(match self {
            KernelSpec::Fractional { alpha } => g_beta_pos(T::lit(2.0) - *alpha, t),
            KernelSpec::TemperedFractional { alpha, gamma_rate } => {
                gamma_rate.powf(*alpha - T::one()) * specfun::gamma_p(T::one() - *alpha, *gamma_rate * t)?
            }
            KernelSpec::MultiTerm { terms } => terms
                .iter()
                .map(|term| term.delta * g_beta_pos(T::lit(2.0) - term.alpha, t))
                .sum(),
            KernelSpec::DistributedOrder => {
                let lt = t.ln();
                let r = quad::adaptive_breaks(
                    |b: T| (b * lt).exp() * recip_gamma(b + T::one()),
                    &[T::zero(), T::lit(0.5), T::one()],
                    T::zero(),
                    T::lit(1e-13).max(T::epsilon() * T::lit(8.0)),
                    400,
                );
                r.value
            }
        })
    }

    /// `∫_a^b k` for `0 <= a < b`.
    pub fn k_mass(&self, a: T, b: T) -> Result<T> {
        check_interval(a, b)?;
        self.k_mass_width(a, b - a)
    }

    /// `∫_a^{a+w} k`. The width is passed separately so that short intervals
    /// far from the origin keep their size in floating point.
    pub fn k_mass_width(&self, a: T, w: T) -> Result<T> {
        check_width(a, w)?;
        let b = a + w;
        match self {
            KernelSpec::Fractional { alpha } => {
                let p = T::one() - *alpha;
                Ok(pow_diff(a, w, p) * recip_gamma(p + T::one()))
            }
            KernelSpec::MultiTerm { terms } => Ok(terms
                .iter()
                .map(|term| {
                    let p = T::one() - term.alpha;
                    term.delta * pow_diff(a, w, p) * recip_gamma(p + T::one())
                })
                .sum()),
            _ => {
                if a > T::zero() && w <= T::lit(SHORT) * a {
                    let mut err = None;
                    let v = quad::gl8_integrate(
                        |s| {
                            self.k(a + s).unwrap_or_else(|e| {
                                err = Some(e);
                                T::zero()
                            })
                        },
                        T::zero(),
                        w,
                    );
                    match err {
                        Some(e) => Err(e),
                        None => Ok(v),
                    }
                } else {
                    Ok(self.cum_k(b)? - self.cum_k(a)?)
                }
            }
        }
    }

    /// `(1 * l)(t)` in closed form; `None` for multi-term kernels (see
    /// [`eval_cum_l`] for the discrete resolvent used there).
    pub fn cum_l_closed(&self, t: T) -> Result<Option<T>> {
        if t < T::zero() || t.is_nan() {
            return domain(format!("cum_l requires t >= 0, got {t}"));
        }
        if t == T::zero() {
            return Ok(Some(T::zero()));
        }
        Ok(match self {
            KernelSpec::Fractional { alpha } => Some(g_beta_pos(T::one() + *alpha, t)),
            KernelSpec::TemperedFractional { alpha, gamma_rate } => {
                let x = *gamma_rate * t;
                let p = specfun::gamma_p(*alpha, x)?;
                let tail = (*alpha * x.ln() - x).exp() * recip_gamma(*alpha);
                Some(gamma_rate.powf(-*alpha) * ((T::one() - *alpha + x) * p + tail))
            }
            KernelSpec::MultiTerm { .. } => None,
            KernelSpec::DistributedOrder => Some(distributed_cum_l(t)?),
        })
    }

    /// `∫_a^b l` for `0 <= a < b`; `None` for multi-term kernels.
    pub fn l_mass(&self, a: T, b: T) -> Result<Option<T>> {
        check_interval(a, b)?;
        self.l_mass_width(a, b - a)
    }

    /// `∫_a^{a+w} l`; see [`KernelSpec::k_mass_width`].
    pub fn l_mass_width(&self, a: T, w: T) -> Result<Option<T>> {
        check_width(a, w)?;
        let b = a + w;
        if let KernelSpec::Fractional { alpha } = self {
            return Ok(Some(pow_diff(a, w, *alpha) * recip_gamma(T::one() + *alpha)));
        }
        if matches!(self, KernelSpec::MultiTerm { .. }) {
            return Ok(None);
        }
        if a > T::zero() && w <= T::lit(SHORT) * a {
            let mut err = None;
            let v = quad::gl8_integrate(
                |s| match self.l(a + s) {
                    Ok(Some(v)) => v,
                    Ok(None) => T::nan(),
                    Err(e) => {
                        err = Some(e);
                        T::zero()
                    }
                },
                T::zero(),
                w,
            );
            return match err {
                Some(e) => Err(e),
                None => Ok(Some(v)),
            };
        }
        let hi = self.cum_l_closed(b)?.unwrap_or_else(T::nan);
        let lo = self.cum_l_closed(a)?.unwrap_or_else(T::nan);
        Ok(Some(hi - lo))
    }
}

fn check_t<T: Real>(t: T) -> Result<()> {
    if !(t > T::zero()) {
        return domain(format!("kernels are evaluated for t > 0 only, got {t}"));
    }
    Ok(())
}

fn check_interval<T: Real>(a: T, b: T) -> Result<()> {
    if !(a >= T::zero() && b > a) {
        return domain(format!("interval [{a}, {b}] must satisfy 0 <= a < b"));
    }
    Ok(())
}

fn check_width<T: Real>(a: T, w: T) -> Result<()> {
    if !(a >= T::zero() && w > T::zero() && (a + w).is_finite()) {
        return domain(format!("interval at {a} of width {w} must have a >= 0 and w > 0"));
    }
    Ok(())
}

fn distributed_k<T: Real>(t: T) -> Result<T> {
    let lt = t.ln();
    // 1/Γ(β) = β/Γ(1+β) vanishes linearly at β = 0, so the integrand is bounded;
    // for small t it concentrates near β ~ 1/|log t|, hence the extra breakpoints
    let mut pts = vec![T::zero()];
    if lt < T::zero() {
        let c = T::one() / (-lt);
        for m in [0.5, 2.0, 8.0] {
            let p = c * T::lit(m);
            if p < T::one() && p > *pts.last().unwrap() {
                pts.push(p);
            }
        }
    }
    pts.push(T::one());
    let r = quad::adaptive_breaks(
        |b: T| b * ((b - T::one()) * lt).exp() * recip_gamma(b + T::one()),
        &pts,
        T::zero(),
        T::lit(1e-13).max(T::epsilon() * T::lit(8.0)),
        400,
    );
    Ok(r.value)
}

fn distributed_cum_l<T: Real>(t: T) -> Result<T> {
    // (1 * l)(t) = e^t E1(t) + log t + γ_E
    let g = euler_gamma::<T>();
    if t <= T::one() {
        Ok(-(t.exp_m1()) * (g + t.ln()) + t.exp() * specfun::ein(t))
    } else {
        Ok(specfun::expint_e1_scaled(t)? + t.ln() + g)
    }
}

/// `k(t)` for `t > 0`.
pub fn eval_k<T: Real>(spec: &KernelSpec<T>, t: T) -> Result<T> {
    spec.k(t)
}

/// `(1 * l)(t)` for `t > 0`.
///
/// Closed form for fractional, tempered and distributed-order kernels. For
/// multi-term kernels the value is the discrete complementary resolvent on a
/// geometric grid ending at `t` (first-order accurate, about a percent).
pub fn eval_cum_l<T: Real>(spec: &KernelSpec<T>, t: T) -> Result<T> {
    check_t(t)?;
    if let Some(v) = spec.cum_l_closed(t)? {
        return Ok(v);
    }
    let grid = TimeGrid::geometric_to(t * T::lit(1e-9), t, 800)?;
    let w = convq::build_weights(spec, &grid)?;
    Ok(*w.cum_l()?.last().expect("nonempty grid"))
}

pub fn decay_class<T: Real>(spec: &KernelSpec<T>) -> DecayClass<T> {
    spec.decay_class()
}

/// Smallest node `t` such that `1/(2k(s)) <= log s <= 2 (1*l)(s)` holds at
/// every node `s >= t` (distributed-order kernel). `None` if the last node
/// already fails.
pub fn distributed_log_threshold<T: Real>(nodes: &[T]) -> Result<Option<T>> {
    let spec = KernelSpec::<T>::DistributedOrder;
    let mut found = None;
    for &t in nodes.iter().rev() {
        if t <= T::one() {
            break;
        }
        let lt = t.ln();
        let ok = T::one() / (T::lit(2.0) * spec.k(t)?) <= lt && lt <= T::lit(2.0) * eval_cum_l(&spec, t)?;
        if !ok {
            break;
        }
        found = Some(t);
    }
    Ok(found)
}
