//! Generating functions, relative entropies and the functional inequalities
//! they satisfy (admissibility, Csiszár-Kullback-Pinsker, convex Sobolev,
//! the two-entropy Hölder bound and the pointwise estimate behind it).

use serde::{Deserialize, Serialize};

use crate::convq::ConvexFn;
use crate::error::{domain, usage, Result};
use crate::fpsolver::{Field1D, SpatialGrid};
use crate::real::Real;

/// Generating function `φ` of a relative entropy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum EntropyGenerator<T> {
    /// `φ_β(x) = x^β - 1 - β(x - 1)`, `1 < β <= 2`.
    #[serde(rename = "power")]
    PowerBeta { beta: T },
    /// `φ(x) = x(log x - 1) + 1`.
    #[serde(rename = "log")]
    Logarithmic,
}

// |x - 1| below this switches φ to its Taylor series around 1
const NEAR_ONE: f64 = 1e-2;

impl<T: Real> EntropyGenerator<T> {
    pub fn power(beta: T) -> Result<Self> {
        let g = EntropyGenerator::PowerBeta { beta };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if let EntropyGenerator::PowerBeta { beta } = self {
            if !(*beta > T::one() && *beta <= T::lit(2.0)) {
                return domain(format!("beta must lie in (1, 2], got {beta}"));
            }
        }
        Ok(())
    }

    pub fn beta(&self) -> Option<T> {
        match self {
            EntropyGenerator::PowerBeta { beta } => Some(*beta),
            EntropyGenerator::Logarithmic => None,
        }
    }

    pub fn is_quadratic(&self) -> bool {
        matches!(self, EntropyGenerator::PowerBeta { beta } if *beta == T::lit(2.0))
    }

    /// Column label used in CSV output: `H_beta1.5`, `H_log`.
    pub fn label(&self) -> String {
        match self {
            EntropyGenerator::PowerBeta { beta } => format!("H_beta{beta}"),
            EntropyGenerator::Logarithmic => "H_log".to_string(),
        }
    }

    /// `φ(x)` for `x >= 0`.
    pub fn phi(&self, x: T) -> Result<T> {
        if x.is_nan() || x < T::zero() {
            if self.is_quadratic() && x.is_finite() {
                // (x - 1)² extends to signed arguments
                return Ok(self.phi_unchecked(x));
            }
            return domain(format!("entropy generators need x >= 0, got {x}"));
        }
        Ok(self.phi_unchecked(x))
    }

    pub fn phi_unchecked(&self, x: T) -> T {
        let d = x - T::one();
        match self {
            EntropyGenerator::PowerBeta { beta } => {
                let b = *beta;
                if b == T::lit(2.0) {
                    return d * d;
                }
                if d.abs() < T::lit(NEAR_ONE) {
                    // Σ_{k>=2} C(β, k) d^k
                    let mut c = b * (b - T::one()) * T::lit(0.5);
                    let mut p = d * d;
                    let mut s = c * p;
                    for k in 2..14usize {
                        let kf = T::from_usize_lossy(k);
                        c = c * (b - kf) / (kf + T::one());
                        p = p * d;
                        s = s + c * p;
                    }
                    return s;
                }
                if x == T::zero() {
                    return b - T::one();
                }
                x.powf(b) - T::one() - b * d
            }
            EntropyGenerator::Logarithmic => {
                if d.abs() < T::lit(NEAR_ONE) {
                    // Σ_{k>=2} (-1)^k d^k / (k(k-1))
                    let mut p = d;
                    let mut s = T::zero();
                    for k in 2..16usize {
                        p = -p * d;
                        let kf = T::from_usize_lossy(k);
                        s = s - p / (kf * (kf - T::one()));
                    }
                    return s;
                }
                if x == T::zero() {
                    return T::one();
                }
                x * (x.ln() - T::one()) + T::one()
            }
        }
    }

    pub fn d1(&self, x: T) -> T {
        match self {
            EntropyGenerator::PowerBeta { beta } => *beta * (x.powf(*beta - T::one()) - T::one()),
            EntropyGenerator::Logarithmic => x.ln(),
        }
    }

    pub fn d2(&self, x: T) -> T {
        match self {
            EntropyGenerator::PowerBeta { beta } => {
                let b = *beta;
                b * (b - T::one()) * x.powf(b - T::lit(2.0))
            }
            EntropyGenerator::Logarithmic => T::one() / x,
        }
    }

    pub fn d3(&self, x: T) -> T {
        match self {
            EntropyGenerator::PowerBeta { beta } => {
                let b = *beta;
                b * (b - T::one()) * (b - T::lit(2.0)) * x.powf(b - T::lit(3.0))
            }
            EntropyGenerator::Logarithmic => -T::one() / (x * x),
        }
    }

    pub fn d4(&self, x: T) -> T {
        match self {
            EntropyGenerator::PowerBeta { beta } => {
                let b = *beta;
                b * (b - T::one()) * (b - T::lit(2.0)) * (b - T::lit(3.0)) * x.powf(b - T::lit(4.0))
            }
            EntropyGenerator::Logarithmic => T::lit(2.0) / (x * x * x),
        }
    }

    /// `½ φ'' φ'''' - (φ''')²`, scaled by `(φ'')²` so that values of
    /// different magnitude are comparable. Nonnegative for admissible generators.
    pub fn admissibility_margin(&self, x: T) -> T {
        let (a, b, c) = (self.d2(x), self.d3(x), self.d4(x));
        (T::lit(0.5) * a * c - b * b) / (a * a)
    }
}

impl<T: Real> ConvexFn<T> for EntropyGenerator<T> {
    fn value(&self, x: T) -> T {
        self.phi_unchecked(x)
    }
    fn deriv(&self, x: T) -> T {
        self.d1(x)
    }
}

/// `φ(x)`; negative `x` is a domain error.
pub fn phi_eval<T: Real>(gen: &EntropyGenerator<T>, x: T) -> Result<T> {
    if x < T::zero() {
        return domain(format!("phi_eval needs x >= 0, got {x}"));
    }
    gen.phi(x)
}

/// `g(y) = (β-1) y^{β-2} + (2-β) y^{β-1} - 1`.
pub fn aux_g<T: Real>(beta: T, y: T) -> T {
    (beta - T::one()) * y.powf(beta - T::lit(2.0)) + (T::lit(2.0) - beta) * y.powf(beta - T::one()) - T::one()
}

/// Discrete Gibbs state `u_∞ = M e^{-V}` with unit discrete mass.
#[derive(Debug, Clone, PartialEq)]
pub struct SteadyState1D<T> {
    pub grid: SpatialGrid<T>,
    pub values: Vec<T>,
    pub normalization: T,
}

impl<T: Real> SteadyState1D<T> {
    /// Builds `u_∞` from potential values at the cell centres.
    pub fn from_potential_values(grid: SpatialGrid<T>, potential: &[T]) -> Result<Self> {
        if potential.len() != grid.cells() {
            return usage("potential table length differs from the number of cells");
        }
        // shift by min V so the exponentials cannot all underflow
        let vmin = potential.iter().copied().fold(T::infinity(), T::min);
        let raw: Vec<T> = potential.iter().map(|v| (vmin - *v).exp()).collect();
        let z: T = raw.iter().copied().sum::<T>() * grid.h();
        if !(z > T::zero() && z.is_finite()) {
            return domain("exp(-V) is not integrable on the grid");
        }
        let values = raw.iter().map(|r| *r / z).collect();
        Ok(SteadyState1D {
            grid,
            values,
            normalization: vmin.exp() / z,
        })
    }

    pub fn mass(&self) -> T {
        self.values.iter().copied().sum::<T>() * self.grid.h()
    }

    pub fn as_field(&self) -> Field1D<T> {
        Field1D {
            grid: self.grid.clone(),
            values: self.values.clone(),
        }
    }
}

fn check_pair<T: Real>(u: &Field1D<T>, steady: &SteadyState1D<T>) -> Result<()> {
    if u.grid != steady.grid || u.values.len() != steady.values.len() {
        return usage("density and steady state live on different grids");
    }
    Ok(())
}

fn check_mass<T: Real>(u: &Field1D<T>) -> Result<()> {
    let m = u.mass();
    if (m - T::one()).abs() > T::lit(1e-8) {
        return usage(format!("density has mass {m}, expected 1"));
    }
    Ok(())
}

/// `H_φ(u) = ∫ φ(u/u_∞) u_∞`, midpoint (cell) quadrature.
pub fn relative_entropy<T: Real>(gen: &EntropyGenerator<T>, u: &Field1D<T>, steady: &SteadyState1D<T>) -> Result<T> {
    check_pair(u, steady)?;
    check_mass(u)?;
    let mut s = T::zero();
    for (ui, gi) in u.values.iter().zip(&steady.values) {
        s = s + gen.phi(*ui / *gi)? * *gi;
    }
    Ok((s * u.grid.h()).max(T::zero()))
}

/// `∫ |u - u_∞|`.
pub fn l1_distance<T: Real>(u: &Field1D<T>, steady: &SteadyState1D<T>) -> Result<T> {
    check_pair(u, steady)?;
    Ok(u.values.iter().zip(&steady.values).map(|(a, b)| (*a - *b).abs()).sum::<T>() * u.grid.h())
}

/// `sqrt(2 H / φ''(1))`, an upper bound for the L¹ distance.
pub fn ckp_bound<T: Real>(gen: &EntropyGenerator<T>, entropy_value: T) -> T {
    (T::lit(2.0) * entropy_value.max(T::zero()) / gen.d2(T::one())).sqrt()
}

/// `(1/(2λ)) ∫ φ''(v) |v'|² u_∞ - ∫ φ(v) u_∞` with `v = u/u_∞`, second-order
/// differences (one-sided at the boundary).
pub fn convex_sobolev_residual<T: Real>(
    gen: &EntropyGenerator<T>,
    u: &Field1D<T>,
    steady: &SteadyState1D<T>,
    lambda: T,
) -> Result<T> {
    check_pair(u, steady)?;
    if !(lambda > T::zero()) {
        return domain("lambda must be positive");
    }
    let n = u.values.len();
    if n < 3 {
        return usage("need at least three cells");
    }
    let h = u.grid.h();
    let v: Vec<T> = u.values.iter().zip(&steady.values).map(|(a, b)| *a / *b).collect();
    let mut lhs = T::zero();
    let mut rhs = T::zero();
    let two = T::lit(2.0);
    for i in 0..n {
        let dv = if i == 0 {
            (-T::lit(3.0) * v[0] + T::lit(4.0) * v[1] - v[2]) / (two * h)
        } else if i == n - 1 {
            (T::lit(3.0) * v[n - 1] - T::lit(4.0) * v[n - 2] + v[n - 3]) / (two * h)
        } else {
            (v[i + 1] - v[i - 1]) / (two * h)
        };
        lhs = lhs + gen.phi(v[i])? * steady.values[i];
        rhs = rhs + gen.d2(v[i]) * dv * dv * steady.values[i];
    }
    Ok((rhs / (two * lambda) - lhs) * h)
}

/// `F(x, y) = φ(x)^{(β-1)/β} φ(y)^{1/β} - (x^{β-1} y + (1-β) x - y + β - 1)`.
pub fn pointwise_f<T: Real>(beta: T, x: T, y: T) -> T {
    let g = EntropyGenerator::PowerBeta { beta };
    let (px, py) = (g.phi_unchecked(x).max(T::zero()), g.phi_unchecked(y).max(T::zero()));
    let first = if px == T::zero() || py == T::zero() {
        T::zero()
    } else {
        px.powf((beta - T::one()) / beta) * py.powf(T::one() / beta)
    };
    let xb = if x == T::zero() { T::zero() } else { x.powf(beta - T::one()) };
    first - (xb * y + (T::one() - beta) * x - y + beta - T::one())
}

/// `(∫ (h1^{β-1} h2 - h1) g, E(f1|g)^{(β-1)/β} E(f2|g)^{1/β})` with `h_i = f_i/g`.
pub fn entropy_holder_bound<T: Real>(
    beta: T,
    f1: &Field1D<T>,
    f2: &Field1D<T>,
    g: &SteadyState1D<T>,
) -> Result<(T, T)> {
    check_pair(f1, g)?;
    check_pair(f2, g)?;
    let gen = EntropyGenerator::power(beta)?;
    let mut lhs = T::zero();
    for ((a, b), w) in f1.values.iter().zip(&f2.values).zip(&g.values) {
        let (h1, h2) = (*a / *w, *b / *w);
        let p = if h1 == T::zero() { T::zero() } else { h1.powf(beta - T::one()) };
        lhs = lhs + (p * h2 - h1) * *w;
    }
    lhs = lhs * g.grid.h();
    let e1 = relative_entropy(&gen, f1, g)?;
    let e2 = relative_entropy(&gen, f2, g)?;
    let rhs = e1.powf((beta - T::one()) / beta) * e2.powf(T::one() / beta);
    Ok((lhs, rhs))
}

/// `(∫ (u/u_∞)^β u_∞)^{1/β}`, nondecreasing in β.
pub fn power_mean<T: Real>(u: &Field1D<T>, steady: &SteadyState1D<T>, beta: T) -> Result<T> {
    check_pair(u, steady)?;
    let s: T = u
        .values
        .iter()
        .zip(&steady.values)
        .map(|(a, b)| (*a / *b).powf(beta) * *b)
        .sum::<T>()
        * u.grid.h();
    Ok(s.powf(T::one() / beta))
}

/// One row of an inequality sweep: `margin = rhs - lhs`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCase {
    pub case_id: String,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
}
