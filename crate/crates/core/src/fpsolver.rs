//! Mass-conservative 1-D solver for `∂_t(k * [u - u_0]) = ∂_x(∂_x u + u V')`
//! on `[-L, L]` with zero-flux boundaries, plus the classical backward
//! difference scheme, and the experiment driver that records entropies and
//! their theoretical envelopes.

use serde::{Deserialize, Serialize};

use crate::convq::{self, Stencil, TimeGrid};
use crate::entropy::{self, EntropyGenerator, SteadyState1D};
use crate::error::{domain, usage, Error, Result};
use crate::kernels::{DecayClass, KernelSpec};
use crate::real::Real;
use crate::spectral::{self, OUModel};
use crate::specfun::gamma;

/// Cell-centred grid on `[-L, L]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpatialGrid<T> {
    half_width: T,
    cells: usize,
}

impl<T: Real> SpatialGrid<T> {
    pub fn new(half_width: T, cells: usize) -> Result<Self> {
        if !(half_width > T::zero() && half_width.is_finite()) || cells < 3 {
            return domain("spatial grid needs L > 0 and at least three cells");
        }
        Ok(SpatialGrid { half_width, cells })
    }

    pub fn half_width(&self) -> T {
        self.half_width
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn h(&self) -> T {
        T::lit(2.0) * self.half_width / T::from_usize_lossy(self.cells)
    }

    pub fn x(&self, i: usize) -> T {
        -self.half_width + (T::from_usize_lossy(i) + T::lit(0.5)) * self.h()
    }

    pub fn centers(&self) -> Vec<T> {
        (0..self.cells).map(|i| self.x(i)).collect()
    }
}

/// Density samples (cell averages) with mass `h Σ u_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Field1D<T> {
    pub grid: SpatialGrid<T>,
    pub values: Vec<T>,
}

impl<T: Real> Field1D<T> {
    pub fn new(grid: SpatialGrid<T>, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.cells() {
            return usage("field length differs from the number of cells");
        }
        Ok(Field1D { grid, values })
    }

    pub fn mass(&self) -> T {
        self.values.iter().copied().sum::<T>() * self.grid.h()
    }

    pub fn min(&self) -> T {
        self.values.iter().copied().fold(T::infinity(), T::min)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PotentialKind<T> {
    /// `V(x) = m x²/2`.
    Quadratic { m: T },
    /// Values at the cell centres of a given grid.
    Table { grid: SpatialGrid<T>, values: Vec<T> },
}

/// Confining potential with a certified lower bound `λ` for `V''`.
#[derive(Debug, Clone, PartialEq)]
pub struct Potential1D<T> {
    pub kind: PotentialKind<T>,
    pub lambda: T,
}

impl<T: Real> Potential1D<T> {
    pub fn quadratic(m: T) -> Result<Self> {
        if !(m > T::zero() && m.is_finite()) {
            return domain(format!("quadratic potential needs m > 0, got {m}"));
        }
        Ok(Potential1D {
            kind: PotentialKind::Quadratic { m },
            lambda: m,
        })
    }

    /// Tabulated potential; `λ` is checked against second differences.
    pub fn table(grid: SpatialGrid<T>, values: Vec<T>, lambda: T) -> Result<Self> {
        if values.len() != grid.cells() {
            return usage("potential table length differs from the number of cells");
        }
        if !(lambda > T::zero()) {
            return domain("lambda must be positive");
        }
        let h2 = grid.h() * grid.h();
        for w in values.windows(3) {
            let d2 = (w[0] - T::lit(2.0) * w[1] + w[2]) / h2;
            if d2 < lambda * (T::one() - T::lit(1e-8)) {
                return domain(format!("V'' = {d2} falls below lambda = {lambda}"));
            }
        }
        Ok(Potential1D {
            kind: PotentialKind::Table { grid, values },
            lambda,
        })
    }

    pub fn values_on(&self, grid: &SpatialGrid<T>) -> Result<Vec<T>> {
        match &self.kind {
            PotentialKind::Quadratic { m } => Ok(grid.centers().into_iter().map(|x| *m * x * x * T::lit(0.5)).collect()),
            PotentialKind::Table { grid: g, values } => {
                if g != grid {
                    return usage("potential table was built for a different grid");
                }
                Ok(values.clone())
            }
        }
    }
}

/// Bernoulli function `x/(e^x - 1)`.
fn bernoulli<T: Real>(x: T) -> T {
    if x.abs() < T::lit(1e-3) {
        let x2 = x * x;
        T::one() - x * T::lit(0.5) + x2 / T::lit(12.0) - x2 * x2 / T::lit(720.0)
    } else {
        x / x.exp_m1()
    }
}

/// Tridiagonal discretization of `u ↦ ∂_x(∂_x u + u V')`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialOperator<T> {
    pub lower: Vec<T>,
    pub diag: Vec<T>,
    pub upper: Vec<T>,
}

impl<T: Real> SpatialOperator<T> {
    /// Scharfetter-Gummel fluxes `J_{i+1/2} = (B(ΔV) u_i - B(-ΔV) u_{i+1})/h`
    /// with zero flux through both ends.
    pub fn from_potential_values(grid: &SpatialGrid<T>, v: &[T]) -> Result<Self> {
        let n = grid.cells();
        if v.len() != n {
            return usage("potential length differs from the number of cells");
        }
        let ih2 = T::one() / (grid.h() * grid.h());
        let mut lower = vec![T::zero(); n];
        let mut diag = vec![T::zero(); n];
        let mut upper = vec![T::zero(); n];
        for i in 0..n - 1 {
            let d = v[i + 1] - v[i];
            let bp = bernoulli(d) * ih2;
            let bm = bernoulli(-d) * ih2;
            diag[i] = diag[i] - bp;
            upper[i] = bm;
            lower[i + 1] = bp;
            diag[i + 1] = diag[i + 1] - bm;
        }
        Ok(SpatialOperator { lower, diag, upper })
    }

    pub fn apply(&self, u: &[T]) -> Vec<T> {
        let n = u.len();
        (0..n)
            .map(|i| {
                let mut s = self.diag[i] * u[i];
                if i > 0 {
                    s = s + self.lower[i] * u[i - 1];
                }
                if i + 1 < n {
                    s = s + self.upper[i] * u[i + 1];
                }
                s
            })
            .collect()
    }

    pub fn column_sums(&self) -> Vec<T> {
        let n = self.diag.len();
        (0..n)
            .map(|j| {
                let mut s = self.diag[j];
                if j > 0 {
                    s = s + self.upper[j - 1];
                }
                if j + 1 < n {
                    s = s + self.lower[j + 1];
                }
                s
            })
            .collect()
    }

    /// Solves `(c I - op) u = rhs` by tridiagonal elimination.
    pub fn solve_shifted(&self, c: T, rhs: &[T]) -> Result<Vec<T>> {
        let n = rhs.len();
        let mut cp = vec![T::zero(); n];
        let mut dp = vec![T::zero(); n];
        let b0 = c - self.diag[0];
        if !(b0 > T::zero()) {
            return Err(Error::Numerical(format!("nonpositive pivot {b0} in tridiagonal solve")));
        }
        cp[0] = -self.upper[0] / b0;
        dp[0] = rhs[0] / b0;
        for i in 1..n {
            let a = -self.lower[i];
            let m = (c - self.diag[i]) - a * cp[i - 1];
            if !(m > T::zero()) || !m.is_finite() {
                return Err(Error::Numerical(format!("pivot {m} at row {i} in tridiagonal solve")));
            }
            cp[i] = if i + 1 < n { -self.upper[i] / m } else { T::zero() };
            dp[i] = (rhs[i] - a * dp[i - 1]) / m;
        }
        let mut u = vec![T::zero(); n];
        u[n - 1] = dp[n - 1];
        for i in (0..n - 1).rev() {
            u[i] = dp[i] - cp[i] * u[i + 1];
        }
        // componentwise-relative residual
        let mut worst = T::zero();
        for i in 0..n {
            let mut r = (c - self.diag[i]) * u[i];
            let mut scale = ((c - self.diag[i]) * u[i]).abs() + rhs[i].abs();
            if i > 0 {
                r = r - self.lower[i] * u[i - 1];
                scale = scale + (self.lower[i] * u[i - 1]).abs();
            }
            if i + 1 < n {
                r = r - self.upper[i] * u[i + 1];
                scale = scale + (self.upper[i] * u[i + 1]).abs();
            }
            if scale > T::zero() {
                worst = worst.max((r - rhs[i]).abs() / scale);
            }
        }
        if worst > T::lit(1e-13).max(T::epsilon() * T::lit(64.0)) {
            let dom = (0..n)
                .map(|i| (c - self.diag[i]) / (self.lower[i].abs() + self.upper[i].abs()).max(T::min_positive_value()))
                .fold(T::infinity(), T::min);
            return Err(Error::Numerical(format!(
                "tridiagonal residual {:e} exceeds tolerance (diagonal dominance ratio {dom})",
                worst.to_f64_lossy()
            )));
        }
        Ok(u)
    }
}

pub fn build_spatial_operator<T: Real>(potential: &Potential1D<T>, grid: &SpatialGrid<T>) -> Result<SpatialOperator<T>> {
    SpatialOperator::from_potential_values(grid, &potential.values_on(grid)?)
}

/// One step of the non-local scheme: solves
/// `(A_nn I - op) u_n = r_n u_0 + Σ_{j<n} |A_nj| u_j` where `A` is the
/// derivative stencil and `r_n` its row sum. `history[j-1]` holds `u_j`.
pub fn step_nonlocal<T: Real>(
    u0: &Field1D<T>,
    history: &[Field1D<T>],
    weights: &convq::ConvolutionWeights<T>,
    op: &SpatialOperator<T>,
) -> Result<Field1D<T>> {
    let n = history.len() + 1;
    if n > weights.grid().steps() {
        return usage("history is longer than the time grid");
    }
    let d = weights.derivative()?;
    let rhs = memory_rhs(d, n, &u0.values, history.iter().map(|f| f.values.as_slice()));
    let values = op.solve_shifted(d.diag(n), &rhs)?;
    Ok(Field1D { grid: u0.grid, values })
}

fn memory_rhs<'a, T: Real>(d: &Stencil<T>, n: usize, u0: &[T], history: impl Iterator<Item = &'a [T]>) -> Vec<T> {
    let r = d.row_sum(n);
    let mut rhs: Vec<T> = u0.iter().map(|v| r * *v).collect();
    for (j, h) in history.enumerate().take(n - 1) {
        let c = -d.get(n, j + 1);
        for (a, b) in rhs.iter_mut().zip(h) {
            *a = *a + c * *b;
        }
    }
    rhs
}

/// One backward-difference step: solves `(I/τ - op) u_n = u_{n-1}/τ`.
pub fn step_backward_difference<T: Real>(u_prev: &Field1D<T>, tau: T, op: &SpatialOperator<T>) -> Result<Field1D<T>> {
    if !(tau > T::zero()) {
        return domain("tau must be positive");
    }
    let c = T::one() / tau;
    let rhs: Vec<T> = u_prev.values.iter().map(|v| *v * c).collect();
    Ok(Field1D {
        grid: u_prev.grid,
        values: op.solve_shifted(c, &rhs)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureComponent<T> {
    pub weight: T,
    pub mean: T,
    pub std: T,
}

/// Initial datum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialCondition<T> {
    /// `u_0 = (1 + a φ_k(√m x)) u_∞` with the normalized Hermite polynomial `φ_k`.
    SingleHermite { k: usize, amplitude: T },
    GaussianMixture { components: Vec<MixtureComponent<T>> },
    /// Cell values, e.g. read from a file.
    Table { values: Vec<T> },
    Steady,
}

impl<T: Real> InitialCondition<T> {
    pub fn validate(&self) -> Result<()> {
        if let InitialCondition::GaussianMixture { components } = self {
            if components.is_empty() {
                return domain("gaussian mixture needs at least one component");
            }
            for c in components {
                if !(c.weight > T::zero() && c.std > T::zero() && c.mean.is_finite()) {
                    return domain("mixture components need positive weight and std");
                }
            }
        }
        Ok(())
    }

    /// Density of a mixture at `x`.
    pub fn mixture_density(components: &[MixtureComponent<T>], x: T) -> T {
        let tw: T = components.iter().map(|c| c.weight).sum();
        let s2pi = T::TAU().sqrt();
        components
            .iter()
            .map(|c| {
                let z = (x - c.mean) / c.std;
                c.weight / tw * (-(z * z) * T::lit(0.5)).exp() / (s2pi * c.std)
            })
            .sum()
    }

    /// Samples the datum on the grid. Densities are floored at `1e-300` and
    /// renormalized; with `allow_signed` negative values are kept and the
    /// returned flag is set.
    pub fn discretize(
        &self,
        grid: &SpatialGrid<T>,
        potential: &Potential1D<T>,
        steady: &SteadyState1D<T>,
        allow_signed: bool,
    ) -> Result<(Field1D<T>, bool)> {
        self.validate()?;
        let xs = grid.centers();
        let mut u: Vec<T> = match self {
            InitialCondition::SingleHermite { k, amplitude } => {
                let m = match potential.kind {
                    PotentialKind::Quadratic { m } => m,
                    _ => return usage("single_hermite data needs a quadratic potential"),
                };
                let sm = m.sqrt();
                xs.iter()
                    .zip(&steady.values)
                    .map(|(x, g)| (T::one() + *amplitude * spectral::hermite_phi(*k, sm * *x)) * *g)
                    .collect()
            }
            InitialCondition::GaussianMixture { components } => {
                xs.iter().map(|x| Self::mixture_density(components, *x)).collect()
            }
            InitialCondition::Table { values } => {
                if values.len() != grid.cells() {
                    return usage(format!(
                        "initial table has {} values for {} cells",
                        values.len(),
                        grid.cells()
                    ));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return domain("initial table contains non-finite values");
                }
                values.clone()
            }
            InitialCondition::Steady => steady.values.clone(),
        };
        let signed = u.iter().any(|v| *v < T::zero());
        let keep_sign = signed && allow_signed;
        if !keep_sign {
            let floor = T::lit(1e-300).max(T::min_positive_value());
            for v in u.iter_mut() {
                *v = v.max(floor);
            }
        }
        let f = Field1D { grid: *grid, values: u };
        let m = f.mass();
        if !(m > T::zero() && m.is_finite()) {
            return domain("initial datum has no positive mass");
        }
        let values = f.values.iter().map(|v| *v / m).collect();
        Ok((Field1D { grid: *grid, values }, keep_sign))
    }
}

/// Time discretization of an experiment.
#[derive(Debug, Clone, PartialEq)]
pub enum Scheme<T> {
    Nonlocal { kernel: KernelSpec<T> },
    BackwardDifference,
    /// Hermite-mode evolution for the Ornstein-Uhlenbeck potential.
    Spectral { kernel: KernelSpec<T>, modes: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Experiment<T> {
    pub scheme: Scheme<T>,
    pub potential: Potential1D<T>,
    pub generators: Vec<EntropyGenerator<T>>,
    pub space: SpatialGrid<T>,
    pub time: TimeGrid<T>,
    pub initial: InitialCondition<T>,
    pub allow_signed: bool,
    /// Relative slack for envelope checks.
    pub envelope_slack: T,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub invariant: String,
    pub generator: Option<String>,
    pub node: usize,
    pub t: f64,
    pub value: f64,
    pub bound: f64,
}

/// Constants `C` with `H(t) <= C H(u_0) / (1 + t^{αβ})` derived from the
/// lower bound `g_{1+α}` of `(1*l)` for fractional kernels.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeFracConstants<T> {
    pub alpha: T,
    /// Part A: `max(1, Γ(1+α)/(2λ))`, exponent `α`.
    pub part_a: T,
    /// Part B per power generator: `max(1, (βΓ(1+α)/(2λ))^β)`, exponent `αβ`.
    pub part_b: Vec<Option<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult<T> {
    pub times: Vec<T>,
    pub generators: Vec<EntropyGenerator<T>>,
    /// `entropy_series[g][n]`.
    pub entropy_series: Vec<Vec<T>>,
    pub l1_distance: Vec<T>,
    pub mass_error: Vec<T>,
    pub min_value: Vec<T>,
    /// Part A envelope divided by `H(u_0)`.
    pub envelope_a: Vec<T>,
    /// Part B envelope divided by `H(u_0)`, power generators only.
    pub envelope_b: Vec<Option<Vec<T>>>,
    /// Absolute bound per generator: Part B for power, Part A otherwise.
    pub theoretical_upper: Vec<Vec<T>>,
    pub timefrac: Option<TimeFracConstants<T>>,
    pub signed: bool,
    pub violations: Vec<Violation>,
    pub final_values: Vec<T>,
}

impl<T: Real> SimResult<T> {
    pub fn csv_header(&self) -> Vec<String> {
        let mut h = vec!["t".to_string()];
        h.extend(self.generators.iter().map(|g| g.label()));
        h.push("l1".into());
        h.push("envelopeA".into());
        for g in &self.generators {
            if let Some(b) = g.beta() {
                h.push(format!("envelopeB_{b}"));
            }
        }
        h.push("mass_err".into());
        h
    }

    pub fn csv_rows(&self) -> Vec<Vec<T>> {
        (0..self.times.len())
            .map(|n| {
                let mut r = vec![self.times[n]];
                r.extend(self.entropy_series.iter().map(|s| s[n]));
                r.push(self.l1_distance[n]);
                r.push(self.envelope_a[n]);
                for e in self.envelope_b.iter().flatten() {
                    r.push(e[n]);
                }
                r.push(self.mass_error[n]);
                r
            })
            .collect()
    }

    /// Smallest `(bound - H)/H(u_0)` per generator over all nodes.
    pub fn envelope_margins(&self) -> Vec<T> {
        self.entropy_series
            .iter()
            .zip(&self.theoretical_upper)
            .map(|(h, b)| {
                let h0 = h[0].max(T::min_positive_value());
                h.iter().zip(b).map(|(x, y)| (*y - *x) / h0).fold(T::infinity(), T::min)
            })
            .collect()
    }
}

struct Envelopes<T> {
    a: Vec<T>,
    b: Vec<Option<Vec<T>>>,
}

fn nonlocal_envelopes<T: Real>(
    weights: &convq::ConvolutionWeights<T>,
    lambda: T,
    gens: &[EntropyGenerator<T>],
) -> Result<Envelopes<T>> {
    let two = T::lit(2.0);
    let a = convq::solve_relaxation(weights, two * lambda)?.values;
    let b = gens
        .iter()
        .map(|g| match g.beta() {
            Some(beta) => convq::solve_relaxation(weights, two * lambda / beta)
                .map(|c| Some(c.values.iter().map(|s| s.powf(beta)).collect())),
            None => Ok(None),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Envelopes { a, b })
}

fn discrete_envelopes<T: Real>(grid: &TimeGrid<T>, lambda: T, gens: &[EntropyGenerator<T>]) -> Result<Envelopes<T>> {
    let tau = match grid.kind() {
        convq::GridKind::Uniform { step, .. } => step,
        _ => return usage("the backward difference scheme needs a uniform time grid"),
    };
    let two = T::lit(2.0);
    let n = grid.steps();
    let fa = T::one() / (T::one() + two * tau * lambda);
    let a = (0..=n).map(|i| fa.powi(i as i32)).collect();
    let b = gens
        .iter()
        .map(|g| {
            g.beta().map(|beta| {
                let f = (T::one() / (T::one() + two * tau * lambda / beta)).powf(beta);
                (0..=n).map(|i| f.powi(i as i32)).collect()
            })
        })
        .collect();
    Ok(Envelopes { a, b })
}

/// Runs an experiment and records entropies, distances and envelopes.
pub fn run_experiment<T: Real>(exp: &Experiment<T>) -> Result<SimResult<T>> {
    if exp.generators.is_empty() {
        return usage("at least one entropy generator is required");
    }
    for g in &exp.generators {
        g.validate()?;
    }
    let lambda = exp.potential.lambda;
    let vals = exp.potential.values_on(&exp.space)?;
    let steady = SteadyState1D::from_potential_values(exp.space, &vals)?;
    let times = exp.time.nodes().to_vec();
    let nt = times.len();

    if let Scheme::Spectral { kernel, modes } = &exp.scheme {
        return run_spectral(exp, kernel, *modes);
    }

    let (u0, signed) = exp.initial.discretize(&exp.space, &exp.potential, &steady, exp.allow_signed)?;
    if signed && exp.generators.iter().any(|g| !g.is_quadratic()) {
        return usage("signed initial data only admit the quadratic entropy");
    }
    let op = SpatialOperator::from_potential_values(&exp.space, &vals)?;

    let mut rec = Recorder::new(exp, &steady, nt);
    rec.push(&u0)?;
    let (env, kernel) = match &exp.scheme {
        Scheme::Nonlocal { kernel } => {
            let weights = convq::build_weights(kernel, &exp.time)?;
            let d = weights.derivative()?;
            let mut history: Vec<Vec<T>> = Vec::with_capacity(nt - 1);
            for n in 1..nt {
                let rhs = memory_rhs(d, n, &u0.values, history.iter().map(|h| h.as_slice()));
                let u = op.solve_shifted(d.diag(n), &rhs)?;
                let f = Field1D { grid: exp.space, values: u };
                rec.push(&f)?;
                history.push(f.values);
            }
            (nonlocal_envelopes(&weights, lambda, &exp.generators)?, Some(kernel))
        }
        Scheme::BackwardDifference => {
            let env = discrete_envelopes(&exp.time, lambda, &exp.generators)?;
            let tau = exp.time.step(1);
            let mut u = u0.clone();
            for _ in 1..nt {
                u = step_backward_difference(&u, tau, &op)?;
                rec.push(&u)?;
            }
            (env, None)
        }
        Scheme::Spectral { .. } => unreachable!(),
    };
    rec.finish(exp, &times, env, kernel, signed)
}

struct Recorder<'a, T> {
    gens: &'a [EntropyGenerator<T>],
    steady: &'a SteadyState1D<T>,
    entropy: Vec<Vec<T>>,
    l1: Vec<T>,
    mass: Vec<T>,
    min: Vec<T>,
    last: Vec<T>,
}

impl<'a, T: Real> Recorder<'a, T> {
    fn new(exp: &'a Experiment<T>, steady: &'a SteadyState1D<T>, nt: usize) -> Self {
        Recorder {
            gens: &exp.generators,
            steady,
            entropy: vec![Vec::with_capacity(nt); exp.generators.len()],
            l1: Vec::with_capacity(nt),
            mass: Vec::with_capacity(nt),
            min: Vec::with_capacity(nt),
            last: Vec::new(),
        }
    }

    fn push(&mut self, u: &Field1D<T>) -> Result<()> {
        let m = u.mass();
        self.mass.push(m - T::one());
        self.min.push(u.min());
        for (g, s) in self.gens.iter().zip(self.entropy.iter_mut()) {
            s.push(entropy::relative_entropy(g, u, self.steady)?);
        }
        self.l1.push(entropy::l1_distance(u, self.steady)?);
        self.last = u.values.clone();
        Ok(())
    }

    fn finish(
        self,
        exp: &Experiment<T>,
        times: &[T],
        env: Envelopes<T>,
        kernel: Option<&KernelSpec<T>>,
        signed: bool,
    ) -> Result<SimResult<T>> {
        assemble(
            exp,
            times,
            self.entropy,
            self.l1,
            self.mass,
            self.min,
            env,
            kernel,
            signed,
            self.last,
            !matches!(exp.scheme, Scheme::Spectral { .. }),
        )
    }
}

#[allow(clippy::too_many_arguments)]
fn assemble<T: Real>(
    exp: &Experiment<T>,
    times: &[T],
    entropy: Vec<Vec<T>>,
    l1: Vec<T>,
    mass: Vec<T>,
    min: Vec<T>,
    env: Envelopes<T>,
    kernel: Option<&KernelSpec<T>>,
    signed: bool,
    last: Vec<T>,
    check_conservation: bool,
) -> Result<SimResult<T>> {
    let lambda = exp.potential.lambda;
    let slack = T::one() + exp.envelope_slack;
    let gens = &exp.generators;
    let mut violations = Vec::new();
    let mut upper = Vec::with_capacity(gens.len());
    let timefrac = match kernel {
        Some(KernelSpec::Fractional { alpha }) => {
            let ga = gamma(T::one() + *alpha)?;
            let two = T::lit(2.0);
            Some(TimeFracConstants {
                alpha: *alpha,
                part_a: T::one().max(ga / (two * lambda)),
                part_b: gens
                    .iter()
                    .map(|g| g.beta().map(|b| T::one().max((b * ga / (two * lambda)).powf(b))))
                    .collect(),
            })
        }
        _ => None,
    };
    let f64_of = |x: T| x.to_f64_lossy();
    let (a_name, b_name) = match exp.scheme {
        Scheme::BackwardDifference => ("discrete_a", "discrete_b"),
        _ => ("part_a", "part_b"),
    };
    for (gi, g) in gens.iter().enumerate() {
        let h = &entropy[gi];
        let h0 = h[0];
        // rounding noise in u accumulates over the steps and its entropy is O(noise²);
        // values below (1e5 ε)² are not resolved
        let floor = (T::lit(1e5) * T::epsilon()).powi(2);
        let abs_tol = (T::lit(1e-13) * h0).max(floor);
        let label = Some(g.label());
        let mut push = |inv: &str, n: usize, value: T, bound: T| {
            violations.push(Violation {
                invariant: inv.to_string(),
                generator: label.clone(),
                node: n,
                t: f64_of(times[n]),
                value: f64_of(value),
                bound: f64_of(bound),
            });
        };
        let mut up = Vec::with_capacity(h.len());
        for n in 0..h.len() {
            let a = env.a[n] * h0;
            if h[n] > a * slack + abs_tol {
                push(a_name, n, h[n], a);
            }
            let mut bound = a;
            if let Some(b) = &env.b[gi] {
                let bb = b[n] * h0;
                if h[n] > bb * slack + abs_tol {
                    push(b_name, n, h[n], bb);
                }
                bound = bb;
            }
            up.push(bound);
            if n > 0 && h[n] > h[n - 1] + T::lit(1e-10) {
                push("monotone", n, h[n], h[n - 1]);
            }
            let ckp = entropy::ckp_bound(g, h[n]);
            if l1[n] > ckp + T::lit(1e-8) {
                push("ckp", n, l1[n], ckp);
            }
            if let Some(tf) = &timefrac {
                let t = times[n];
                let ca = tf.part_a * h0 / (T::one() + t.powf(tf.alpha));
                if h[n] > ca * slack + abs_tol {
                    push("timefrac_a", n, h[n], ca);
                }
                if let (Some(cb), Some(beta)) = (tf.part_b[gi], g.beta()) {
                    let b = cb * h0 / (T::one() + t.powf(tf.alpha * beta));
                    if h[n] > b * slack + abs_tol {
                        push("timefrac_b", n, h[n], b);
                    }
                }
            }
        }
        upper.push(up);
    }
    if check_conservation {
        for n in 0..times.len() {
            if mass[n].abs() > T::lit(1e-12) {
                violations.push(Violation {
                    invariant: "mass".into(),
                    generator: None,
                    node: n,
                    t: f64_of(times[n]),
                    value: f64_of(mass[n]),
                    bound: 1e-12,
                });
            }
            if !signed && min[n] < T::zero() {
                violations.push(Violation {
                    invariant: "positivity".into(),
                    generator: None,
                    node: n,
                    t: f64_of(times[n]),
                    value: f64_of(min[n]),
                    bound: 0.0,
                });
            }
        }
    }
    Ok(SimResult {
        times: times.to_vec(),
        generators: gens.clone(),
        entropy_series: entropy,
        l1_distance: l1,
        mass_error: mass,
        min_value: min,
        envelope_a: env.a,
        envelope_b: env.b,
        theoretical_upper: upper,
        timefrac,
        signed,
        violations,
        final_values: last,
    })
}

fn run_spectral<T: Real>(exp: &Experiment<T>, kernel: &KernelSpec<T>, modes: usize) -> Result<SimResult<T>> {
    match exp.potential.kind {
        PotentialKind::Quadratic { m } if m == T::one() => {}
        _ => return usage("the spectral scheme is available for V(x) = x²/2 only"),
    }
    let model = OUModel::new(modes)?;
    let v0: Vec<T> = match &exp.initial {
        InitialCondition::SingleHermite { k, amplitude } => {
            if *k > modes {
                return usage("Hermite index exceeds the basis size");
            }
            model.nodes().iter().map(|x| T::one() + *amplitude * spectral::hermite_phi(*k, *x)).collect()
        }
        InitialCondition::GaussianMixture { components } => {
            exp.initial.validate()?;
            if components.iter().any(|c| c.std >= T::SQRT_2()) {
                return usage("mixture components need std < sqrt(2) to lie in L²(u_∞)");
            }
            let s2pi = T::TAU().sqrt();
            model
                .nodes()
                .iter()
                .map(|x| {
                    let g = (-(*x * *x) * T::lit(0.5)).exp() / s2pi;
                    InitialCondition::mixture_density(components, *x) / g
                })
                .collect()
        }
        InitialCondition::Steady => vec![T::one(); model.nodes().len()],
        InitialCondition::Table { .. } => return usage("tabulated data cannot be used with the spectral scheme"),
    };
    let coeffs = spectral::project(&v0, &model)?;
    let signed = !coeffs.is_density();
    if signed && !exp.allow_signed {
        return usage("initial datum is signed; set allow_signed to use it");
    }
    if signed && exp.generators.iter().any(|g| !g.is_quadratic()) {
        return usage("signed initial data only admit the quadratic entropy");
    }
    let weights = convq::build_weights(kernel, &exp.time)?;
    let table = spectral::RelaxationTable::new(&weights, &coeffs)?;
    let times = exp.time.nodes().to_vec();
    let nt = times.len();
    let mut entropy = vec![Vec::with_capacity(nt); exp.generators.len()];
    let mut l1 = Vec::with_capacity(nt);
    let mut last = Vec::new();
    for n in 0..nt {
        let c = table.coeffs_at(n);
        let v = spectral::reconstruct(&c, &model);
        for (g, s) in exp.generators.iter().zip(entropy.iter_mut()) {
            s.push(spectral::quadrature_entropy(g, &v, &model)?);
        }
        l1.push(model.weights().iter().zip(&v).map(|(w, x)| *w * (*x - T::one()).abs()).sum());
        last = v;
    }
    let mass = vec![coeffs.coeffs[0] - T::one(); nt];
    let min = vec![T::zero(); nt];
    let env = nonlocal_envelopes(&weights, exp.potential.lambda, &exp.generators)?;
    assemble(exp, &times, entropy, l1, mass, min, env, Some(kernel), signed, last, false)
}

/// Least-squares decay fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayFit<T> {
    /// Algebraic: log-log slope. Exponential: semilog slope. Logarithmic: `c`
    /// in `value ≈ c / log t`.
    pub rate: T,
    pub r_squared: T,
    pub points: usize,
}

pub fn fit_decay_rate<T: Real>(series: &[(T, T)], class: &DecayClass<T>, window: (T, T)) -> Result<DecayFit<T>> {
    let pts: Vec<(T, T)> = series
        .iter()
        .copied()
        .filter(|(t, _)| *t >= window.0 && *t <= window.1)
        .collect();
    if pts.len() < 8 {
        return usage(format!("fit window holds {} points, need at least 8", pts.len()));
    }
    if pts.iter().any(|(_, v)| !(*v > T::zero())) {
        return domain("values must be positive on the fit window");
    }
    let (xs, ys): (Vec<T>, Vec<T>) = match class {
        DecayClass::Algebraic { .. } => {
            if pts.iter().any(|(t, _)| !(*t > T::zero())) {
                return domain("algebraic fits need t > 0");
            }
            pts.iter().map(|(t, v)| (t.ln(), v.ln())).unzip()
        }
        DecayClass::Exponential => pts.iter().map(|(t, v)| (*t, v.ln())).unzip(),
        DecayClass::Logarithmic => {
            if pts.iter().any(|(t, _)| !(*t > T::one())) {
                return domain("logarithmic fits need t > 1");
            }
            let xs: Vec<T> = pts.iter().map(|(t, _)| T::one() / t.ln()).collect();
            let ys: Vec<T> = pts.iter().map(|(_, v)| *v).collect();
            let sxy: T = xs.iter().zip(&ys).map(|(x, y)| *x * *y).sum();
            let sxx: T = xs.iter().map(|x| *x * *x).sum();
            let c = sxy / sxx;
            let mean = ys.iter().copied().sum::<T>() / T::from_usize_lossy(ys.len());
            let ss_res: T = xs.iter().zip(&ys).map(|(x, y)| (*y - c * *x).powi(2)).sum();
            let ss_tot: T = ys.iter().map(|y| (*y - mean).powi(2)).sum();
            return Ok(DecayFit {
                rate: c,
                r_squared: r2(ss_res, ss_tot),
                points: pts.len(),
            });
        }
    };
    let n = T::from_usize_lossy(xs.len());
    let mx = xs.iter().copied().sum::<T>() / n;
    let my = ys.iter().copied().sum::<T>() / n;
    let sxy: T = xs.iter().zip(&ys).map(|(x, y)| (*x - mx) * (*y - my)).sum();
    let sxx: T = xs.iter().map(|x| (*x - mx).powi(2)).sum();
    if !(sxx > T::zero()) {
        return domain("fit window has no spread in t");
    }
    let slope = sxy / sxx;
    let b = my - slope * mx;
    let ss_res: T = xs.iter().zip(&ys).map(|(x, y)| (*y - b - slope * *x).powi(2)).sum();
    let ss_tot: T = ys.iter().map(|y| (*y - my).powi(2)).sum();
    Ok(DecayFit {
        rate: slope,
        r_squared: r2(ss_res, ss_tot),
        points: pts.len(),
    })
}

fn r2<T: Real>(ss_res: T, ss_tot: T) -> T {
    if ss_tot > T::zero() {
        T::one() - ss_res / ss_tot
    } else {
        T::one()
    }
}
