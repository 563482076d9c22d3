//! Discrete calculus for `∂_t(k * ·)`: time grids, convolution weights, the
//! relaxation solver and runtime checks of the discrete identities.
//!
//! All stencils are lower triangular over the nodes `t_1..t_N`. With `L` the
//! interval masses of `l`, `A` the discrete derivative `∂_t(k * ·)` and
//! `J` the rectangle integral, the weights satisfy `A L = I` and `K = J A`
//! exactly, which is the discrete form of `k * l = 1`.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{domain, usage, Error, Result};
use crate::kernels::{KernelSpec, Representation};
use crate::quad;
use crate::real::Real;
use crate::specfun::{g_beta_pos, gamma};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GridKind<T> {
    Uniform { step: T, steps: usize },
    Geometric { first_step: T, ratio: T, steps: usize },
}

/// Time nodes `0 = t_0 < t_1 < ... < t_N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridKind<T>", into = "GridKind<T>")]
#[serde(bound(
    serialize = "T: Real + Serialize",
    deserialize = "T: Real + Deserialize<'de>"
))]
pub struct TimeGrid<T> {
    kind: GridKind<T>,
    nodes: Vec<T>,
}

impl<T: Real> TryFrom<GridKind<T>> for TimeGrid<T> {
    type Error = Error;
    fn try_from(kind: GridKind<T>) -> Result<Self> {
        TimeGrid::new(kind)
    }
}

impl<T: Real> From<TimeGrid<T>> for GridKind<T> {
    fn from(g: TimeGrid<T>) -> Self {
        g.kind
    }
}

impl<T: Real> TimeGrid<T> {
    pub fn new(kind: GridKind<T>) -> Result<Self> {
        let nodes = match kind {
            GridKind::Uniform { step, steps } => {
                if !(step > T::zero() && step.is_finite()) || steps == 0 {
                    return domain("uniform grid needs a positive step and at least one step");
                }
                (0..=steps).map(|n| step * T::from_usize_lossy(n)).collect()
            }
            GridKind::Geometric {
                first_step,
                ratio,
                steps,
            } => {
                if !(first_step > T::zero() && first_step.is_finite()) || steps == 0 {
                    return domain("geometric grid needs a positive first step and at least one step");
                }
                if !(ratio > T::one() && ratio.is_finite()) {
                    return domain(format!("geometric ratio must exceed 1, got {ratio}"));
                }
                let mut nodes = Vec::with_capacity(steps + 1);
                nodes.push(T::zero());
                let mut h = first_step;
                let mut t = T::zero();
                for _ in 0..steps {
                    t = t + h;
                    nodes.push(t);
                    h = h * ratio;
                }
                nodes
            }
        };
        if nodes.windows(2).any(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
            return domain("grid nodes are not strictly increasing and finite");
        }
        Ok(TimeGrid { kind, nodes })
    }

    pub fn uniform(step: T, steps: usize) -> Result<Self> {
        Self::new(GridKind::Uniform { step, steps })
    }

    /// Uniform grid with `steps` steps ending at `t_max`.
    pub fn uniform_to(t_max: T, steps: usize) -> Result<Self> {
        if steps == 0 {
            return domain("grid needs at least one step");
        }
        Self::uniform(t_max / T::from_usize_lossy(steps), steps)
    }

    pub fn geometric(first_step: T, ratio: T, steps: usize) -> Result<Self> {
        Self::new(GridKind::Geometric {
            first_step,
            ratio,
            steps,
        })
    }

    /// Geometric grid with given first step whose last node is `t_max`.
    pub fn geometric_to(first_step: T, t_max: T, steps: usize) -> Result<Self> {
        let n = T::from_usize_lossy(steps);
        if !(first_step > T::zero()) || steps < 2 || !(t_max > n * first_step) {
            return domain("geometric grid needs t_max > steps * first_step and at least two steps");
        }
        // t_N(r) = h (r^N - 1)/(r - 1) is increasing in r; bisect on log r
        let target = t_max / first_step;
        let total = |lr: T| -> T { ((n * lr).exp_m1()) / lr.exp_m1() };
        let (mut lo, mut hi) = (T::zero(), T::one());
        while total(hi) < target {
            hi = hi * T::lit(2.0);
        }
        for _ in 0..200 {
            let mid = (lo + hi) * T::lit(0.5);
            if mid <= lo || mid >= hi {
                break;
            }
            if total(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let ratio = ((lo + hi) * T::lit(0.5)).exp();
        Self::geometric(first_step, ratio, steps)
    }

    pub fn kind(&self) -> GridKind<T> {
        self.kind
    }

    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    pub fn steps(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn t_max(&self) -> T {
        self.nodes[self.steps()]
    }

    /// Step `τ_n = t_n - t_{n-1}` for `1 <= n <= N`.
    pub fn step(&self, n: usize) -> T {
        match self.kind {
            GridKind::Uniform { step, .. } => step,
            _ => self.nodes[n] - self.nodes[n - 1],
        }
    }

    pub fn is_uniform(&self) -> bool {
        matches!(self.kind, GridKind::Uniform { .. })
    }
}

/// Lower-triangular stencil over nodes `1..=N`; entry `(n, j)` with `j <= n`.
#[derive(Debug, Clone, PartialEq)]
pub enum Stencil<T> {
    /// Entry `(n, j)` is `v[n - j]`.
    Toeplitz(Vec<T>),
    /// Row `n` (index `n - 1`) holds entries `j = 1..=n`.
    Dense(Vec<Vec<T>>),
}

impl<T: Real> Stencil<T> {
    pub fn rows(&self) -> usize {
        match self {
            Stencil::Toeplitz(v) => v.len(),
            Stencil::Dense(r) => r.len(),
        }
    }

    #[inline]
    pub fn get(&self, n: usize, j: usize) -> T {
        debug_assert!(1 <= j && j <= n);
        match self {
            Stencil::Toeplitz(v) => v[n - j],
            Stencil::Dense(r) => r[n - 1][j - 1],
        }
    }

    #[inline]
    pub fn diag(&self, n: usize) -> T {
        self.get(n, n)
    }

    /// `Σ_{j<n} M_{nj} x_j` where `x[j-1]` is the value at node `j`.
    pub fn dot_strict(&self, n: usize, x: &[T]) -> T {
        match self {
            Stencil::Toeplitz(v) => (1..n).map(|j| v[n - j] * x[j - 1]).sum(),
            Stencil::Dense(r) => r[n - 1][..n - 1].iter().zip(x).map(|(a, b)| *a * *b).sum(),
        }
    }

    pub fn row_sum(&self, n: usize) -> T {
        match self {
            Stencil::Toeplitz(v) => v[..n].iter().copied().sum(),
            Stencil::Dense(r) => r[n - 1].iter().copied().sum(),
        }
    }

    /// Entries `(n, 1..=n)` of row `n`.
    pub fn row(&self, n: usize) -> Vec<T> {
        match self {
            Stencil::Toeplitz(v) => (1..=n).map(|j| v[n - j]).collect(),
            Stencil::Dense(r) => r[n - 1].clone(),
        }
    }

    /// Inverse of the lower-triangular matrix.
    pub fn inverse(&self) -> Stencil<T> {
        match self {
            Stencil::Toeplitz(v) => Stencil::Toeplitz(toeplitz_inverse(v)),
            Stencil::Dense(r) => Stencil::Dense(dense_inverse(r)),
        }
    }
}

fn toeplitz_inverse<T: Real>(v: &[T]) -> Vec<T> {
    let n = v.len();
    let mut a = vec![T::zero(); n];
    if n == 0 {
        return a;
    }
    let inv0 = T::one() / v[0];
    a[0] = inv0;
    for m in 1..n {
        let s: T = (1..=m).map(|i| v[i] * a[m - i]).sum();
        a[m] = -s * inv0;
    }
    a
}

fn dense_inverse<T: Real>(m: &[Vec<T>]) -> Vec<Vec<T>> {
    let n = m.len();
    let mut x: Vec<Vec<T>> = Vec::with_capacity(n);
    for r in 0..n {
        let row = &m[r];
        let mut acc = vec![T::zero(); r + 1];
        for i in 0..r {
            let c = row[i];
            if c == T::zero() {
                continue;
            }
            for (a, xv) in acc[..=i].iter_mut().zip(&x[i]) {
                *a = *a + c * *xv;
            }
        }
        let inv = T::one() / row[r];
        for a in acc[..r].iter_mut() {
            *a = -*a * inv;
        }
        acc[r] = inv;
        x.push(acc);
    }
    x
}

/// Quadrature rule for the convolution with `l`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum Rule {
    /// Product rectangle rule with exact interval masses. First order; keeps
    /// the sign structure that makes envelopes, the comparison principle and
    /// the convexity inequality hold exactly in the discrete calculus.
    #[default]
    Rectangle,
    /// Product trapezoid rule with starting corrections for the singular
    /// behaviour `t^{qα}` of the solution. Second order; fractional kernels on
    /// uniform grids only, and only for relaxation solves.
    CorrectedTrapezoid { terms: usize },
}

#[derive(Debug, Clone)]
struct Corrected<T> {
    hat: Vec<T>,
    node0: Vec<T>,
    start: Vec<Vec<T>>,
}

/// Convolution weights for a kernel pair on a time grid.
#[derive(Debug)]
pub struct ConvolutionWeights<T> {
    spec: KernelSpec<T>,
    grid: TimeGrid<T>,
    rule: Rule,
    l: OnceLock<Stencil<T>>,
    d: OnceLock<Stencil<T>>,
    k: OnceLock<Stencil<T>>,
    cum_l: OnceLock<Vec<T>>,
    corrected: Option<Corrected<T>>,
}

/// Rectangle-rule weights; see [`build_weights_with`].
pub fn build_weights<T: Real>(spec: &KernelSpec<T>, grid: &TimeGrid<T>) -> Result<ConvolutionWeights<T>> {
    build_weights_with(spec, grid, Rule::Rectangle)
}

/// Builds the weights. For kernels with a closed-form `l` the interval masses
/// of `l` are exact and the derivative stencil is their inverse; for
/// multi-term kernels the interval masses of `k` are exact and the discrete
/// `l` is obtained from the complementarity system.
pub fn build_weights_with<T: Real>(
    spec: &KernelSpec<T>,
    grid: &TimeGrid<T>,
    rule: Rule,
) -> Result<ConvolutionWeights<T>> {
    spec.validate()?;
    let w = ConvolutionWeights {
        spec: spec.clone(),
        grid: grid.clone(),
        rule,
        l: OnceLock::new(),
        d: OnceLock::new(),
        k: OnceLock::new(),
        cum_l: OnceLock::new(),
        corrected: None,
    };
    match rule {
        Rule::Rectangle => match spec.representation() {
            Representation::Complementary => {
                let l = l_masses(spec, grid)?;
                if (1..=l.rows()).any(|n| !(l.diag(n) > T::zero())) {
                    return Err(Error::Construction("leading l weight is not positive".into()));
                }
                let _ = w.l.set(l);
                Ok(w)
            }
            Representation::Kernel => {
                let (kavg, d) = k_side(spec, grid)?;
                if (1..=d.rows()).any(|n| !(d.diag(n) > T::zero())) {
                    return Err(Error::Construction("leading k weight vanishes".into()));
                }
                let _ = w.k.set(kavg);
                let _ = w.d.set(d);
                Ok(w)
            }
        },
        Rule::CorrectedTrapezoid { terms } => {
            let alpha = match spec {
                KernelSpec::Fractional { alpha } => *alpha,
                _ => return usage("the corrected trapezoid rule supports fractional kernels only"),
            };
            let step = match grid.kind() {
                GridKind::Uniform { step, .. } => step,
                _ => return usage("the corrected trapezoid rule needs a uniform grid"),
            };
            let corrected = corrected_weights(alpha, step, grid.steps(), terms)?;
            Ok(ConvolutionWeights {
                corrected: Some(corrected),
                ..w
            })
        }
    }
}

fn l_masses<T: Real>(spec: &KernelSpec<T>, grid: &TimeGrid<T>) -> Result<Stencil<T>> {
    let mass_w = |a: T, w: T| -> Result<T> {
        spec.l_mass_width(a, w)?
            .ok_or_else(|| Error::Construction("kernel has no closed-form l".into()))
    };
    let n = grid.steps();
    if let GridKind::Uniform { step, .. } = grid.kind() {
        let v = (0..n)
            .map(|m| mass_w(step * T::from_usize_lossy(m), step))
            .collect::<Result<Vec<_>>>()?;
        return Ok(Stencil::Toeplitz(v));
    }
    let t = grid.nodes();
    let mut rows = Vec::with_capacity(n);
    for r in 1..=n {
        let row = (1..=r)
            .map(|j| mass_w(t[r] - t[j], grid.step(j)))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(Stencil::Dense(rows))
}

// (k averages, derivative stencil) from exact interval masses of k
fn k_side<T: Real>(spec: &KernelSpec<T>, grid: &TimeGrid<T>) -> Result<(Stencil<T>, Stencil<T>)> {
    let n = grid.steps();
    if let GridKind::Uniform { step, .. } = grid.kind() {
        let w = (0..n)
            .map(|m| spec.k_mass_width(step * T::from_usize_lossy(m), step))
            .collect::<Result<Vec<_>>>()?;
        let kavg: Vec<T> = w.iter().map(|x| *x / step).collect();
        let mut a = Vec::with_capacity(n);
        for m in 0..n {
            a.push(if m == 0 { kavg[0] } else { kavg[m] - kavg[m - 1] });
        }
        return Ok((Stencil::Toeplitz(kavg), Stencil::Toeplitz(a)));
    }
    let t = grid.nodes();
    let mut kmass: Vec<Vec<T>> = Vec::with_capacity(n);
    for r in 1..=n {
        let row = (1..=r)
            .map(|j| spec.k_mass_width(t[r] - t[j], grid.step(j)))
            .collect::<Result<Vec<_>>>()?;
        kmass.push(row);
    }
    let mut d = Vec::with_capacity(n);
    for r in 1..=n {
        let tau = grid.step(r);
        let row: Vec<T> = (1..=r)
            .map(|j| {
                let prev = if j < r { kmass[r - 2][j - 1] } else { T::zero() };
                (kmass[r - 1][j - 1] - prev) / tau
            })
            .collect();
        d.push(row);
    }
    let kavg = kmass
        .into_iter()
        .map(|row| row.into_iter().enumerate().map(|(j, v)| v / grid.step(j + 1)).collect())
        .collect();
    Ok((Stencil::Dense(kavg), Stencil::Dense(d)))
}

// K = J A, normalized by the column step
fn k_from_derivative<T: Real>(d: &Stencil<T>, grid: &TimeGrid<T>) -> Stencil<T> {
    match d {
        Stencil::Toeplitz(a) => {
            let mut acc = T::zero();
            Stencil::Toeplitz(
                a.iter()
                    .map(|x| {
                        acc = acc + *x;
                        acc
                    })
                    .collect(),
            )
        }
        Stencil::Dense(rows) => {
            let n = rows.len();
            let mut out: Vec<Vec<T>> = Vec::with_capacity(n);
            for r in 1..=n {
                let tau = grid.step(r);
                let mut row: Vec<T> = rows[r - 1].iter().map(|x| *x * tau).collect();
                if r > 1 {
                    for (a, b) in row.iter_mut().zip(&out[r - 2]) {
                        *a = *a + *b;
                    }
                }
                out.push(row);
            }
            Stencil::Dense(
                out.into_iter()
                    .map(|row| row.into_iter().enumerate().map(|(j, v)| v / grid.step(j + 1)).collect())
                    .collect(),
            )
        }
    }
}

fn corrected_weights<T: Real>(alpha: T, tau: T, n: usize, terms: usize) -> Result<Corrected<T>> {
    let g1 = |x: T| if x > T::zero() { g_beta_pos(alpha + T::one(), x) } else { T::zero() };
    let g2 = |x: T| if x > T::zero() { g_beta_pos(alpha + T::lit(2.0), x) } else { T::zero() };
    let l = |x: T| g_beta_pos(alpha, x);
    let tf = |m: usize| tau * T::from_usize_lossy(m);
    // hat function weights: w_m = ∫ l(t_m + x) (1 - |x|/τ) dx over |x| < τ
    let mut hat = Vec::with_capacity(n);
    hat.push(g2(tau) / tau);
    for m in 1..n {
        let w = if m < 4 {
            (g2(tf(m + 1)) - T::lit(2.0) * g2(tf(m)) + g2(tf(m - 1))) / tau
        } else {
            let c = tf(m);
            quad::gl8_integrate(|x: T| (l(c + x) + l(c - x)) * (T::one() - x / tau), T::zero(), tau)
        };
        hat.push(w);
    }
    // left half-hat at node 0 for row n: ∫_{t_{n-1}}^{t_n} l(x)(x - t_{n-1})/τ dx
    let mut node0 = Vec::with_capacity(n);
    for r in 1..=n {
        let (a, b) = (tf(r - 1), tf(r));
        let w = if r < 4 {
            (g1(b) * tau - (g2(b) - g2(a))) / tau
        } else {
            quad::gl8_integrate(|x: T| l(x) * (x - a) / tau, a, b)
        };
        node0.push(w);
    }
    // exponents reproduced exactly: 0, 1 and the first `terms` non-integer qα < 2
    let mut ex = vec![T::zero(), T::one()];
    let mut q = 1usize;
    let mut added = 0;
    while added < terms {
        let g = alpha * T::from_usize_lossy(q);
        if g >= T::lit(2.0) {
            break;
        }
        if (g - g.round()).abs() > T::lit(1e-9) {
            ex.push(g);
            added += 1;
        }
        q += 1;
    }
    let m = ex.len();
    if n + 1 < m {
        return usage(format!("the corrected trapezoid rule needs at least {} steps", m - 1));
    }
    let mut start = Vec::with_capacity(n);
    let vander: Vec<Vec<T>> = ex
        .iter()
        .map(|g| {
            (0..m)
                .map(|q| {
                    if q == 0 {
                        if *g == T::zero() { T::one() } else { T::zero() }
                    } else {
                        T::from_usize_lossy(q).powf(*g)
                    }
                })
                .collect()
        })
        .collect();
    let mut gam = Vec::with_capacity(m);
    for g in &ex {
        gam.push(gamma(*g + T::one())?);
    }
    for r in 1..=n {
        let mut rhs = Vec::with_capacity(m);
        for (gi, g) in ex.iter().enumerate() {
            let f = |j: usize| if j == 0 { if *g == T::zero() { T::one() } else { T::zero() } } else { tf(j).powf(*g) };
            let mut pt = node0[r - 1] * f(0);
            for j in 1..=r {
                pt = pt + hat[r - j] * f(j);
            }
            let exact = gam[gi] * g_beta_pos(alpha + *g + T::one(), tf(r));
            // scale row g by τ^-g so the Vandermonde entries are q^g
            rhs.push((exact - pt) / tau.powf(*g));
        }
        start.push(solve_dense(vander.clone(), rhs)?);
    }
    Ok(Corrected { hat, node0, start })
}

/// Gaussian elimination with partial pivoting for small dense systems.
pub(crate) fn solve_dense<T: Real>(mut a: Vec<Vec<T>>, mut b: Vec<T>) -> Result<Vec<T>> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n)
            .max_by(|&i, &j| a[i][c].abs().partial_cmp(&a[j][c].abs()).unwrap_or(std::cmp::Ordering::Equal))
            .unwrap_or(c);
        if a[p][c] == T::zero() || !a[p][c].is_finite() {
            return Err(Error::Numerical("singular small system".into()));
        }
        a.swap(c, p);
        b.swap(c, p);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            if f == T::zero() {
                continue;
            }
            for k in c..n {
                let v = a[c][k];
                a[r][k] = a[r][k] - f * v;
            }
            let v = b[c];
            b[r] = b[r] - f * v;
        }
    }
    let mut x = vec![T::zero(); n];
    for r in (0..n).rev() {
        let s: T = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Ok(x)
}

impl<T: Real> ConvolutionWeights<T> {
    pub fn grid(&self) -> &TimeGrid<T> {
        &self.grid
    }

    pub fn spec(&self) -> &KernelSpec<T> {
        &self.spec
    }

    pub fn rule(&self) -> Rule {
        self.rule
    }

    fn rectangle_only(&self) -> Result<()> {
        if self.corrected.is_some() {
            return usage("the corrected trapezoid rule only supports relaxation solves");
        }
        Ok(())
    }

    /// Discrete complementary kernel: `L_{nj}` approximates `∫_{t_{j-1}}^{t_j} l(t_n - σ) dσ`.
    pub fn l_weights(&self) -> Result<&Stencil<T>> {
        self.rectangle_only()?;
        Ok(self.l.get_or_init(|| self.d.get().expect("derivative stencil present").inverse()))
    }

    /// Discrete derivative stencil `A`: `(A(v - v_0))_n` approximates `∂_t(k * [v - v_0])(t_n)`.
    pub fn derivative(&self) -> Result<&Stencil<T>> {
        self.rectangle_only()?;
        Ok(self.d.get_or_init(|| self.l.get().expect("l stencil present").inverse()))
    }

    /// Per-step kernel weights: `k_{nj}` approximates the average of `k(t_n - σ)` over `[t_{j-1}, t_j]`.
    pub fn k_weights(&self) -> Result<&Stencil<T>> {
        self.rectangle_only()?;
        if let Some(k) = self.k.get() {
            return Ok(k);
        }
        let d = self.derivative()?;
        Ok(self.k.get_or_init(|| k_from_derivative(d, &self.grid)))
    }

    /// `(1 * l)(t_n)` for `n = 0..=N`: closed form when available, otherwise
    /// the discrete resolvent `A^{-1} 1`.
    pub fn cum_l(&self) -> Result<&[T]> {
        if let Some(c) = self.cum_l.get() {
            return Ok(c);
        }
        let t = self.grid.nodes();
        let mut c = Vec::with_capacity(t.len());
        c.push(T::zero());
        if self.spec.representation() == Representation::Complementary {
            for &tn in &t[1..] {
                c.push(self.spec.cum_l_closed(tn)?.unwrap_or_else(T::nan));
            }
        } else {
            let d = self.derivative()?;
            let mut x: Vec<T> = Vec::with_capacity(t.len() - 1);
            for n in 1..t.len() {
                let v = (T::one() - d.dot_strict(n, &x)) / d.diag(n);
                x.push(v);
            }
            c.extend(x);
        }
        Ok(self.cum_l.get_or_init(|| c))
    }

    /// Largest deviation from discrete complementarity, `Σ_i K_{ni} L_{ij} = τ_j`,
    /// normalized by `τ_j`. Dense grids cost O(N³).
    pub fn complementarity_residual(&self) -> Result<T> {
        let k = self.k_weights()?;
        let l = self.l_weights()?;
        let n = self.grid.steps();
        let mut worst = T::zero();
        match (k, l) {
            (Stencil::Toeplitz(kv), Stencil::Toeplitz(lv)) => {
                for m in 0..n {
                    let s: T = (0..=m).map(|i| kv[i] * lv[m - i]).sum();
                    worst = worst.max((s - T::one()).abs());
                }
            }
            _ => {
                for r in 1..=n {
                    for j in 1..=r {
                        let s: T = (j..=r)
                            .map(|i| k.get(r, i) * self.grid.step(i) * l.get(i, j))
                            .sum();
                        worst = worst.max((s / self.grid.step(j) - T::one()).abs());
                    }
                }
            }
        }
        Ok(worst)
    }
}

/// Relaxation function `s_μ` on a grid together with its a-priori envelopes
/// `1/(1 + μ/k(t)) <= s_μ(t) <= 1/(1 + μ (1*l)(t))`.
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxationCurve<T> {
    pub mu: T,
    pub grid: TimeGrid<T>,
    pub values: Vec<T>,
    pub lower_env: Vec<T>,
    pub upper_env: Vec<T>,
}

impl<T: Real> RelaxationCurve<T> {
    /// `(t, value)` pairs, for rate fitting.
    pub fn series(&self) -> Vec<(T, T)> {
        self.grid.nodes().iter().copied().zip(self.values.iter().copied()).collect()
    }

    /// Rows `t, s_mu, lower_env, upper_env`.
    pub fn rows(&self) -> impl Iterator<Item = [T; 4]> + '_ {
        (0..self.values.len()).map(move |n| {
            [self.grid.nodes()[n], self.values[n], self.lower_env[n], self.upper_env[n]]
        })
    }
}

pub const ENVELOPE_SLACK: f64 = 1e-10;

/// Solves `s + μ (l * s) = 1` (equivalently `∂_t(k * [s - 1]) + μ s = 0`) by
/// implicit marching and certifies the result against the envelopes.
pub fn solve_relaxation<T: Real>(weights: &ConvolutionWeights<T>, mu: T) -> Result<RelaxationCurve<T>> {
    let curve = solve_relaxation_unchecked(weights, mu)?;
    let slack = T::lit(ENVELOPE_SLACK);
    for n in 1..curve.values.len() {
        let v = curve.values[n];
        if !(v >= curve.lower_env[n] - slack && v <= curve.upper_env[n] + slack) {
            return Err(Error::EnvelopeViolation {
                node: n,
                t: curve.grid.nodes()[n].to_f64_lossy(),
                value: v.to_f64_lossy(),
                lower: curve.lower_env[n].to_f64_lossy(),
                upper: curve.upper_env[n].to_f64_lossy(),
            });
        }
    }
    Ok(curve)
}

/// As [`solve_relaxation`] but returns the curve even when an envelope is
/// violated, for diagnostics.
pub fn solve_relaxation_unchecked<T: Real>(weights: &ConvolutionWeights<T>, mu: T) -> Result<RelaxationCurve<T>> {
    if !(mu >= T::zero() && mu.is_finite()) {
        return domain(format!("mu must be nonnegative, got {mu}"));
    }
    let grid = weights.grid.clone();
    let n = grid.steps();
    let mut s = vec![T::one(); n + 1];
    if mu > T::zero() {
        if let Some(c) = &weights.corrected {
            march_corrected(c, mu, &mut s)?;
        } else if weights.spec.representation() == Representation::Complementary {
            let l = weights.l_weights()?;
            // s_n + μ Σ_j L_nj s_j = 1
            for r in 1..=n {
                let acc = l.dot_strict(r, &s[1..]);
                s[r] = (T::one() - mu * acc) / (T::one() + mu * l.diag(r));
            }
        } else {
            // Σ_j A_nj (s_j - 1) + μ s_n = 0
            let d = weights.derivative()?;
            let mut e = vec![T::zero(); n];
            for r in 1..=n {
                let acc = d.dot_strict(r, &e);
                let a = d.diag(r);
                s[r] = (a - acc) / (a + mu);
                e[r - 1] = s[r] - T::one();
            }
        }
    }
    let t = grid.nodes();
    let cum = weights.cum_l()?;
    let mut lower = vec![T::one(); n + 1];
    let mut upper = vec![T::one(); n + 1];
    for r in 1..=n {
        let k = weights.spec.k(t[r])?;
        lower[r] = k / (k + mu);
        upper[r] = T::one() / (T::one() + mu * cum[r]);
    }
    Ok(RelaxationCurve {
        mu,
        grid,
        values: s,
        lower_env: lower,
        upper_env: upper,
    })
}

fn march_corrected<T: Real>(c: &Corrected<T>, mu: T, s: &mut [T]) -> Result<()> {
    let n = s.len() - 1;
    let m = c.start.first().map_or(1, |r| r.len());
    // row r: s_r + μ [node0_r + start_r[0] + Σ_j hat_{r-j} s_j + Σ_{q>=1} start_r[q] s_q] = 1
    let head = (m - 1).min(n);
    if head > 0 {
        let mut a = vec![vec![T::zero(); head]; head];
        let mut b = vec![T::zero(); head];
        for r in 1..=head {
            let row = &mut a[r - 1];
            row[r - 1] = T::one();
            for j in 1..=r {
                row[j - 1] = row[j - 1] + mu * c.hat[r - j];
            }
            for q in 1..m {
                row[q - 1] = row[q - 1] + mu * c.start[r - 1][q];
            }
            b[r - 1] = T::one() - mu * (c.node0[r - 1] + c.start[r - 1][0]);
        }
        let x = solve_dense(a, b)?;
        s[1..=head].copy_from_slice(&x);
    }
    for r in head + 1..=n {
        let mut acc = c.node0[r - 1] + c.start[r - 1][0];
        for j in 1..r {
            acc = acc + c.hat[r - j] * s[j];
        }
        for q in 1..m {
            acc = acc + c.start[r - 1][q] * s[q];
        }
        s[r] = (T::one() - mu * acc) / (T::one() + mu * c.hat[0]);
    }
    Ok(())
}

/// Discrete `∂_t(k * [v - v_0])` at the node `t_n`, `n = history.len()`, where
/// `history[j-1]` is the value at `t_j`.
pub fn apply_nonlocal_derivative<T: Real>(weights: &ConvolutionWeights<T>, history: &[T], baseline: T) -> Result<T> {
    let n = history.len();
    if n == 0 || n > weights.grid.steps() {
        return usage(format!(
            "history length {n} does not fit a grid with {} steps",
            weights.grid.steps()
        ));
    }
    let d = weights.derivative()?;
    let mut s = d.diag(n) * (history[n - 1] - baseline);
    match d {
        Stencil::Toeplitz(v) => {
            for j in 1..n {
                s = s + v[n - j] * (history[j - 1] - baseline);
            }
        }
        Stencil::Dense(r) => {
            for (a, h) in r[n - 1][..n - 1].iter().zip(history) {
                s = s + *a * (*h - baseline);
            }
        }
    }
    Ok(s)
}

/// A convex (or at least differentiable) scalar function, for the identity checks.
pub trait ConvexFn<T> {
    fn value(&self, x: T) -> T;
    fn deriv(&self, x: T) -> T;
}

/// `x ↦ x^p`.
#[derive(Debug, Clone, Copy)]
pub struct PowerFn<T>(pub T);

impl<T: Real> ConvexFn<T> for PowerFn<T> {
    fn value(&self, x: T) -> T {
        x.powf(self.0)
    }
    fn deriv(&self, x: T) -> T {
        self.0 * x.powf(self.0 - T::one())
    }
}

/// `x ↦ a x + b`.
#[derive(Debug, Clone, Copy)]
pub struct AffineFn<T> {
    pub a: T,
    pub b: T,
}

impl<T: Real> ConvexFn<T> for AffineFn<T> {
    fn value(&self, x: T) -> T {
        self.a * x + self.b
    }
    fn deriv(&self, _x: T) -> T {
        self.a
    }
}

/// Maximal residual of the backward-difference identity
/// `ψ'(u_n) Du_n = Dψ(u)_n + (ψ(u_{n-1}) - ψ(u_n) - ψ'(u_n)(u_{n-1} - u_n))/τ`
/// over `n = 1..`, with `Du_n = (u_n - u_{n-1})/τ`.
pub fn check_fundamental_identity_discrete<T: Real, F: ConvexFn<T>>(values: &[T], step: T, psi: &F) -> T {
    let mut worst = T::zero();
    for w in values.windows(2) {
        let (prev, cur) = (w[0], w[1]);
        let dp = psi.deriv(cur);
        let lhs = dp * (cur - prev) / step;
        let rhs = (psi.value(cur) - psi.value(prev)) / step
            + (psi.value(prev) - psi.value(cur) - dp * (prev - cur)) / step;
        worst = worst.max((lhs - rhs).abs());
    }
    worst
}

/// Smallest margin of `ψ'(u_n) ∂_t(k*[u - u_0])_n - ∂_t(k*[ψ(u) - ψ(u_0)])_n`
/// over the nodes covered by `values` (`values[j-1]` at `t_j`).
pub fn check_convexity_inequality<T: Real, F: ConvexFn<T>>(
    weights: &ConvolutionWeights<T>,
    values: &[T],
    baseline: T,
    psi: &F,
) -> Result<T> {
    let mapped: Vec<T> = values.iter().map(|v| psi.value(*v)).collect();
    let p0 = psi.value(baseline);
    let mut worst = T::infinity();
    for n in 1..=values.len() {
        let lhs = psi.deriv(values[n - 1]) * apply_nonlocal_derivative(weights, &values[..n], baseline)?;
        let rhs = apply_nonlocal_derivative(weights, &mapped[..n], p0)?;
        worst = worst.min(lhs - rhs);
    }
    Ok(worst)
}
