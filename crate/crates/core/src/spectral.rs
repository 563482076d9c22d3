//! Hermite-mode oracle for `V(x) = x²/2`, where `u_∞` is the standard
//! Gaussian and `-L` has eigenpairs `(k, φ_k)`.

use crate::convq::{self, ConvolutionWeights};
use crate::entropy::EntropyGenerator;
use crate::error::{domain, usage, Error, Result};
use crate::quad::gauss_hermite_prob;
use crate::real::Real;

/// `He_k(x)/√k!` via the three-term recurrence.
pub fn hermite_phi<T: Real>(k: usize, x: T) -> T {
    let mut p0 = T::one();
    if k == 0 {
        return p0;
    }
    let mut p1 = x;
    for j in 1..k {
        let jf = T::from_usize_lossy(j);
        let p2 = (x * p1 - jf.sqrt() * p0) / (jf + T::one()).sqrt();
        p0 = p1;
        p1 = p2;
    }
    p1
}

/// Basis of `K + 1` modes with a Gauss-Hermite rule of order `2K + 8`.
#[derive(Debug, Clone)]
pub struct OUModel<T> {
    modes: usize,
    nodes: Vec<T>,
    weights: Vec<T>,
    /// `basis[k][i] = φ_k(x_i)`
    basis: Vec<Vec<T>>,
}

impl<T: Real> OUModel<T> {
    pub fn new(modes: usize) -> Result<Self> {
        if modes == 0 || modes > 120 {
            return domain(format!("basis size must lie in 1..=120, got {modes}"));
        }
        let (x, w) = gauss_hermite_prob(2 * modes + 8);
        let nodes: Vec<T> = x.into_iter().map(T::lit).collect();
        let weights: Vec<T> = w.into_iter().map(T::lit).collect();
        let basis = (0..=modes)
            .map(|k| nodes.iter().map(|x| hermite_phi(k, *x)).collect())
            .collect();
        Ok(OUModel {
            modes,
            nodes,
            weights,
            basis,
        })
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn eigenvalue(&self, k: usize) -> T {
        T::from_usize_lossy(k)
    }

    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    /// Max deviation of the quadrature Gram matrix from the identity.
    pub fn gram_error(&self) -> T {
        let mut worst = T::zero();
        for a in 0..=self.modes {
            for b in 0..=a {
                let g: T = (0..self.nodes.len())
                    .map(|i| self.weights[i] * self.basis[a][i] * self.basis[b][i])
                    .sum();
                let target = if a == b { T::one() } else { T::zero() };
                worst = worst.max((g - target).abs());
            }
        }
        worst
    }
}

/// Coefficients `c_0..c_K` of `v = u/u_∞`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralCoeffs<T> {
    pub coeffs: Vec<T>,
    density: bool,
}

impl<T: Real> SpectralCoeffs<T> {
    /// Coefficients given directly; `c_0` must be 1.
    pub fn new(coeffs: Vec<T>) -> Result<Self> {
        if coeffs.is_empty() {
            return usage("coefficient vector is empty");
        }
        if (coeffs[0] - T::one()).abs() > T::lit(1e-8) {
            return usage(format!("c_0 = {} but unit mass needs c_0 = 1", coeffs[0]));
        }
        Ok(SpectralCoeffs { coeffs, density: true })
    }

    pub fn basis_size(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Whether the projected datum was nonnegative at every node.
    pub fn is_density(&self) -> bool {
        self.density
    }
}

/// `c_k = Σ_i w_i v_0(x_i) φ_k(x_i)`.
pub fn project<T: Real>(v0: &[T], model: &OUModel<T>) -> Result<SpectralCoeffs<T>> {
    if v0.len() != model.nodes.len() {
        return usage(format!(
            "expected {} node values, got {}",
            model.nodes.len(),
            v0.len()
        ));
    }
    let coeffs: Vec<T> = model
        .basis
        .iter()
        .map(|phi| (0..v0.len()).map(|i| model.weights[i] * v0[i] * phi[i]).sum())
        .collect();
    if (coeffs[0] - T::one()).abs() > T::lit(1e-8) {
        return usage(format!("c_0 = {} deviates from 1; datum is not normalized", coeffs[0]));
    }
    Ok(SpectralCoeffs {
        coeffs,
        density: v0.iter().all(|v| *v >= T::zero()),
    })
}

/// `v(x_i) = Σ_k c_k φ_k(x_i)` at the quadrature nodes.
pub fn reconstruct<T: Real>(coeffs: &[T], model: &OUModel<T>) -> Vec<T> {
    let n = model.nodes.len();
    let mut v = vec![T::zero(); n];
    for (c, phi) in coeffs.iter().zip(&model.basis) {
        if *c == T::zero() {
            continue;
        }
        for (a, p) in v.iter_mut().zip(phi) {
            *a = *a + *c * *p;
        }
    }
    v
}

/// Evaluates `v` at an arbitrary point.
pub fn reconstruct_at<T: Real>(coeffs: &[T], x: T) -> T {
    coeffs
        .iter()
        .enumerate()
        .map(|(k, c)| *c * hermite_phi(k, x))
        .sum()
}

/// Time evolution in the eigenbasis.
pub enum Evolution<'a, T> {
    /// Non-local dynamics at node `step` of the weights' grid.
    Nonlocal { weights: &'a ConvolutionWeights<T>, step: usize },
    Classical { time: T },
    /// `n` steps of the backward difference scheme.
    DiscreteBE { tau: T, step: usize },
}

/// `c_k(t) = c_k s_k(t)`.
pub fn evolve<T: Real>(coeffs: &SpectralCoeffs<T>, evolution: &Evolution<'_, T>) -> Result<SpectralCoeffs<T>> {
    let mut out = coeffs.clone();
    match evolution {
        Evolution::Nonlocal { weights, step } => {
            if *step > weights.grid().steps() {
                return usage("step index exceeds the time grid");
            }
            for (k, c) in out.coeffs.iter_mut().enumerate().skip(1) {
                if *c != T::zero() {
                    let s = convq::solve_relaxation(weights, T::from_usize_lossy(k))?;
                    *c = *c * s.values[*step];
                }
            }
        }
        Evolution::Classical { time } => {
            if !(*time >= T::zero()) {
                return domain("time must be nonnegative");
            }
            for (k, c) in out.coeffs.iter_mut().enumerate() {
                *c = *c * (-T::from_usize_lossy(k) * *time).exp();
            }
        }
        Evolution::DiscreteBE { tau, step } => {
            if !(*tau > T::zero()) {
                return domain("tau must be positive");
            }
            for (k, c) in out.coeffs.iter_mut().enumerate() {
                let f = T::one() / (T::one() + *tau * T::from_usize_lossy(k));
                *c = *c * f.powi(*step as i32);
            }
        }
    }
    Ok(out)
}

/// Relaxation curves `s_k` for every active mode, solved once on a grid.
pub struct RelaxationTable<T> {
    initial: Vec<T>,
    curves: Vec<Option<Vec<T>>>,
}

impl<T: Real> RelaxationTable<T> {
    pub fn new(weights: &ConvolutionWeights<T>, coeffs: &SpectralCoeffs<T>) -> Result<Self> {
        let curves = coeffs
            .coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| {
                if k == 0 || *c == T::zero() {
                    Ok(None)
                } else {
                    convq::solve_relaxation(weights, T::from_usize_lossy(k)).map(|s| Some(s.values))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(RelaxationTable {
            initial: coeffs.coeffs.clone(),
            curves,
        })
    }

    pub fn coeffs_at(&self, n: usize) -> Vec<T> {
        self.initial
            .iter()
            .zip(&self.curves)
            .map(|(c, s)| match s {
                Some(s) => *c * s[n],
                None => *c,
            })
            .collect()
    }
}

/// `Σ_{k>=1} c_k²`, the β = 2 relative entropy.
pub fn weighted_norm_sq<T: Real>(coeffs: &SpectralCoeffs<T>) -> T {
    coeffs.coeffs.iter().skip(1).map(|c| *c * *c).sum()
}

/// Relaxation source for [`lower_bound_certificate`].
pub enum Dynamics<'a, T> {
    Nonlocal(&'a ConvolutionWeights<T>),
    Classical(&'a [T]),
}

/// `c_1² s_1(t)²` per node: a lower bound for the evolved β = 2 entropy.
pub fn lower_bound_certificate<T: Real>(coeffs: &SpectralCoeffs<T>, dynamics: &Dynamics<'_, T>) -> Result<Vec<T>> {
    let c1 = coeffs.coeffs.get(1).copied().unwrap_or_else(T::zero);
    if c1 == T::zero() {
        return Err(Error::Usage("certificate unavailable: c_1 = 0".into()));
    }
    let c2 = c1 * c1;
    Ok(match dynamics {
        Dynamics::Nonlocal(w) => convq::solve_relaxation(w, T::one())?
            .values
            .iter()
            .map(|s| c2 * *s * *s)
            .collect(),
        Dynamics::Classical(ts) => ts.iter().map(|t| c2 * (-T::lit(2.0) * *t).exp()).collect(),
    })
}

/// `Σ_i w_i φ(v_i)` by Gauss-Hermite quadrature.
///
/// Nodes with weight below `ε²` are skipped: there the reconstruction is
/// dominated by rounding in the coefficients times `φ_k(x_i)`, while the
/// contribution to the sum is invisible anyway.
pub fn quadrature_entropy<T: Real>(gen: &EntropyGenerator<T>, v: &[T], model: &OUModel<T>) -> Result<T> {
    let cut = T::epsilon() * T::epsilon();
    let mut s = T::zero();
    for (w, x) in model.weights.iter().zip(v) {
        if *w < cut {
            continue;
        }
        s = s + *w * gen.phi(*x)?;
    }
    Ok(s)
}

/// CSV rows `(t, k, c_k(t), s_{λ_k}(t))` for modes `0..=K`.
pub fn mode_rows<T: Real>(weights: &ConvolutionWeights<T>, coeffs: &SpectralCoeffs<T>) -> Result<Vec<(T, usize, T, T)>> {
    let grid = weights.grid();
    let curves = (0..coeffs.coeffs.len())
        .map(|k| {
            if k == 0 {
                Ok(vec![T::one(); grid.nodes().len()])
            } else {
                convq::solve_relaxation(weights, T::from_usize_lossy(k)).map(|s| s.values)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::with_capacity(grid.nodes().len() * coeffs.coeffs.len());
    for (n, t) in grid.nodes().iter().enumerate() {
        for (k, c) in coeffs.coeffs.iter().enumerate() {
            let s = curves[k][n];
            rows.push((*t, k, *c * s, s));
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convq::{build_weights, TimeGrid};
    use crate::kernels::KernelSpec;

    #[test]
    fn phi_values() {
        assert_eq!(hermite_phi(0, 3.7_f64), 1.0);
        assert_eq!(hermite_phi(1, -0.4_f64), -0.4);
        assert!((hermite_phi(2, 0.0_f64) + std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        // He_3 = x^3 - 3x
        let x = 1.3_f64;
        assert!((hermite_phi(3, x) - (x * x * x - 3.0 * x) / 6f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn gram_matrix_is_identity() {
        let m = OUModel::<f64>::new(40).unwrap();
        assert!(m.gram_error() < 1e-10, "{}", m.gram_error());
    }

    #[test]
    fn projection_of_single_mode() {
        let m = OUModel::<f64>::new(12).unwrap();
        let v: Vec<f64> = m.nodes().iter().map(|x| 1.0 + 0.5 * x).collect();
        let c = project(&v, &m).unwrap();
        assert!((c.coeffs[0] - 1.0).abs() < 1e-12);
        assert!((c.coeffs[1] - 0.5).abs() < 1e-12);
        assert!(c.coeffs[2..].iter().all(|x| x.abs() < 1e-12));
        assert!((weighted_norm_sq(&c) - 0.25).abs() < 1e-12);
        assert!(!c.is_density());
    }

    #[test]
    fn unnormalized_projection_is_rejected() {
        let m = OUModel::<f64>::new(4).unwrap();
        let v = vec![1.1; m.nodes().len()];
        assert!(matches!(project(&v, &m), Err(Error::Usage(_))));
    }

    #[test]
    fn smooth_bump_reconstructs() {
        let m = OUModel::<f64>::new(40).unwrap();
        // u_0 = N(0.3, 0.8²), v_0 = u_0/u_∞
        let v: Vec<f64> = m
            .nodes()
            .iter()
            .map(|x| {
                let s = 0.8_f64;
                let z = (x - 0.3) / s;
                (-(z * z) / 2.0).exp() / s / (-(x * x) / 2.0).exp()
            })
            .collect();
        let c = project(&v, &m).unwrap();
        let r = reconstruct(&c.coeffs, &m);
        let err: f64 = m.weights().iter().zip(r.iter().zip(&v)).map(|(w, (a, b))| w * (a - b).powi(2)).sum();
        assert!(err.sqrt() < 1e-6, "{err}");
        let q: f64 = m.weights().iter().zip(&r).map(|(w, x)| w * (x - 1.0).powi(2)).sum();
        assert!((q - weighted_norm_sq(&c)).abs() < 1e-8);
    }

    #[test]
    fn discrete_be_arithmetic() {
        let c = SpectralCoeffs::new(vec![1.0_f64, 0.5]).unwrap();
        let e = evolve(&c, &Evolution::DiscreteBE { tau: 0.1, step: 3 }).unwrap();
        assert!((e.coeffs[1] - 0.375_657_4).abs() < 1e-7);
        assert_eq!(e.coeffs[0], 1.0);
    }

    #[test]
    fn certificate_requires_first_mode() {
        let c = SpectralCoeffs::new(vec![1.0, 0.0, 0.3]).unwrap();
        assert!(lower_bound_certificate(&c, &Dynamics::Classical(&[0.0, 1.0])).is_err());
        let c = SpectralCoeffs::new(vec![1.0_f64, 0.5]).unwrap();
        let b = lower_bound_certificate(&c, &Dynamics::Classical(&[0.0, 1.0])).unwrap();
        assert!((b[1] - 0.25 * (-2.0_f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn nonlocal_certificate_bounds_evolution() {
        let grid = TimeGrid::uniform_to(5.0, 200).unwrap();
        let w = build_weights(&KernelSpec::fractional(0.5).unwrap(), &grid).unwrap();
        let c = SpectralCoeffs::new(vec![1.0_f64, 0.5, 0.3]).unwrap();
        let b = lower_bound_certificate(&c, &Dynamics::Nonlocal(&w)).unwrap();
        let table = RelaxationTable::new(&w, &c).unwrap();
        for n in 0..=200 {
            let e = weighted_norm_sq(&SpectralCoeffs::new(table.coeffs_at(n)).unwrap());
            assert!(e >= b[n]);
            let direct = evolve(&c, &Evolution::Nonlocal { weights: &w, step: n }).unwrap();
            assert!((direct.coeffs[2] - table.coeffs_at(n)[2]).abs() < 1e-15);
        }
    }
}
