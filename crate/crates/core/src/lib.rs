//! Numerical laboratory for the entropy method applied to Fokker-Planck
//! equations with a memory term `∂_t(k * [u - u_0]) = L* u`.
//!
//! The modules are generic over the scalar type ([`Real`], implemented for
//! `f32` and `f64`); the aliases at the crate root fix `f64`.

pub mod convq;
pub mod entropy;
pub mod error;
pub mod fpsolver;
pub mod kernels;
pub mod quad;
pub mod real;
pub mod spectral;
pub mod specfun;

pub use error::{Error, Result};
pub use real::Real;

pub type KernelSpec = kernels::KernelSpec<f64>;
pub type DecayClass = kernels::DecayClass<f64>;
pub type TimeGrid = convq::TimeGrid<f64>;
pub type ConvolutionWeights = convq::ConvolutionWeights<f64>;
pub type RelaxationCurve = convq::RelaxationCurve<f64>;
pub type MLSeriesPolicy = specfun::MLSeriesPolicy<f64>;
pub type EntropyGenerator = entropy::EntropyGenerator<f64>;
pub type SteadyState1D = entropy::SteadyState1D<f64>;
pub type Field1D = fpsolver::Field1D<f64>;
pub type Potential1D = fpsolver::Potential1D<f64>;
pub type SimResult = fpsolver::SimResult<f64>;
pub type SpectralCoeffs = spectral::SpectralCoeffs<f64>;
pub type OUModel = spectral::OUModel<f64>;
