//! Simulation and numerical-verification toolkit for branching Brownian motion
//! with absorption near the critical drift √2.
//!
//! The model: particles diffuse with leftward drift `μ = √(2 − ε)`, branch into
//! two at unit rate, and are killed at the origin. The toolkit estimates
//! survival probabilities by Monte Carlo ([`engine`]), solves the associated
//! Fisher-KPP traveling-wave and Kolmogorov boundary-value problems as a
//! deterministic oracle ([`wave`]), samples the limiting continuous-state
//! branching process with mechanism `ψ(u) = a·u + 2π²·u·log u` ([`csbp`]) and
//! the Bolthausen-Sznitman coalescent ([`coalescent`]), and provides
//! Galton-Watson survival bounds ([`galton_watson`]).
//!
//! The numeric kernels are generic over the scalar type through [`Real`];
//! the particle engine and everything downstream of the RNG run on `f64`.

pub mod coalescent;
pub mod csbp;
pub mod engine;
mod error;
pub mod functionals;
pub mod galton_watson;
pub mod model;
pub mod real;
pub mod stats;
pub mod wave;

pub use error::{Error, Result};
pub use model::{ModelConfig, ModelParams, SeedSpec};
pub use real::Real;

/// Scalar used by the particle engine and the experiment layer.
pub type Scalar = f64;

/// `f64` instantiations of the scalar-generic core types.
pub type ModelParams64 = model::ModelParams<f64>;
pub type WaveSolution64 = wave::WaveSolution<f64>;
pub type TailFit64 = wave::TailFit<f64>;
pub type CsbpParams64 = csbp::CsbpParams<f64>;
pub type OffspringDistribution64 = galton_watson::OffspringDistribution<f64>;
