//! Mayer problems for differential inclusions `x' in F(x)`: set-valued
//! dynamics and their support-function Hamiltonians, a semi-Lagrangian value
//! function solver, characteristic and dual-arc integrators, nonsmooth
//! differential estimators, and the verification lab that checks sensitivity
//! relations, maximum-principle residuals, and the gradient-trajectory atlas
//! on closed-form benchmarks.
//!
//! All numerics are generic over the scalar type via [`scalar::Real`]
//! (`f32` or `f64`); the aliases below fix the default `f64` instantiation
//! used by the CLI and the acceptance suite.

pub mod bench;
pub mod dynamics;
pub mod error;
pub mod field;
pub mod flow;
pub mod geom;
pub mod hjb;
pub mod nonsmooth;
pub mod scalar;
pub mod sensitivity;
pub mod traj;

pub use error::{Error, Result};

/// Default concrete scalar.
pub type Scalar = f64;

pub type SetValuedMap64 = dynamics::SetValuedMap<Scalar>;
pub type HypothesisAudit64 = dynamics::HypothesisAudit<Scalar>;
pub type SampledFunction64 = nonsmooth::SampledFunction<Scalar>;
pub type MayerProblem64 = hjb::MayerProblem<Scalar>;
pub type ValueField64 = hjb::ValueField<Scalar>;
pub type Trajectory64 = traj::Trajectory<Scalar>;
pub type ArcPair64 = flow::ArcPair<Scalar>;
pub type Benchmark64 = bench::Benchmark<Scalar>;
