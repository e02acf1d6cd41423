//! Crate-wide error type. Diagnostics carry `f64` copies of the offending
//! data so the error type stays independent of the scalar parameter.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("radius field negative at x = {at:?}")]
    NegativeRadius { at: Vec<f64> },

    #[error("interval dynamics with lower > upper at x = {at:?}")]
    EmptyInterval { at: Vec<f64> },

    #[error("x-subgradient of the support function is undefined through this route for p = 0")]
    ZeroCovector,

    #[error("nonsmooth field data at x = {at:?} without a kink annotation")]
    UnannotatedKink { at: Vec<f64> },

    #[error("empty computable subgradient set at x = {at:?}")]
    EmptySubdifferential { at: Vec<f64> },

    #[error("point {at:?} lies outside the working domain")]
    OutsideDomain { at: Vec<f64> },

    #[error("probe ball of radius {radius} exceeds the domain around {at:?}")]
    ProbeExceedsDomain { at: Vec<f64>, radius: f64 },

    #[error("sample budget too small: {got} < required {min}")]
    InsufficientSamples { got: usize, min: usize },

    #[error("CFL violation: dt * max speed = {lhs:.6} exceeds cell size {rhs:.6}")]
    CflViolation { lhs: f64, rhs: f64 },

    #[error("sampling produced an empty velocity set at x = {at:?}")]
    EmptyVelocitySet { at: Vec<f64> },

    #[error("dual arc hit zero at t = {t} after starting nonzero (dichotomy violation)")]
    DichotomyViolated { t: f64 },

    #[error("dual arc is identically zero; the forward flow is undefined at p = 0")]
    ZeroDualArc,

    #[error("terminal cost has no exact-gradient callback but one is required here")]
    ExactGradientRequired,

    #[error("argmax of <v,p> is not a singleton at x = {at:?}; velocity undefined")]
    SetValuedVelocity { at: Vec<f64> },

    #[error("trajectory left the padded domain at t = {t}")]
    LeftDomain { t: f64 },

    #[error("inadmissible trajectory: velocity escapes F(y) at node {index} by {excess}")]
    Inadmissible { index: usize, excess: f64 },

    #[error("no differentiability points certified near {at:?}")]
    NoDifferentiabilityPoints { at: Vec<f64> },

    #[error("Dini estimator inconclusive at {frac:.2} of samples (limit 0.10)")]
    DiniInconclusive { frac: f64 },

    #[error("no dual candidates available: none supplied and superdifferential estimate empty")]
    NoDualCandidates,

    #[error("no optimal trajectory recovered for reachable gradient {gradient:?}")]
    AtlasFamilyEmpty { gradient: Vec<f64> },

    #[error("mesh too short: need at least {min} nodes, got {got}")]
    MeshTooShort { got: usize, min: usize },

    #[error("unknown benchmark `{0}`")]
    UnknownBenchmark(String),

    #[error("unknown export key `{0}`")]
    UnknownExportKey(String),

    #[error("{0}")]
    Invalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
