use crate::cplx::CNum;
use crate::model::Violation;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    DimensionMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("matrix is singular to tolerance (smallest pivot {min_pivot:e})")]
    Singular { min_pivot: f64 },
    #[error("eigenvalue iteration did not converge after {iterations} iterations")]
    EigNoConvergence { iterations: usize },
    #[error("logarithm of zero")]
    LogOfZero,
    #[error("Gamma pole: argument {z} lies {distance:e} from {pole}")]
    GammaPole { z: CNum, pole: i64, distance: f64 },
    #[error("Gamma pole in {what}: argument {z} lies {distance:e} from {pole}")]
    NamedGammaPole {
        what: String,
        z: CNum,
        pole: i64,
        distance: f64,
    },
    #[error("parameter validation failed: {}", fmt_violations(.0))]
    Validation(Vec<Violation>),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("series point at distance {distance} from {center} exceeds the evaluation radius {limit}")]
    Radius {
        center: CNum,
        distance: f64,
        limit: f64,
    },
    #[error("series did not converge after {terms} terms")]
    SeriesDivergence { terms: usize },
    #[error("system evaluated at its singular point {at}")]
    SingularPoint { at: CNum },
    #[error("path comes within {distance:e} of singularity {singularity} (clearance {clearance:e})")]
    Clearance {
        singularity: CNum,
        distance: f64,
        clearance: f64,
    },
    #[error("step size underflow at {at}")]
    StepUnderflow { at: CNum },
    #[error("resonance: {0}")]
    Resonance(String),
    #[error("direction {alpha} lies within {clearance} rad of a singular ray")]
    SingularDirection { alpha: f64, clearance: f64 },
    #[error("z = {z} is outside the half-plane of convergence of direction {alpha}")]
    OutsideHalfPlane { z: CNum, alpha: f64 },
    #[error("sector violation: {0}")]
    Sector(String),
}

fn fmt_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

pub type Result<T> = std::result::Result<T, Error>;
