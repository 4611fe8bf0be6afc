use thiserror::Error;

use crate::expr::{EvalError, ParseError};

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("expression in {field}: {source}")]
    Expression {
        field: String,
        #[source]
        source: ParseError,
    },

    #[error("coefficient {field} at triangle {triangle}: {source}")]
    CoefficientDomain {
        field: String,
        triangle: usize,
        #[source]
        source: EvalError,
    },

    #[error("mesh and coefficients do not match: {0}")]
    Mismatch(String),

    #[error("interior block is empty; refine the mesh")]
    EmptyInterior,

    #[error("Dirichlet operator not invertible (pivot {pivot:.3e} at row {row})")]
    SingularDirichlet { row: usize, pivot: f64 },

    #[error("operator is not Hermitian (asymmetry {0:.3e}); use the exponential path")]
    NotHermitian(f64),

    #[error("u is not a weak solution for the supplied f (interior residual {residual:.3e} > {tolerance:.3e})")]
    NotWeakSolution { residual: f64, tolerance: f64 },

    #[error("mesh has obtuse triangles (max angle {max_angle:.6} rad); positivity checks need a non-obtuse mesh")]
    ObtuseMesh { max_angle: f64 },

    #[error("hypothesis not met: {0}")]
    Hypothesis(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("refused: {0}")]
    Refused(String),
}
