use thiserror::Error;

/// Errors raised by the estimators and diagnostic routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty sample")]
    EmptySample,

    #[error("need at least {needed} observations, got {got}")]
    TooFewObservations { needed: usize, got: usize },

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("degenerate scale: {0}")]
    DegenerateScale(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("subset size h={h} out of range [{min}, {max}]")]
    SubsetSizeOutOfRange { h: usize, min: usize, max: usize },

    #[error("more dimensions ({d}) than observations ({n}); use the regularized estimator (mrcd)")]
    DimensionExceedsRows { n: usize, d: usize },

    #[error("exact fit: at least h points lie on the affine subspace with normal {normal:?}, offset {offset}")]
    ExactFit { normal: Vec<f64>, offset: f64 },

    #[error("did not converge within {iterations} iterations (last iterate {last})")]
    NonConvergence { iterations: usize, last: f64 },

    #[error("combinatorial budget exceeded: C({n},{h}) > {budget} subsets")]
    CombinatorialBudget { n: usize, h: usize, budget: u64 },

    #[error("all sampled projection directions were degenerate")]
    DegenerateDirections,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code the CLI maps this error to:
    /// 2 input error, 3 numeric degeneracy, 4 non-convergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonConvergence { .. } => 4,
            Error::DegenerateScale(_)
            | Error::Singular(_)
            | Error::ExactFit { .. }
            | Error::DegenerateDirections => 3,
            _ => 2,
        }
    }
}
