use thiserror::Error;

/// Errors shared across the estimation, tuning, and inference routines.
#[derive(Error, Debug)]
pub enum Error {
    /// Power/eigen iteration did not meet its residual tolerance. The last
    /// iterate is carried so callers can inspect (or accept) it.
    #[error("iteration did not converge within {max_iter} steps (residual {residual:.3e})")]
    NonConvergence {
        max_iter: usize,
        residual: f64,
        last_d: f64,
        last_u: Vec<f64>,
        last_v: Vec<f64>,
    },

    /// The (augmented) design matrix is numerically rank deficient.
    #[error("singular design matrix: reciprocal condition estimate {rcond:.3e} below {threshold:.3e}")]
    SingularDesign { rcond: f64, threshold: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// A symmetric-only routine was handed an asymmetric matrix.
    #[error("matrix is not symmetric: max |a_ij - a_ji| = {max_asymmetry:.3e}")]
    Asymmetric { max_asymmetry: f64 },

    /// beta_u^2 + lambda*d^2 (or the symmetric-variant system) vanished, so a
    /// block update is undefined.
    #[error("degenerate block update: {0}")]
    DegenerateUpdate(String),

    /// The observed network is numerically zero; centralities are undefined.
    #[error("degenerate network: leading singular value is zero")]
    DegenerateNetwork,

    /// sigma_a = 0 makes the oracle tuning parameter infinite; the network is
    /// noiseless and plain SVD should be used instead.
    #[error("oracle tuning parameter is infinite (sigma_a = 0)")]
    InfiniteLambda,

    /// Every candidate tuning value failed during cross-validation.
    #[error("tuning selection failed: {0}")]
    SelectionFailed(String),

    /// A relative loss against a zero reference value is undefined.
    #[error("undefined loss: reference value is zero")]
    UndefinedLoss,

    /// A sign canonicalization had no usable reference direction.
    #[error("sign ambiguity: {0}")]
    SignAmbiguity(String),

    #[error("missing input for variant {variant}: {what}")]
    MissingInput { variant: String, what: String },

    #[error("parse error at row {row}, column {col}: {message}")]
    Parse { row: usize, col: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
