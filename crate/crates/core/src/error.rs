use thiserror::Error;

/// Errors for model construction, operator application and experiment plumbing.
#[derive(Debug, Error)]
pub enum Error {
    #[error("model validation failed at {path}: {reason}")]
    InvalidModel { path: String, reason: String },
    #[error("enumeration would touch {cells} cells, above the cap of {cap}")]
    SizeCapExceeded { cells: u128, cap: u64 },
    #[error("unknown component index {0}")]
    UnknownIndex(usize),
    #[error("chaos order {order} out of range for {components} components")]
    IndexOutOfRange { order: usize, components: usize },
    #[error("functionals belong to different models")]
    MismatchedModel,
    #[error("functional is not conditionally centered: max |E[F|Z=z]| = {0:.3e}")]
    NotCentered(f64),
    #[error("semigroup time must be nonnegative, got {0}")]
    NegativeTime(f64),
    #[error("functional is not standardized: E[F|Z]=0, E[F^2]=1 required ({0})")]
    NotStandardized(String),
    #[error("latent state {label} has zero conditional variance s_n")]
    DegenerateVariance { label: String },
    #[error("kernel components are not of product form: {0}")]
    NonProductForm(String),
    #[error("functional is not a pure chaos of order {order}: residual {residual:.3e}")]
    NotPureChaos { order: usize, residual: f64 },
    #[error("no homogeneous-sum structure attached to this functional")]
    NotHomogeneous,
    #[error("condition {0} failed: {1}")]
    ConditionFailed(&'static str, String),
    #[error("motif has {motif} vertices but the sample only has {sample}")]
    MotifTooLarge { motif: usize, sample: usize },
    #[error("decomposition would enumerate {terms} terms, above the cap of {cap}")]
    DecompositionTooLarge { terms: u128, cap: u64 },
    #[error("no admissible subhypergraph in the rate minimization family")]
    EmptyFamily,
    #[error("experiment exceeds the compute budget: {0}")]
    BudgetExceeded(String),
    #[error("support list has {0} entries, above the connectivity cap of 200")]
    TooManySupports(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("descriptor parse error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
