use thiserror::Error;

/// Errors surfaced by the estimation library.
#[derive(Error, Debug)]
pub enum Error {
    #[error("interval endpoint is NaN")]
    NanEndpoint,
    #[error("invalid interval: lo = {lo} > hi = {hi}")]
    InvalidInterval { lo: f64, hi: f64 },
    #[error("clip window must be positive, got {0}")]
    NonPositiveWindow(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("survival set is empty")]
    EmptySurvivalSet,
    #[error("estimated survival mass {alpha_hat:.3e} is below the {min:.1e} floor")]
    AlphaTooSmall { alpha_hat: f64, min: f64 },
    #[error("covariance is not positive semi-definite (min eigenvalue {min_eig:.3e})")]
    NotPsd { min_eig: f64 },
    #[error("truncation too severe: a sample exceeded {cap} rejection attempts")]
    TruncationTooSevere { cap: u64 },
    #[error("singular design matrix: min eigenvalue {min_eig:.3e} (relative threshold {threshold:.1e})")]
    SingularDesign { min_eig: f64, threshold: f64 },
    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("brute-force ERM instance too large: {count} candidate gap sets (cap {cap})")]
    CombinatorialBlowup { count: u128, cap: u128 },
    #[error("survival set has zero mass at mean {mu}")]
    ZeroMass { mu: f64 },
    #[error("no sample response falls inside the surrogate set")]
    NoSurvivingSamples,
    #[error("window clipped the learned set to nothing")]
    DegenerateWindow,
    #[error("aggregation requires at least one PSGD run")]
    EmptyRuns,
    #[error("too many skipped PSGD steps: {skipped} of {total}")]
    TooManySkippedSteps { skipped: usize, total: usize },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("dataset schema error at line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
