use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("connectivity not reached after {attempts} attempts (n={n}, p={p}): edge probability too small for this network size")]
    ConnectivityRetriesExhausted { n: usize, p: f64, attempts: usize },

    #[error("eigenvalue iteration did not converge for a {dim}x{dim} matrix")]
    EigenNonConvergence { dim: usize },

    #[error("predictor inapplicable: {0}")]
    PredictorInapplicable(String),

    #[error("divergence detected at t={t}: residual {residual:e} exceeds {limit:e}")]
    Divergence { t: usize, residual: f64, limit: f64 },

    #[error("degenerate push-sum weight at t={t}, node {node}: {weight:e}")]
    DegenerateWeights { t: usize, node: usize, weight: f64 },

    #[error("spectral constants undefined: sigma_hat = {0} >= 1")]
    SigmaNotContractive(f64),

    #[error("malformed schedule text at line {line}: {msg}")]
    ScheduleParse { line: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;
