use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// No grid point satisfies the support predicate. Either the truncation
    /// radius or the latent grid resolution is too coarse for this input.
    #[error("empty section{}", atom.map(|i| format!(" at atom {i}")).unwrap_or_default())]
    EmptySection { atom: Option<usize> },

    #[error("moment function returned a non-finite value at grid point {point}")]
    NonFiniteMoment { point: usize },

    #[error("numerical instability: {0}")]
    NumericalInstability(String),

    #[error("simplex iteration limit ({0}) reached")]
    IterationLimit(usize),

    #[error("empty interval: {0}")]
    EmptyInterval(String),

    /// The denominator of a ratio-type counterfactual parameter can be zero
    /// under some admissible distribution.
    #[error("ratio parameter undefined: denominator expectation can be {min_denominator:e}")]
    RatioDegenerate { min_denominator: f64 },

    #[error(
        "counterfactual correspondence is empty at z={z:?}, u={u:?}, theta={theta:?}"
    )]
    NonemptyCorrespondenceViolated {
        z: Vec<f64>,
        u: Vec<f64>,
        theta: Vec<f64>,
    },

    #[error("not supported: {0}")]
    NotSupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
