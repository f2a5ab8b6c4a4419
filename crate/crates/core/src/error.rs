use thiserror::Error;

/// Errors raised by model construction, estimation and the experiment harness.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("model validation failed: {0}")]
    ModelValidation(String),

    #[error("transition matrix D_{k} is singular or ill-conditioned (condition estimate {condition:.3e})")]
    Singular { k: usize, condition: f64 },

    #[error("covariance arguments out of order: s = {s} > k = {k}")]
    ArgumentOrder { k: usize, s: usize },

    #[error("observation function returned a non-finite value at k = {k}")]
    Evaluation { k: usize },

    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    Shape {
        context: &'static str,
        expected: String,
        got: String,
    },

    #[error("sequencing error: expected index {expected}, got {got}")]
    Sequencing { expected: usize, got: usize },

    #[error("numerical failure at k = {k}: {reason}")]
    Numerical { k: usize, reason: String },

    #[error("time index {k} outside the defined horizon (max {max})")]
    OutOfHorizon { k: usize, max: usize },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("oracle failure: {0}")]
    Oracle(String),

    #[error("run {run} (seed {seed}): {source}")]
    Run {
        run: usize,
        seed: u64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn shape(context: &'static str, expected: (usize, usize), got: (usize, usize)) -> Self {
        Error::Shape {
            context,
            expected: format!("{}x{}", expected.0, expected.1),
            got: format!("{}x{}", got.0, got.1),
        }
    }

    /// True for failures that originate in the numerics rather than in the inputs.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Numerical { .. } | Error::Singular { .. } | Error::Oracle(_) => true,
            Error::Run { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
