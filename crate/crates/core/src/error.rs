use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("cannot parse {0}")]
    Parse(String),

    #[error("{line}:{column}: syntax error: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("{line}:{column}: invalid token `{token}`: {message}")]
    Semantic {
        line: usize,
        column: usize,
        token: String,
        message: String,
    },

    #[error("invalid sequence: {0}")]
    Sequence(String),

    #[error("simulation failed: {0}")]
    Simulation(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("rank-deficient Jacobian in fit of {model}")]
    RankDeficient { model: String },

    #[error("bracketing failed: f({lo:e}) = {f_lo:e}, f({hi:e}) = {f_hi:e}")]
    Bracket { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },

    #[error("sweep point {index} ({param} = {value}): {source}")]
    SweepPoint {
        index: usize,
        param: String,
        value: f64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// Errors in the user's input (files, parameters) rather than in a run.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Parse(_) | Error::Syntax { .. } | Error::Semantic { .. } | Error::Sequence(_)
        )
    }
}
