use thiserror::Error;

/// Errors raised by the estimation library.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration field is missing, malformed or out of range.
    #[error("{path}: {message}")]
    Config { path: String, message: String },

    /// The plant violates a modelling assumption (Jordan structure,
    /// observability, sampling bounds).
    #[error("invalid model: {0}")]
    Model(String),

    /// Dimension mismatch between matrices or vectors.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("sampling interval {dt} exceeds T_max = {t_max}")]
    IntervalTooLong { dt: f64, t_max: f64 },

    #[error("measurement noise variance {r} exceeds r_bar = {r_bar}")]
    NoiseAboveBound { r: f64, r_bar: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    /// The pair used for gain synthesis is numerically unobservable at this gap.
    #[error("pair is numerically unobservable at gap {gap} (condition number {cond:e})")]
    NumericallyUnobservable { gap: f64, cond: f64 },

    /// Carries a 0-based state index; the message is 1-based.
    #[error("state {} is not observed by any sensor", .0 + 1)]
    UnobservableState(usize),

    #[error("gain with squared norm {norm_sq:e} exceeds the budget l_bar = {l_bar:e}")]
    GainAboveBudget { norm_sq: f64, l_bar: f64 },

    #[error("{count} sensor subsets exceed the enumeration cap of {cap}")]
    SubsetOverflow { count: u128, cap: u128 },

    #[error("empty value set")]
    Empty,

    #[error("time {t} outside the open interval ({lo}, {hi})")]
    OutOfInterval { t: f64, lo: f64, hi: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config { path: path.into(), message: message.into() }
    }
}
