use thiserror::Error;

/// Errors produced by the core algorithms.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A training set needs at least two rows.
    #[error("training set has {0} rows, at least 2 are required")]
    TooFewRows(usize),
    /// Row counts or vector lengths disagree.
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch {
        /// Expected length.
        expected: usize,
        /// Observed length.
        actual: usize,
    },
    /// A query vector does not match the training feature dimension.
    #[error("feature dimension mismatch: model has {expected} features, query has {actual}")]
    DimensionMismatch {
        /// Dimension the model was trained with.
        expected: usize,
        /// Dimension of the query.
        actual: usize,
    },
    /// NaN or infinite value where a finite one is required.
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    /// Invalid configuration or argument.
    #[error("invalid {name}: {reason}")]
    Invalid {
        /// Parameter name.
        name: &'static str,
        /// What is wrong with it.
        reason: &'static str,
    },
    /// Two calibration statistics compare equal.
    #[error("tied calibration statistics at sorted positions {0} and {1}; tie-breaking noise is missing")]
    Tie(usize, usize),
    /// A calibration set must contain at least one instance.
    #[error("empty calibration set")]
    EmptyCalibration,
    /// The requested miscoverage level selects no order statistic.
    #[error("delta {delta} is outside the defined range for this interval with n = {n}")]
    DeltaOutOfRange {
        /// Requested miscoverage level.
        delta: f64,
        /// Calibration size.
        n: usize,
    },
    /// CQR correction made the interval cross.
    #[error("quantile crossing: lower end {lo} exceeds upper end {hi}")]
    Crossing {
        /// Lower end.
        lo: f64,
        /// Upper end.
        hi: f64,
    },
    /// Episode horizon does not match what is expected.
    #[error("horizon mismatch: expected {expected}, got {actual}")]
    HorizonMismatch {
        /// Expected horizon.
        expected: usize,
        /// Observed horizon.
        actual: usize,
    },
    /// Timestep outside `0..H`.
    #[error("timestep {t} out of range for horizon {horizon}")]
    TimestepOutOfRange {
        /// Requested timestep.
        t: usize,
        /// Horizon.
        horizon: usize,
    },
    /// An episode set or observation stream was empty.
    #[error("empty {0}")]
    Empty(&'static str),
}

/// Result alias for this crate.
pub type Result<T> = core::result::Result<T, Error>;
