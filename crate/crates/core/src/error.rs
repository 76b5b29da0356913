//! Crate-wide error type.

use alloc::string::String;
use core::fmt;

/// Convenience alias used throughout the crate.
pub type Result<T> = core::result::Result<T, Error>;

/// Errors surfaced by the characterization pipeline.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A physical or statistical parameter violates its domain.
    InvalidParam {
        /// Name of the offending parameter.
        name: &'static str,
        /// What was wrong with it.
        why: String,
    },
    /// A matrix that must be Hermitian (to tolerance) is not.
    NonHermitian {
        /// Largest elementwise deviation from the conjugate transpose.
        deviation: f64,
    },
    /// A matrix that must be symmetric (to tolerance) is not.
    NonSymmetric {
        /// Largest elementwise asymmetry.
        deviation: f64,
    },
    /// Propagation was requested over a negative time interval.
    NegativeTime {
        /// The offending duration.
        t: f64,
    },
    /// A covariance factorization failed; the matrix is numerically singular.
    DegenerateCovariance {
        /// Smallest pivot (or eigenvalue) encountered.
        min_pivot: f64,
    },
    /// Requested expansion rank underflows double precision.
    RankUnderflow {
        /// Largest rank whose eigenvalue is still representable.
        max_rank: usize,
    },
    /// Data and simulation grids disagree.
    GridMismatch {
        /// Human-readable description of the mismatch.
        detail: String,
    },
    /// A time series is too short for the requested analysis.
    SeriesTooShort {
        /// Number of points available.
        n: usize,
        /// Number of points required.
        required: usize,
    },
    /// The proposal redraw loop exhausted its draw budget; the prior box is
    /// narrower than the proposal reach.
    ProposalExhausted {
        /// Gibbs block in which the proposal failed (0/1 = alpha, 2 = theta).
        block: usize,
    },
    /// Burn-in and thinning leave too few retained samples.
    TooFewSamples {
        /// Number of samples that would remain.
        retained: usize,
    },
    /// A configuration value failed validation.
    Config(String),
    /// Generic numerical failure with context.
    Numeric(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidParam { name, why } => write!(f, "invalid parameter `{name}`: {why}"),
            Error::NonHermitian { deviation } => {
                write!(f, "matrix is not Hermitian (max deviation {deviation:.3e})")
            }
            Error::NonSymmetric { deviation } => {
                write!(f, "matrix is not symmetric (max deviation {deviation:.3e})")
            }
            Error::NegativeTime { t } => write!(f, "negative propagation time {t}"),
            Error::DegenerateCovariance { min_pivot } => write!(
                f,
                "covariance factorization failed; smallest pivot {min_pivot:.3e}"
            ),
            Error::RankUnderflow { max_rank } => write!(
                f,
                "expansion eigenvalues underflow below rank {max_rank}; reduce the rank"
            ),
            Error::GridMismatch { detail } => write!(f, "grid mismatch: {detail}"),
            Error::SeriesTooShort { n, required } => {
                write!(f, "series has {n} points, {required} required")
            }
            Error::ProposalExhausted { block } => write!(
                f,
                "proposal redraw budget exhausted in block {block}; prior box narrower than proposal reach"
            ),
            Error::TooFewSamples { retained } => {
                write!(f, "burn-in/thinning would retain only {retained} samples")
            }
            Error::Config(msg) => write!(f, "configuration error: {msg}"),
            Error::Numeric(msg) => write!(f, "numerical error: {msg}"),
        }
    }
}

impl core::error::Error for Error {}

impl Error {
    /// True for errors caused by user-supplied configuration rather than by
    /// numerics; drivers map these to a distinct exit status.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::InvalidParam { .. }
                | Error::Config(_)
                | Error::TooFewSamples { .. }
                | Error::ProposalExhausted { .. }
                | Error::SeriesTooShort { .. }
                | Error::GridMismatch { .. }
        )
    }
}
