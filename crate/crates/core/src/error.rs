use alloc::string::String;

use crate::medium::MediumKind;

/// Result alias used throughout the crate.
pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Every failure the physics layer can report.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[non_exhaustive]
pub enum Error {
    /// A parameter is outside its allowed domain.
    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument {
        /// Parameter name.
        name: &'static str,
        /// What was wrong with it.
        reason: String,
    },
    /// Two operands describe waveguides with different mode counts.
    #[error("mode count mismatch: {left} vs {right}")]
    ModeMismatch {
        /// Modes of the left operand.
        left: usize,
        /// Modes of the right operand.
        right: usize,
    },
    /// The multiple-reflection matrix `1 - r_A r'_B` is numerically singular.
    #[error("near-singular cavity in star product (condition number {condition:.3e})")]
    NearSingularCavity {
        /// Estimated 1-norm condition number.
        condition: f64,
    },
    /// An amplifying composite has a singular value of S below one.
    #[error("amplifying medium lost SS† >= 1 (smallest eigenvalue margin {margin:.3e})")]
    GainPositivityViolation {
        /// Tolerance that was violated.
        margin: f64,
    },
    /// A scattering matrix does not satisfy the invariant of its medium kind.
    #[error("scattering matrix violates the {kind:?} invariant")]
    InvariantViolation {
        /// The kind whose invariant failed.
        kind: MediumKind,
    },
    /// Ohm's-law fit of the transmission failed.
    #[error("mean free path fit failed: residual relative error {residual:.3}")]
    FitFailed {
        /// Largest relative residual of the fit.
        residual: f64,
    },
    /// The mean photocount vanishes, so the Fano factor is undefined.
    #[error("mean photocount is zero")]
    ZeroMeanCount,
    /// No light reaches the probed output mode.
    #[error("transmission into the probed mode is zero")]
    ZeroTransmission,
    /// The resolvent in the generating function is singular.
    #[error("resolvent 1 - z f D Q is singular")]
    SingularResolvent,
    /// A logarithm or square root received a non-positive argument.
    #[error("argument {value:e} outside the domain of the generating function")]
    DomainError {
        /// Offending value.
        value: f64,
    },
    /// Richardson extrapolation of a numerical derivative did not settle.
    #[error("numerical derivative of order {order} unreliable (relative disagreement {disagreement:.3e})")]
    PrecisionLoss {
        /// Derivative order.
        order: usize,
        /// Relative disagreement between the two best estimates.
        disagreement: f64,
    },
    /// The amplifying medium is at or beyond the laser threshold `s = π`.
    #[error("laser threshold reached at s = {s}")]
    ThresholdReached {
        /// Normalised length.
        s: f64,
    },
    /// Every sample of an ensemble was rejected.
    #[error("all {n_samples} samples were at or above threshold")]
    AllSamplesAboveThreshold {
        /// Number of samples attempted.
        n_samples: usize,
    },
    /// Too much probability leaks past the Fock-space cutoff.
    #[error("Fock truncation leaks {leaked:.3e} of the norm")]
    TruncationLeak {
        /// Missing probability mass.
        leaked: f64,
    },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument {
            name,
            reason: reason.into(),
        }
    }
}
