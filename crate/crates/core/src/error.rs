use thiserror::Error;

use crate::dynamics::{SampledArc, Trajectory};

/// Error type shared by every module of the crate.
#[derive(Debug, Error)]
pub enum DishamError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("metric tensor is not symmetric positive definite")]
    NotPositiveDefinite,

    #[error("surface normal data (a, b) must not both be zero")]
    ZeroNormal,

    #[error("covector is not unit length in the inverse metric (deviation {deviation:e})")]
    UnnormalizedCovector { deviation: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    /// Transversality failure at a surface contact. Reported, never resolved.
    #[error("grazing contact: {context} has magnitude {value:e} below the transversality threshold")]
    GrazingContact { context: &'static str, value: f64 },

    #[error("trajectory does not reach the surface before t = {t_max}")]
    NoCrossing { t_max: f64 },

    #[error("integrator step size underflow at parameter {param}")]
    StepSizeUnderflow { param: f64 },

    #[error("trajectory trapped in the transition layer beyond the parameter budget {budget}")]
    TrappedInLayer { budget: f64, partial: SampledArc },

    #[error("no terminal point found on the jump characteristic before s = {s_max}")]
    UnboundedCharacteristic { s_max: f64 },

    #[error("jump characteristic left the energy band at s = {s} before reaching a border")]
    BandViolation { s: f64 },

    #[error("degenerate discontinuity: the two Hamiltonians agree at the impact point")]
    DegenerateDiscontinuity,

    #[error("transition inconsistency: {0}")]
    TransitionInconsistent(String),

    /// Wraps an error raised mid-simulation, keeping the arcs already built.
    #[error("{source} ({} arcs of partial trajectory retained)", partial.arcs.len())]
    Interrupted {
        #[source]
        source: Box<DishamError>,
        partial: Trajectory,
    },
}

impl DishamError {
    /// The innermost error, unwrapping any [`DishamError::Interrupted`] layers.
    pub fn root(&self) -> &DishamError {
        match self {
            DishamError::Interrupted { source, .. } => source.root(),
            other => other,
        }
    }
}
