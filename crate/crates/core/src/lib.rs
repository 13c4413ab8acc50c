//! Reduced-order model layer for stepping-stone locomotion.
//!
//! The crate covers the model-based half of a planner-guided walking
//! pipeline:
//!
//! - [`lip`]: closed-form passive-ankle linear-inverted-pendulum dynamics,
//!   orbital energy, step-timing inversion, and the impact momentum reset.
//! - [`reference`]: the per-step planner and per-tick reference generator
//!   (step timing, momentum regulation, CoM splines, HLIP lateral stepping,
//!   Bézier swing-foot trajectories, orientation and arm references).
//! - [`terrain`]: procedural stepping-stone terrain families with a
//!   difficulty-indexed curriculum, heightmap queries, and export formats.
//! - [`clf`]: Riccati-based control Lyapunov function machinery over
//!   output-tracking errors, with decrease margins and reward shaping.
//! - [`sim`]: the hybrid closed-loop rollout engine that ties the pieces
//!   together and scores foothold traversal.

// Validation deliberately uses negated comparisons (`!(x > 0.0)`) so NaN
// fails the checks too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod clf;
pub mod lip;
pub mod reference;
pub mod sim;
pub mod terrain;

/// Errors shared across the crate's numeric entry points.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument `{arg}`: {reason}")]
    InvalidArgument { arg: &'static str, reason: String },
    /// The requested CoM target cannot be reached along the current
    /// trajectory (insufficient orbital energy or wrong direction of
    /// travel). Callers fall back to the maximum step duration.
    #[error("target position is not reachable from the current state")]
    Unreachable,
}

impl Error {
    pub(crate) fn invalid(arg: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument {
            arg,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
