//! Simulation laboratory for online convex optimization with stateful
//! incurred costs under sparse block communication (OCO-S²).
//!
//! The crate is organised around the pipeline of a single experiment:
//!
//! * [`lti`] — stable linear dynamics, synthetic disturbances, and the
//!   finite-window / diagonal surrogate states derived from them;
//! * [`costs`] — quadratic stage costs, their client-wise surrogate
//!   decomposition, analytic gradients, and audited assumption constants;
//! * [`learner`] — the block online-gradient learner and its
//!   prediction-augmented variant, including participation sampling;
//! * [`comparator`] — the offline hindsight comparator (a convex QP with
//!   dynamics, box constraints, and a Euclidean path budget) plus
//!   independently recomputed feasibility diagnostics;
//! * [`metrics`] — regret and communication accounting and the evaluation
//!   of the theoretical bound right-hand sides;
//! * [`experiments`] — the sweep campaigns (block length, memory,
//!   participation, horizon scaling, prediction mismatch) with seed
//!   aggregation.

use std::fmt;

pub mod comparator;
pub mod costs;
pub mod experiments;
pub mod learner;
pub mod linalg;
pub mod lti;
pub mod metrics;
pub mod rng;

/// Crate-wide error type.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Invalid configuration or dimension mismatch.
    Config(String),
    /// Two artifacts built from different disturbance realizations were mixed.
    Provenance(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Config(msg) => write!(f, "configuration error: {msg}"),
            Error::Provenance(msg) => write!(f, "provenance mismatch: {msg}"),
        }
    }
}

impl std::error::Error for Error {}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn config_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}
