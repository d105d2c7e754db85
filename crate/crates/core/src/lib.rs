//! Reward-poisoning attacks on two batch model-based learners: a tabular
//! certainty-equivalence learner and a certainty-equivalent LQR controller.
//!
//! The attacker changes only the rewards in a training batch so that the
//! learner's policy becomes an attacker-chosen target. Both attacks reduce to
//! convex programs solved by [`conic`].

// links the system BLAS/LAPACK used by the SDP solver
use openblas_src as _;

pub mod conic;
pub mod data;
pub mod env;
pub mod error;
pub mod experiments;
pub mod lqr;
pub mod mdp;
pub mod plot;
pub mod random;
pub mod tce;
pub mod verify;

pub use error::{Error, Result};
