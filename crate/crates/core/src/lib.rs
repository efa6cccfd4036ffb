//! Environment design for Bayesian inverse reinforcement learning.
//!
//! The learner keeps a posterior over state rewards built from expert
//! demonstrations observed in several environments, and each round picks the
//! next demonstration environment by maximising the Bayesian regret of the
//! best policy under that posterior.

pub mod belief;
pub mod design;
pub mod domains;
pub mod error;
pub mod expert;
pub mod harness;
pub mod mdp;
pub mod rng;
pub mod session;

pub use error::{Error, Result};
