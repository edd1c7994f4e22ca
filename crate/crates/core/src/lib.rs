//! Active-importance-sampling actor-critic (AISAC).
//!
//! The crate is organised around small, exactly solvable problems so that
//! every stochastic estimate can be checked against a closed-form answer:
//!
//! * [`mdp`] holds tabular MDPs with dynamic-programming oracles and the
//!   continuous control tasks (pendulum, point-mass reacher).
//! * [`policy`] provides softmax and Gaussian policies with analytic scores.
//! * [`critic`] is the linear action-value function and its TD update.
//! * [`behavior`] builds the variance-minimising behavior policy, exactly in
//!   the tabular case and by cross-entropy fitting for Gaussians.
//! * [`estimators`] contains Monte-Carlo and importance-sampling gradient
//!   estimators together with exact variance computations.
//! * [`training`] runs the actor-critic loop, on-policy or with an active
//!   behavior policy.
//! * [`experiment`] orchestrates multi-seed runs and variance studies and
//!   writes CSV output; [`smoothing`] implements the Savitzky-Golay filter.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod behavior;
pub mod critic;
mod error;
pub mod estimators;
pub mod experiment;
pub mod mdp;
pub mod policy;
pub mod smoothing;
pub mod tensor_text;
pub mod training;

pub use error::{Error, Result};
