//! Simulator and analysis toolkit for quantum location verification (QLV)
//! under decoherence.
//!
//! The crate models Bell and GHZ states passing through noisy quantum
//! channels in the operator-sum (Kraus) representation, reproduces
//! fidelity-vs-decoherence curves and verification-instance probabilities,
//! and runs a deterministic event-driven simulation of an
//! entanglement-swapping location-verification protocol with timing-based
//! verification and adversary models.

pub mod analysis;
pub mod channels;
pub mod error;
pub mod linalg;
pub mod noise;
pub mod protocol;
pub mod selftest;
pub mod states;

pub use error::{QlvError, Result};
