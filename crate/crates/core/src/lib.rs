//! Simulator and analysis library for device-independent private
//! randomness expansion.
//!
//! The crate executes a GHZ-test expansion protocol against pluggable
//! honest and adversarial device models and verifies the security-relevant
//! quantities (pass probabilities, min-entropies, trace distances,
//! expansion rates, state/operator characterization) by exact computation
//! at desk scale.

pub mod amplify;
pub mod bits;
pub mod devices;
pub mod nonlocal;
pub mod protocol;
pub mod quantum;

pub use bits::{BitString, RandomnessLedger, SeededRng};
