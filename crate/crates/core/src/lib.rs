//! Coordinated multicell downlink beamforming for power minimization under
//! per-user SINR targets.
//!
//! The exact optimum comes from uplink-downlink duality ([`duality`]). The
//! decentralized schemes in [`decentralized`] fix the intercell interference
//! each base station may cause, using deterministic equivalents
//! ([`det_equiv`]) that only depend on channel statistics. [`grouping`] is the
//! closed-form variant for user populations with orthogonal eigenspaces, and
//! [`harness`] runs seeded Monte Carlo experiments over all of it.

pub mod decentralized;
pub mod det_equiv;
pub mod duality;
mod error;
pub mod grouping;
pub mod harness;
pub mod linalg;
mod rng;
pub mod scenario;

pub use error::{Error, Result};

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;
