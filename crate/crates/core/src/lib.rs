//! Compressed-sensing multi-target visible light positioning.
//!
//! The crate models an indoor room lit by a lattice of ceiling LEDs, builds
//! grid fingerprints from the Lambertian line-of-sight channel, synthesizes
//! cooperative multi-target measurements and recovers the occupied grid cells
//! with sparse solvers. Two pipelines are provided:
//!
//! * **CSM**: inter-target cooperation only. The aggregated received power
//!   `p = J θ + σ² 1` is solved against the power fingerprint `J`.
//! * **CoCSM**: adds inter-anchor cooperation. The upper triangle of the
//!   aggregated correlation matrix `y yᵀ` is solved against `Ψ`, which has
//!   `M(M+1)/2` rows instead of `M`.
//!
//! A per-target RSS lateration baseline and a Monte-Carlo campaign harness
//! live in [`evaluation`].

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod cli;
pub mod error;
pub mod evaluation;
pub mod measurement;
pub mod recovery;
pub mod scenario;
pub mod streams;

pub use error::{Error, Result};
