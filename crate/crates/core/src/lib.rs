//! Finite-element forward and inverse engine for EEG and EIT.
//!
//! The pipeline runs from closed compartment surfaces ([`geometry`]) to a
//! labeled tetrahedral mesh ([`meshgen`]), a complete-electrode-model system
//! ([`fem`]) solved with lumped-diagonal PCG ([`solver`]), lead fields
//! ([`leadfield`]), and hierarchical Bayesian IAS inversion ([`inverse`]).

pub mod error;
pub mod experiments;
pub mod fem;
pub mod geometry;
pub mod harness;
pub mod inverse;
pub mod leadfield;
pub mod meshgen;
pub mod simulate;
pub mod solver;
pub mod sparse;

pub use error::{Error, Result};
