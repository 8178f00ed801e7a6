//! Hypothesis-driven active learning over molecular feature tables.
//!
//! Candidate structure–property laws are generated from a small seed subset
//! by operator expansion and sparse regression ([`forge`]), wrapped as
//! parametric mean functions of Gaussian processes ([`sgp`]), and compared in
//! a reward-driven exploration loop ([`learning`]).

pub mod config;
pub mod data;
pub mod expr;
pub mod forge;
pub mod learning;
pub mod report;
pub mod rng;
pub mod selfcheck;
pub mod sgp;
pub mod synth;
