//! Solver library for single-agent decision problems expressed as logic
//! programs over independent probabilistic and agent-controlled choices.
//!
//! A theory declares alternatives (nature blocks with probabilities,
//! decision blocks with observations), optional observable blocks, and an
//! acyclic rule base whose heads include utility values. The library parses
//! such theories, validates them, enumerates possible worlds, explains
//! formulas as sets of composite choices, and derives optimal policies.

pub mod abduction;
pub mod emit;
pub mod engine;
pub mod fixtures;
pub mod gen;
pub mod model;
pub mod oracle;
pub mod parse;
pub mod solver;
pub mod validate;
