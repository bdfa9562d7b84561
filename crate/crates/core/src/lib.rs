//! Temporal reasoning over annotated logic programs with interval truth values.

pub mod lattice;
pub mod model;
pub mod parse;
pub mod store;
pub mod grounder;
pub mod trace;
pub mod engine;
pub mod kg;
pub mod sim;
pub mod report;
