//! An analytic query engine that executes relational joins and group-by
//! aggregates as matrix multiplications, with a cost-based optimizer choosing
//! between dense, tiled-sparse, and blocked kernels under emulated
//! tensor-unit precision, and a classical hash-join executor serving as both
//! fallback plan and correctness oracle.

pub mod catalog;
pub mod cli;
pub mod encode;
pub mod error;
pub mod exec;
pub mod harness;
pub mod kernels;
pub mod planner;
pub mod relational;
pub mod sql;

pub use error::{Error, Result};
