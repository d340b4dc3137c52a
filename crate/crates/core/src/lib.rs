//! Skeleton estimation for DAGs of linear structural equation models.
//!
//! The reduced PC-Algorithm ([`skeleton::rpc_skeleton`]) deletes an edge
//! `i - j` once some conditioning set of at most `eta` nodes drawn from
//! `adj(i) ∪ adj(j)` drives the absolute partial correlation to or below a
//! threshold. The classical PC skeleton phase ([`skeleton::pc_skeleton`]) is
//! included as a baseline, together with graph and SEM generators, exact
//! population oracles, faithfulness checkers, CPDAG orientation with a
//! Gaussian BIC for tuning, and the Monte Carlo experiment runners.

pub mod data;
pub mod error;
pub mod experiments;
pub mod faithfulness;
pub mod graph;
pub mod orient;
pub mod pcor;
pub mod rng;
pub mod sem;
pub mod skeleton;
pub mod subsets;

pub use data::DataMatrix;
pub use error::{Error, Result};
pub use graph::{Dag, UndirectedGraph};
pub use sem::{CovMatrix, LinearSem, NoiseFamily};
