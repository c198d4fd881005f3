//! Quantum circuit optimization by verified rewriting and a learned policy.
//!
//! The crate is layered bottom-up: [`circuit`] (IR, QASM, costs, unitary
//! oracle), [`xfer`] (rewrite rules, matching, application), [`nn`] (tape
//! autodiff and Adam), [`gnn`] and [`agent`] (the policy), [`train`]
//! (trajectory collection and PPO updates), [`search`] (policy-guided search,
//! fine-tuning loop, partitioning) and [`analysis`] (landscape studies and
//! benchmark runs).

pub mod circuit;
pub mod config;
pub mod error;
pub mod agent;
pub mod analysis;
pub mod gnn;
pub mod nn;
pub mod search;
pub mod train;
pub mod xfer;

pub use error::{Error, Result};
