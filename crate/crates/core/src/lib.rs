//! Synchronous and asynchronous two-level Schwarz-type solvers for sparse
//! linear systems, with a deterministic delay-programmable simulator and
//! numerical checks of asynchronous convergence conditions.

pub mod analysis;
pub mod config;
pub mod decomposition;
pub mod error;
pub mod linalg;
pub mod problem;
pub mod report;
pub mod runtime;
pub mod schwarz;
pub mod sync;

pub use error::{Error, Result};
