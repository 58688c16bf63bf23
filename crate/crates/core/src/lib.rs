//! Distributed Gaussian-process regression on truncated Karhunen-Loeve
//! bases: estimators, error bounds, SURE tuning and average consensus.

pub mod bounds;
pub mod cli;
pub mod consensus;
pub mod error;
pub mod harness;
pub mod kernel_expansion;
pub mod linalg;
pub mod regression;
pub mod seeding;
pub mod tuning;

pub use error::{Error, Result};
