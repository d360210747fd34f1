//! Causal-effect estimation workbench: confounder-adjustment and
//! instrumental-variable estimators, their diagnostics, a structural
//! simulator with exact oracles, and a Monte Carlo harness.

pub mod cli;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod estimators;
pub mod learners;
pub mod mc;
pub mod rng;
pub mod scm;
pub mod stats;

pub use error::{Error, Result};
