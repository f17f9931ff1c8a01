//! Gini-index based monitoring of exposure-weighted claim frequency models.
//!
//! The crate decides whether a deployed model has suffered real concept drift:
//! a bootstrap estimates the null distribution of the Gini index on a holdout
//! from the training period, and the Gini index on new data is z-tested
//! against it.
//!
//! Modules:
//! - [`data`]: datasets, CSV I/O, pre-aggregation, time-splitting
//! - [`metrics`]: CAP curves, Gini index, Poisson deviance, balance correction
//! - [`inference`]: bootstrap null distribution and the drift test
//! - [`drift`]: synthetic portfolios and claim-redistribution drift
//! - [`glm`]: Poisson log-link GLM with exposure offset

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod data;
pub mod drift;
pub mod error;
pub mod glm;
pub mod inference;
pub mod metrics;
pub mod numeric;

pub use error::{Error, ErrorClass, Result};
