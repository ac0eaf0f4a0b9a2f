//! Survival-analysis toolkit and trial simulator for treatment-crossover
//! adjustment with external-data borrowing.
//!
//! The crate provides:
//!
//! - [`survival`]: weighted Kaplan-Meier estimation and restricted mean
//!   survival time (RMST) with explicit extrapolation policies;
//! - [`fit`]: weighted censored Weibull AFT and logistic maximum likelihood
//!   on a shared Newton optimizer;
//! - [`sim`]: the trial data-generating mechanism (RCT plus external control
//!   cohort) and the quadrature truth for the control-group RMST;
//! - [`adjust`]: the five analysis methods (Oracle, ITT, two-stage
//!   estimation, augmented two-stage estimation, external control arm);
//! - [`bootstrap`]: percentile bootstrap over the entire adjustment pipeline;
//! - [`study`]: the replication harness computing percent bias, empirical SE
//!   and RMSE of the control-group RMST across scenarios and conditions.

pub mod adjust;
pub mod config;
pub mod dataio;
pub mod bootstrap;
pub mod error;
pub mod study;
pub mod fit;
pub mod quad;
pub mod sim;
pub mod stream;
pub mod survival;

pub use error::{Error, Result};
