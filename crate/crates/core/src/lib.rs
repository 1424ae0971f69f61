//! Monte Carlo design analysis for two-condition repeated-measures
//! experiments: t-tests, crossed random-intercept simulation and REML
//! fitting, power and Type S/M error estimation, optional stopping,
//! funnel-plot summaries and Box-Cox selection.

pub mod analysis;
pub mod boxcox;
pub mod dataset;
pub mod demo;
pub mod design;
pub mod dist;
pub mod error;
pub mod inference;
pub mod lmm;
pub mod meta;
mod optim;
pub mod rng;

pub use error::{Error, Result};
