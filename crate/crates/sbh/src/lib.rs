//! Survival bump hunting: finding box-shaped subregions of covariate space
//! whose members suffer unusually high event risk, from right-censored
//! time-to-event data.
//!
//! The estimator peels thin quantile slabs off one face of a covariate box
//! at a time ("patient" peeling), scoring each candidate slab by the rate of
//! change of a survival criterion (log-rank statistic, in-box
//! cumulative-hazard mass, or Cox log-hazard ratio) per unit of support
//! given up.  The resulting trajectory of nested boxes is tuned by
//! replicated K-fold cross-validation, significance is assessed by
//! permutation of the outcome pairs, and an outer coverage loop removes a
//! discovered box and repeats, producing a disjunctive box rule.
//!
//! Module map:
//! * [`data`] — right-censored data sets and column views;
//! * [`survival`] — risk tables, Kaplan-Meier / Nelson-Aalen estimators,
//!   log-rank, cumulative-hazard summary, Cox log-hazard ratio, concordance
//!   error, and curve end points;
//! * [`peel`] — boxes, peel/paste candidates, trajectories, the coverage
//!   loop, and covariate usage/importance traces;
//! * [`cv`] — stratified folds, averaged/combined cross-validation,
//!   replication, model-size selection, and permutation p-values;
//! * [`sim`] — synthetic data models with calibrated censoring;
//! * [`io`] — CSV/JSON input and run artifacts, plus the runners behind the
//!   `sbh` command-line interface.
//!
//! The `examples/` directory holds one runnable program per capability;
//! start with `cargo run --example peel_single_trajectory`.

pub mod cv;
pub mod data;
pub mod error;
pub mod io;
pub mod peel;
pub mod seed;
pub mod sim;
pub mod survival;

pub use data::{Columns, SurvivalData};
pub use error::{Error, Result};
