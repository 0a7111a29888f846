//! Turbine- and site-specific wind power reference estimation from SCADA
//! telemetry, rolling energy-residual monitoring, underperformance event
//! detection and channel-level diagnosis.
//!
//! The pipeline runs in stages that mirror the module layout:
//!
//! ```text
//! ingest ─► preprocess ─► regressors ─► monitor ─► diagnose
//!   ▲                                                 │
//!   └──────────── simulator (synthetic ground truth) ─┘
//! ```
//!
//! Every stage is a set of pure functions over immutable inputs. Randomised
//! steps (train/test split, bagging, subsampling, simulation) take an explicit
//! seed and are bit-reproducible.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod diagnose;
pub mod error;
pub mod ingest;
pub mod monitor;
pub mod preprocess;
pub mod quantile;
pub mod regressors;
pub mod report;
pub mod simulator;

pub use config::{Hyperparameters, Settings, TurbineConfig};
pub use error::{Error, Result};
pub use ingest::ScadaRecord;
