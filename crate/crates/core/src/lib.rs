//! Trustworthiness metrics for binary phishing detectors.
//!
//! The crate is `no_std` (with `alloc`) and holds every pure computation:
//!
//! - [`records`]: prediction-log domain types, validation and grouping into
//!   per-(model, dataset) evaluation units.
//! - [`corpus`]: email text normalization, seeded splitting, undersampling and
//!   rule-based perturbation with a lexical similarity gate.
//! - [`calibration`]: temperature scaling, NLL grid search, expected
//!   calibration error and reliability tables.
//! - [`metrics`]: classification metrics, normalized F1 variance, perturbation
//!   robustness, the trust calibration index (TCI) and cross-dataset
//!   stability (CDS).
//! - [`stats`]: labelled random streams, percentile bootstrap, paired
//!   bootstrap tests and Cohen's kappa.
//! - [`synth`]: a synthetic detector whose metrics are known by construction.
//! - [`compare`]: paired bootstrap comparison of two models per dataset.
//! - [`evaluate`]: the end-to-end evaluation of a prediction log into a
//!   [`evaluate::TrustReport`].
//!
//! IO, file formats and the command-line front end live in the companion
//! `tcf` crate.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod calibration;
pub mod compare;
pub mod config;
pub mod corpus;
pub mod error;
pub mod evaluate;
pub mod exec;
pub mod metrics;
pub mod records;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
pub use records::{Label, PredictionRecord, Split};
