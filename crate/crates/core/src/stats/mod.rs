//! Seeded randomness, bootstrap inference and inter-annotator agreement.

mod bootstrap;
mod kappa;
mod rng;

pub use bootstrap::{
    bootstrap_ci, bootstrap_replicates, paired_bootstrap_test, percentile_interval,
    resample_indices, two_sided_p_value, BootstrapEstimate, BootstrapSpec, Interval,
    PairedTest,
};
pub use kappa::cohen_kappa;
pub use rng::{derive_stream, fnv1a64, RngStream};
