//! Correlations, mixing-rate checks, Green–Kubo variance and the CLT harness.

pub mod batch;
pub mod clt;
pub mod correlation;
pub mod fit;
pub mod ks;

pub use clt::{birkhoff_clt, CltReport};
pub use correlation::{
    correlation_series, decay_fit, green_kubo_sigma2, mixing_bound_check, CorrEntry, CorrMeta,
    CorrelationSeries, DecayFit, GreenKubo, MixingEntry, MixingReport,
};
