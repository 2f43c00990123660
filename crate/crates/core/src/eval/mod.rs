//! Metrics and sweeps.

pub mod metrics;
pub mod sweep;
