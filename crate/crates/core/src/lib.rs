//! Randomized multiple-trial benchmarking of cloud VMs and analysis of the
//! resulting performance variability.

pub mod analysis;
pub mod classification;
pub mod cli;
pub mod forecasting;
pub mod harness;
pub mod linalg;
pub mod model;
pub mod seeds;
pub mod simulate;
pub mod stats;
pub mod variability;
