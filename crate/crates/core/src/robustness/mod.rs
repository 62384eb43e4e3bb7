//! Sweep drivers: thermal channel, static disorder, dephasing and input-state
//! dependence.

pub mod dephasing;
pub mod disorder;
pub mod state_scan;
pub mod thermal;

use serde::Serialize;

pub use dephasing::{dephasing_sweep, DephasingModel};
pub use disorder::disorder_ensemble;
pub use state_scan::{state_scan, state_slice, StateScan};
pub use thermal::{thermal_average_fidelity, thermal_sweep, ThermalModel, ThermalSpec};

/// One figure of merit per axis value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub axis: String,
    pub values: Vec<f64>,
    /// Mean of the per-run maximum transmission fidelity.
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Readout time of each value, for single-run sweeps.
    pub tau: Option<Vec<f64>>,
    pub n_realizations: usize,
    pub seed: Option<u64>,
    pub metadata: serde_json::Value,
}

/// Mean and sample standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
