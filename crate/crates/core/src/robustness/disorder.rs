//! Ensembles of statically disordered Hamiltonians.

use rayon::prelude::*;

use crate::disorder::{apply_disorder, DisorderAxis, DisorderSpec};
use crate::error::Result;
use crate::hamiltonian::SystemSpec;
use crate::optimizer::{scan_time, ScanSettings};

use super::{mean_std, SweepResult};

/// For each value of `axis`, the mean and spread of the per-realization
/// maximum of `f_t` over the window. Only the readout time is re-optimized.
/// Realization `r` uses the same random stream for every axis value.
pub fn disorder_ensemble(
    base: &SystemSpec,
    scan: &ScanSettings,
    disorder: &DisorderSpec,
    axis: DisorderAxis,
    axis_values: &[f64],
) -> Result<SweepResult> {
    disorder.validate()?;
    let n = disorder.n_realizations;
    let jobs: Vec<(usize, usize)> = (0..axis_values.len())
        .flat_map(|v| (0..n).map(move |r| (v, r)))
        .collect();
    let maxima: Vec<Result<f64>> = jobs
        .par_iter()
        .map(|&(v, r)| {
            let d = disorder.with_axis(axis, axis_values[v]);
            let spec = apply_disorder(base, &d, r)?;
            Ok(scan_time(&spec, scan)?.f_t_max)
        })
        .collect();
    let maxima: Vec<f64> = maxima.into_iter().collect::<Result<_>>()?;
    let (mean, std) = maxima.chunks(n).map(mean_std).unzip();
    Ok(SweepResult {
        axis: axis.name().into(),
        values: axis_values.to_vec(),
        mean,
        std,
        tau: None,
        n_realizations: n,
        seed: Some(disorder.master_seed),
        metadata: serde_json::json!({
            "params": base,
            "disorder": disorder,
            "axis": axis.name(),
        }),
    })
}
