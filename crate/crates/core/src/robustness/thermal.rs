//! Channel prepared in a Gibbs state of its own Hamiltonian.
//!
//! The averaged fidelity is linear in the channel state, so the thermal value
//! is the Boltzmann-weighted mixture of the fidelities obtained with each
//! channel eigenstate in place of the vacuum. Per-eigenstate fidelities do not
//! depend on the temperature and are cached by time.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::decompose_symmetric;
use crate::error::{Error, Result};
use crate::fidelity::{FidelityMatrix, SectorSet, SenderSeeds, TransferModel};
use crate::hamiltonian::{hopping_matrix, SystemSpec};
use crate::lattice::combinations;
use crate::optimizer::{scan_source, FidelitySource, ScanSettings};

use super::SweepResult;

/// Largest system the thermal path accepts.
pub const MAX_THERMAL_SITES: usize = 14;

/// Levels closer than this (relative) count as one ground manifold.
const DEGENERACY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalSpec {
    /// `k_B T / J`.
    pub kbt: f64,
}

impl ThermalSpec {
    pub fn new(kbt: f64) -> Result<Self> {
        if !(kbt.is_finite() && kbt >= 0.0) {
            return Err(Error::validation(format!(
                "kbt = {kbt} must be finite and non-negative"
            )));
        }
        Ok(ThermalSpec { kbt })
    }
}

/// One eigenstate of the channel Hamiltonian.
#[derive(Debug, Clone)]
pub struct ChannelLevel {
    pub energy: f64,
    pub excitations: usize,
    /// Amplitudes on chain-only bitstrings of the full layout.
    pub state: Vec<(u64, f64)>,
}

/// Eigenstates of the chain alone: chain bonds and chain fields, user sites
/// detached.
pub fn channel_levels(spec: &SystemSpec) -> Result<Vec<ChannelLevel>> {
    let layout = spec.layout();
    let chain = layout.chain_mask();
    let bonds: Vec<_> = spec
        .bonds()
        .into_iter()
        .filter(|b| chain >> b.a & 1 == 1 && chain >> b.b & 1 == 1)
        .collect();
    let mut fields = spec.site_fields();
    for (s, f) in fields.iter_mut().enumerate() {
        if chain >> s & 1 == 0 {
            *f = 0.0;
        }
    }
    let shift = layout.first_chain();
    let mut levels = Vec::new();
    for n_c in 0..=layout.n_chain() {
        let states: Vec<u64> = combinations(layout.n_chain(), n_c)
            .into_iter()
            .map(|s| s << shift)
            .collect();
        let h = hopping_matrix(&bonds, &fields, &states);
        let (e, v) = decompose_symmetric(&h, &format!("channel sector {n_c}"))?;
        for k in 0..e.len() {
            levels.push(ChannelLevel {
                energy: e[k],
                excitations: n_c,
                state: states.iter().enumerate().map(|(p, &s)| (s, v[(p, k)])).collect(),
            });
        }
    }
    levels.sort_by(|a, b| a.energy.total_cmp(&b.energy));
    Ok(levels)
}

/// Gibbs weights of `levels`; `kbt = 0` spreads the weight uniformly over the
/// ground manifold.
pub fn gibbs_weights(levels: &[ChannelLevel], thermal: ThermalSpec) -> Vec<f64> {
    let e0 = levels.iter().map(|l| l.energy).fold(f64::INFINITY, f64::min);
    let raw: Vec<f64> = if thermal.kbt == 0.0 {
        let tol = DEGENERACY_TOLERANCE * e0.abs().max(1.0);
        levels
            .iter()
            .map(|l| if l.energy - e0 <= tol { 1.0 } else { 0.0 })
            .collect()
    } else {
        levels.iter().map(|l| (-(l.energy - e0) / thermal.kbt).exp()).collect()
    };
    let z: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / z).collect()
}

pub struct ThermalModel {
    spec: SystemSpec,
    levels: Vec<ChannelLevel>,
    models: Vec<TransferModel>,
    cache: Mutex<HashMap<u64, Vec<FidelityMatrix>>>,
}

impl ThermalModel {
    pub fn new(spec: &SystemSpec) -> Result<Self> {
        let sites = spec.layout().total_sites();
        if sites > MAX_THERMAL_SITES {
            return Err(Error::resource(format!(
                "thermal channel needs {sites} sites, limit is {MAX_THERMAL_SITES}"
            )));
        }
        let levels = channel_levels(spec)?;
        let set = Arc::new(SectorSet::new(spec, 0..=spec.n_chain() + spec.n_users())?);
        let models = levels
            .iter()
            .map(|l| TransferModel::from_parts(set.clone(), SenderSeeds::with_channel(&set, &l.state)?))
            .collect::<Result<Vec<_>>>()?;
        Ok(ThermalModel {
            spec: spec.clone(),
            levels,
            models,
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn spec(&self) -> &SystemSpec {
        &self.spec
    }

    pub fn levels(&self) -> &[ChannelLevel] {
        &self.levels
    }

    pub fn weights(&self, thermal: ThermalSpec) -> Vec<f64> {
        gibbs_weights(&self.levels, thermal)
    }

    /// Averaged fidelity of every channel eigenstate at each time, indexed
    /// `[time][level]`.
    pub fn level_fidelities(&self, times: &[f64]) -> Result<Vec<Vec<FidelityMatrix>>> {
        let missing: Vec<f64> = {
            let cache = self.cache.lock().expect("thermal cache lock");
            let mut m: Vec<f64> = times
                .iter()
                .copied()
                .filter(|t| !cache.contains_key(&t.to_bits()))
                .collect();
            m.sort_by(f64::total_cmp);
            m.dedup();
            m
        };
        if !missing.is_empty() {
            let per_level: Vec<Vec<FidelityMatrix>> = self
                .models
                .par_iter()
                .map(|model| model.average_series(&missing))
                .collect::<Result<_>>()?;
            let mut cache = self.cache.lock().expect("thermal cache lock");
            for (k, t) in missing.iter().enumerate() {
                cache.insert(t.to_bits(), per_level.iter().map(|l| l[k].clone()).collect());
            }
        }
        let cache = self.cache.lock().expect("thermal cache lock");
        Ok(times.iter().map(|t| cache[&t.to_bits()].clone()).collect())
    }

    pub fn average_series(&self, thermal: ThermalSpec, times: &[f64]) -> Result<Vec<FidelityMatrix>> {
        let w = self.weights(thermal);
        let m = self.spec.n_users();
        Ok(self
            .level_fidelities(times)?
            .into_iter()
            .map(|per| {
                per.iter()
                    .zip(&w)
                    .fold(FidelityMatrix::zeros(m, m), |acc, (f, &p)| acc + f * p)
            })
            .collect())
    }

    /// The model at one temperature, for time scans.
    pub fn at(&self, thermal: ThermalSpec) -> ThermalMixture<'_> {
        ThermalMixture { model: self, thermal }
    }
}

pub struct ThermalMixture<'a> {
    model: &'a ThermalModel,
    thermal: ThermalSpec,
}

impl FidelitySource for ThermalMixture<'_> {
    fn n_users(&self) -> usize {
        self.model.spec.n_users()
    }

    fn fidelities(&self, times: &[f64]) -> Result<Vec<FidelityMatrix>> {
        self.model.average_series(self.thermal, times)
    }
}

pub fn thermal_average_fidelity(spec: &SystemSpec, thermal: ThermalSpec, t: f64) -> Result<FidelityMatrix> {
    Ok(ThermalModel::new(spec)?.average_series(thermal, &[t])?.remove(0))
}

/// Max-over-window transmission fidelity for each temperature.
pub fn thermal_sweep(params: &SystemSpec, scan: &ScanSettings, kbt_values: &[f64]) -> Result<SweepResult> {
    let model = ThermalModel::new(params)?;
    let mut mean = Vec::with_capacity(kbt_values.len());
    let mut tau = Vec::with_capacity(kbt_values.len());
    for &kbt in kbt_values {
        let r = scan_source(&model.at(ThermalSpec::new(kbt)?), scan)?;
        mean.push(r.f_t_max);
        tau.push(r.tau);
    }
    Ok(SweepResult {
        axis: "kbt".into(),
        values: kbt_values.to_vec(),
        std: vec![0.0; mean.len()],
        mean,
        tau: Some(tau),
        n_realizations: 1,
        seed: None,
        metadata: serde_json::json!({ "params": params }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::build_full_hamiltonian;
    use nalgebra::DMatrix;
    use num_complex::Complex64;

    /// Six octahedron points form a spherical 3-design, which is enough to
    /// average a quadratic form in `|psi><psi|` exactly.
    fn octahedron() -> Vec<[Complex64; 2]> {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let c = |re: f64, im: f64| Complex64::new(re, im);
        vec![
            [c(1.0, 0.0), c(0.0, 0.0)],
            [c(0.0, 0.0), c(1.0, 0.0)],
            [c(h, 0.0), c(h, 0.0)],
            [c(h, 0.0), c(-h, 0.0)],
            [c(h, 0.0), c(0.0, h)],
            [c(h, 0.0), c(0.0, -h)],
        ]
    }

    /// Thermal averaged fidelity from full-space density-matrix evolution.
    fn brute_thermal(spec: &SystemSpec, kbt: f64, t: f64) -> DMatrix<f64> {
        let layout = spec.layout();
        let l = layout.total_sites();
        let dim = 1usize << l;
        let m = spec.n_users();
        let chain = layout.chain_mask() as usize;

        // channel Gibbs state from the full Hamiltonian with users detached
        let mut detached = spec.clone().with_user_bonds(vec![0.0; m]).unwrap();
        detached = detached.with_b_user(vec![0.0; m]).unwrap();
        let h0 = build_full_hamiltonian(&detached).unwrap();
        let ch: Vec<usize> = (0..dim).filter(|s| s & !chain == 0).collect();
        let hc = DMatrix::from_fn(ch.len(), ch.len(), |a, b| h0[(ch[a], ch[b])]);
        let (e, v) = decompose_symmetric(&hc, "channel").unwrap();
        let e0 = e.min();
        let w: Vec<f64> = e.iter().map(|x| (-(x - e0) / kbt).exp()).collect();
        let z: f64 = w.iter().sum();
        let rho_ch = DMatrix::from_fn(ch.len(), ch.len(), |a, b| {
            (0..e.len()).map(|k| w[k] / z * v[(a, k)] * v[(b, k)]).sum::<f64>()
        });

        let h = build_full_hamiltonian(spec).unwrap();
        let (e, v) = decompose_symmetric(&h, "full").unwrap();
        let u = DMatrix::from_fn(dim, dim, |r, c| {
            (0..dim)
                .map(|k| v[(r, k)] * v[(c, k)] * Complex64::from_polar(1.0, -e[k] * t))
                .sum::<Complex64>()
        });

        let points = octahedron();
        let n_pts = points.len().pow(m as u32);
        let mut avg = DMatrix::<f64>::zeros(m, m);
        for idx in 0..n_pts {
            let choice: Vec<usize> = (0..m)
                .map(|a| idx / points.len().pow(a as u32) % points.len())
                .collect();
            let amp: Vec<Complex64> = (0..1usize << m)
                .map(|i| (0..m).fold(Complex64::new(1.0, 0.0), |acc, a| acc * points[choice[a]][i >> a & 1]))
                .collect();
            let mut rho0 = DMatrix::<Complex64>::zeros(dim, dim);
            for i in 0..1usize << m {
                for j in 0..1usize << m {
                    for (p, &cp) in ch.iter().enumerate() {
                        for (q, &cq) in ch.iter().enumerate() {
                            rho0[(i | cp, j | cq)] += amp[i] * amp[j].conj() * rho_ch[(p, q)];
                        }
                    }
                }
            }
            let rho = &u * rho0 * u.adjoint();
            for beta in 0..m {
                let bit = layout.receiver(beta);
                let mut red = [[Complex64::new(0.0, 0.0); 2]; 2];
                for s in 0..dim {
                    for b in 0..2 {
                        let sp = (s & !(1 << bit)) | b << bit;
                        red[s >> bit & 1][b] += rho[(s, sp)];
                    }
                }
                for alpha in 0..m {
                    let psi = points[choice[alpha]];
                    let mut f = Complex64::new(0.0, 0.0);
                    for a in 0..2 {
                        for b in 0..2 {
                            f += psi[a].conj() * red[a][b] * psi[b];
                        }
                    }
                    avg[(alpha, beta)] += f.re / n_pts as f64;
                }
            }
        }
        avg
    }

    fn small_spec() -> SystemSpec {
        SystemSpec::with_params(3, 0.4, 0.7, &[0.3, -0.2]).unwrap()
    }

    #[test]
    fn matches_full_space_density_matrix() {
        let spec = small_spec();
        let model = ThermalModel::new(&spec).unwrap();
        for &(kbt, t) in &[(0.3, 2.5), (2.0, 7.0)] {
            let got = model
                .average_series(ThermalSpec::new(kbt).unwrap(), &[t])
                .unwrap()
                .remove(0);
            let want = brute_thermal(&spec, kbt, t);
            assert!((&got - &want).abs().max() < 1e-10, "kbt {kbt}: {got} vs {want}");
        }
    }

    #[test]
    fn weights_normalized_and_limits() {
        let spec = small_spec();
        let levels = channel_levels(&spec).unwrap();
        assert_eq!(levels.len(), 8);
        for kbt in [0.0, 1e-3, 0.5, 10.0, 1e6] {
            let w = gibbs_weights(&levels, ThermalSpec::new(kbt).unwrap());
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let hot = gibbs_weights(&levels, ThermalSpec::new(1e9).unwrap());
        assert!(hot.iter().all(|w| (w - 1.0 / 8.0).abs() < 1e-6));
        let cold = gibbs_weights(&levels, ThermalSpec::new(0.0).unwrap());
        assert!(cold[0] > 0.0 && cold.iter().sum::<f64>() > 0.999);
        assert!(ThermalSpec::new(-1.0).is_err());
    }

    #[test]
    fn vacuum_ground_state_reproduces_pure_channel() {
        // a strong negative edge field makes the empty chain the ground state
        let spec = SystemSpec::with_params(2, 0.3, -30.0, &[0.2, -0.1]).unwrap();
        let model = ThermalModel::new(&spec).unwrap();
        assert_eq!(model.levels()[0].excitations, 0);
        let t = 3.3;
        let pure = crate::fidelity::average_fidelity(&spec, t).unwrap();
        for kbt in [0.0, 0.01] {
            let th = model
                .average_series(ThermalSpec::new(kbt).unwrap(), &[t])
                .unwrap()
                .remove(0);
            assert!((&th - &pure).abs().max() < 1e-10);
        }
    }

    #[test]
    fn size_guard() {
        let spec = SystemSpec::with_params(11, 0.1, 0.0, &[0.1, 0.2]).unwrap();
        assert!(matches!(ThermalModel::new(&spec), Err(Error::Resource(_))));
    }
}
