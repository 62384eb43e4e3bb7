//! Averaged fidelities under uniform z-dephasing.
//!
//! Each dyad `|i><j| (x) |0_ch 0_R><0_ch 0_R|` is evolved as one
//! `(|i|, |j|)` block of the density matrix. States at every evaluated time
//! are kept as checkpoints, so a refinement pass restarts from the nearest
//! earlier checkpoint instead of from zero.

use std::sync::Mutex;

use num_complex::Complex64;

use crate::dynamics::{DensityBlockState, DyadPropagator, SplitMatrix};
use crate::error::{Error, Result};
use crate::fidelity::{
    gamma_entries, FidelityMatrix, GammaElements, GammaSet, InputState, PairTables, SectorSet, SenderSeeds,
};
use crate::hamiltonian::SystemSpec;
use crate::optimizer::{scan_source, FidelitySource, ScanSettings};

use super::SweepResult;

/// Allowed deviation of a diagonal dyad's trace from 1.
const TRACE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone)]
struct Dyad {
    i: usize,
    j: usize,
    x0: SplitMatrix,
}

type Checkpoint = (f64, Vec<SplitMatrix>);

pub struct DephasingModel {
    set: SectorSet,
    seeds: SenderSeeds,
    gamma: f64,
    max_step: Option<f64>,
    which: GammaSet,
    entries: Vec<(usize, usize, usize, usize, usize)>,
    tables: PairTables,
    dyads: Vec<Dyad>,
    checkpoints: Mutex<Vec<Checkpoint>>,
}

impl DephasingModel {
    pub fn new(spec: &SystemSpec, gamma: f64, which: GammaSet) -> Result<Self> {
        if gamma < 0.0 || !gamma.is_finite() {
            return Err(Error::validation(format!(
                "dephasing rate {gamma} must be non-negative"
            )));
        }
        let set = SectorSet::for_transfer(spec)?;
        let seeds = SenderSeeds::vacuum(&set)?;
        let m = spec.n_users();
        let entries = gamma_entries(m, which);
        let tables = PairTables::build(&set, &seeds, &entries)?;
        let mut pairs: Vec<(usize, usize)> = entries.iter().map(|&(_, i, j, _, _)| (i, j)).collect();
        pairs.sort_unstable();
        pairs.dedup();
        let dyads = pairs
            .into_iter()
            .map(|(i, j)| {
                let (si, sj) = (&seeds.seeds[i], &seeds.seeds[j]);
                let (dl, dr) = (set.cache(si.sector)?.dim(), set.cache(sj.sector)?.dim());
                let mut x0 = SplitMatrix::zeros(dl, dr);
                for &(p, a) in &si.entries {
                    for &(q, b) in &sj.entries {
                        x0.re[(p, q)] += a * b;
                    }
                }
                Ok(Dyad { i, j, x0 })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(DephasingModel {
            set,
            seeds,
            gamma,
            max_step: None,
            which,
            entries,
            tables,
            dyads,
            checkpoints: Mutex::new(Vec::new()),
        })
    }

    /// Override the integrator step cap.
    pub fn with_max_step(mut self, step: f64) -> Self {
        self.max_step = Some(step);
        self
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    fn propagators(&self) -> Result<Vec<DyadPropagator<'_>>> {
        self.dyads
            .iter()
            .map(|d| {
                let l = self.set.cache(self.seeds.seeds[d.i].sector)?;
                let r = self.set.cache(self.seeds.seeds[d.j].sector)?;
                let p = DyadPropagator::new(l, r, self.gamma)?;
                Ok(match self.max_step {
                    Some(h) => p.with_max_step(h),
                    None => p,
                })
            })
            .collect()
    }

    fn gamma_at(&self, props: &[DyadPropagator<'_>], states: &[SplitMatrix], t: f64) -> Result<GammaElements> {
        let m = self.set.spec().n_users();
        let mut g = GammaElements::zeros(t, m);
        for (d, (prop, y)) in self.dyads.iter().zip(props.iter().zip(states)) {
            let x = prop.to_occupation(y);
            if d.i == d.j {
                let tr: f64 = (0..x.re.nrows()).map(|p| x.re[(p, p)]).sum();
                if (tr - 1.0).abs() > TRACE_TOLERANCE {
                    return Err(Error::numerical(format!(
                        "trace drifted by {:.3e} at t = {t}; reduce the integration step",
                        (tr - 1.0).abs()
                    )));
                }
            }
            for &(beta, i, j, a, b) in self.entries.iter().filter(|e| e.1 == d.i && e.2 == d.j) {
                let key = (self.seeds.seeds[i].sector, self.seeds.seeds[j].sector, beta, a, b);
                let mut re = 0.0;
                let mut im = 0.0;
                for &(p, q) in self.tables.get(key) {
                    re += x.re[(p as usize, q as usize)];
                    im += x.im[(p as usize, q as usize)];
                }
                g.set(beta, i, j, a, b, Complex64::new(re, im));
            }
        }
        if self.which == GammaSet::Average {
            g.mirror(&self.entries);
        }
        Ok(g)
    }

    /// Gamma elements at each time (any order).
    pub fn gamma_series(&self, times: &[f64]) -> Result<Vec<GammaElements>> {
        if times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(Error::validation("times must be finite and non-negative"));
        }
        let props = self.propagators()?;
        let mut order: Vec<usize> = (0..times.len()).collect();
        order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
        let mut out: Vec<Option<GammaElements>> = vec![None; times.len()];

        let mut cps = self.checkpoints.lock().expect("checkpoint lock");
        let start = times.get(*order.first().unwrap_or(&0)).copied().unwrap_or(0.0);
        let (mut t, mut states) = match cps.iter().rev().find(|c| c.0 <= start) {
            Some((tc, s)) => (*tc, s.clone()),
            None => (
                0.0,
                self.dyads.iter().zip(&props).map(|(d, p)| p.to_eigen(&d.x0)).collect(),
            ),
        };
        for &k in &order {
            let target = times[k];
            states = states
                .iter()
                .zip(&props)
                .map(|(y, p)| p.advance(y, target - t))
                .collect();
            t = target;
            out[k] = Some(self.gamma_at(&props, &states, t)?);
            if let Err(pos) = cps.binary_search_by(|c| c.0.total_cmp(&t)) {
                cps.insert(pos, (t, states.clone()));
            }
        }
        Ok(out.into_iter().map(|g| g.expect("every time evaluated")).collect())
    }
}

impl FidelitySource for DephasingModel {
    fn n_users(&self) -> usize {
        self.set.spec().n_users()
    }

    fn fidelities(&self, times: &[f64]) -> Result<Vec<FidelityMatrix>> {
        Ok(self.gamma_series(times)?.iter().map(|g| g.average()).collect())
    }
}

/// Max-over-window transmission fidelity for each dephasing rate.
pub fn dephasing_sweep(params: &SystemSpec, scan: &ScanSettings, gamma_values: &[f64]) -> Result<SweepResult> {
    let mut mean = Vec::with_capacity(gamma_values.len());
    let mut tau = Vec::with_capacity(gamma_values.len());
    for &g in gamma_values {
        let model = DephasingModel::new(params, g, GammaSet::Average)?;
        let r = scan_source(&model, scan)?;
        mean.push(r.f_t_max);
        tau.push(r.tau);
    }
    Ok(SweepResult {
        axis: "gamma".into(),
        values: gamma_values.to_vec(),
        std: vec![0.0; mean.len()],
        mean,
        tau: Some(tau),
        n_realizations: 1,
        seed: None,
        metadata: serde_json::json!({ "params": params }),
    })
}

/// Pointwise fidelity matrix read off a block density matrix by tracing out
/// everything but each receiver.
pub fn density_fidelity(spec: &SystemSpec, state: &DensityBlockState, input: &InputState) -> Result<FidelityMatrix> {
    let m = spec.n_users();
    if input.n_users() != m {
        return Err(Error::validation(format!(
            "input has {} senders, system has {m}",
            input.n_users()
        )));
    }
    let layout = spec.layout();
    let mut out = FidelityMatrix::zeros(m, m);
    for beta in 0..m {
        let bit = layout.receiver(beta);
        let mut red = [[Complex64::new(0.0, 0.0); 2]; 2];
        for (r, &s) in state.states.iter().enumerate() {
            for b in 0..2u64 {
                let sp = (s & !(1 << bit)) | b << bit;
                if let Some(c) = state.index_of(sp) {
                    red[(s >> bit & 1) as usize][b as usize] += state.rho[(r, c)];
                }
            }
        }
        for alpha in 0..m {
            let q = input.qubit(alpha);
            let mut f = Complex64::new(0.0, 0.0);
            for a in 0..2 {
                for b in 0..2 {
                    f += q[a].conj() * red[a][b] * q[b];
                }
            }
            out[(alpha, beta)] = f.re;
        }
    }
    Ok(out)
}
