//! Multiplicative static disorder on couplings and fields.
//!
//! Realization `r` of an ensemble draws from its own ChaCha stream
//! `(master_seed, r)`, so a realization does not depend on which worker
//! computes it or in what order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::SystemSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisorderSpec {
    /// Relative spread of the chain couplings.
    pub delta: f64,
    /// Relative spread of the user couplings.
    pub delta0: f64,
    /// Relative spread of the user fields.
    pub eta: f64,
    /// Relative spread of the edge field.
    pub eta0: f64,
    pub n_realizations: usize,
    pub master_seed: u64,
}

/// Which spread a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DisorderAxis {
    Delta,
    Delta0,
    Eta,
    Eta0,
}

impl DisorderAxis {
    pub fn name(&self) -> &'static str {
        match self {
            DisorderAxis::Delta => "delta",
            DisorderAxis::Delta0 => "delta0",
            DisorderAxis::Eta => "eta",
            DisorderAxis::Eta0 => "eta0",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "delta" => Ok(DisorderAxis::Delta),
            "delta0" => Ok(DisorderAxis::Delta0),
            "eta" => Ok(DisorderAxis::Eta),
            "eta0" => Ok(DisorderAxis::Eta0),
            other => Err(Error::validation(format!("unknown disorder axis `{other}`"))),
        }
    }
}

impl DisorderSpec {
    pub fn clean(n_realizations: usize, master_seed: u64) -> Self {
        DisorderSpec {
            delta: 0.0,
            delta0: 0.0,
            eta: 0.0,
            eta0: 0.0,
            n_realizations,
            master_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("delta", self.delta),
            ("delta0", self.delta0),
            ("eta", self.eta),
            ("eta0", self.eta0),
        ] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::validation(format!("{name} = {v} must lie in [0, 1)")));
            }
        }
        if self.n_realizations == 0 {
            return Err(Error::validation("n_realizations must be at least 1"));
        }
        Ok(())
    }

    pub fn with_axis(mut self, axis: DisorderAxis, value: f64) -> Self {
        match axis {
            DisorderAxis::Delta => self.delta = value,
            DisorderAxis::Delta0 => self.delta0 = value,
            DisorderAxis::Eta => self.eta = value,
            DisorderAxis::Eta0 => self.eta0 = value,
        }
        self
    }

    pub fn axis_value(&self, axis: DisorderAxis) -> f64 {
        match axis {
            DisorderAxis::Delta => self.delta,
            DisorderAxis::Delta0 => self.delta0,
            DisorderAxis::Eta => self.eta,
            DisorderAxis::Eta0 => self.eta0,
        }
    }
}

/// The raw uniform offsets of one realization, before multiplication.
#[derive(Debug, Clone, PartialEq)]
pub struct DisorderDraw {
    pub chain: Vec<f64>,
    pub user: Vec<f64>,
    pub edge: f64,
    pub fields: Vec<f64>,
}

pub fn realization_rng(master_seed: u64, realization_index: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(master_seed);
    rng.set_stream(realization_index);
    rng
}

fn symmetric(rng: &mut ChaCha20Rng, width: f64) -> f64 {
    width * (2.0 * rng.random::<f64>() - 1.0)
}

/// Draw order is fixed: chain bonds, user bonds, edge field, user fields.
/// All draws are made even for zero spreads so the stream layout is the
/// same for every spread.
pub fn draw(spec: &SystemSpec, disorder: &DisorderSpec, realization_index: usize) -> DisorderDraw {
    let mut rng = realization_rng(disorder.master_seed, realization_index as u64);
    let n = spec.n_chain();
    let m = spec.n_users();
    let chain = (0..n - 1).map(|_| symmetric(&mut rng, disorder.delta)).collect();
    let user = (0..m).map(|_| symmetric(&mut rng, disorder.delta0)).collect();
    let edge = symmetric(&mut rng, disorder.eta0);
    let fields = (0..m).map(|_| symmetric(&mut rng, disorder.eta)).collect();
    DisorderDraw {
        chain,
        user,
        edge,
        fields,
    }
}

pub fn apply_disorder(spec: &SystemSpec, disorder: &DisorderSpec, realization_index: usize) -> Result<SystemSpec> {
    disorder.validate()?;
    if realization_index >= disorder.n_realizations {
        return Err(Error::validation(format!(
            "realization {realization_index} out of range for {} realizations",
            disorder.n_realizations
        )));
    }
    if disorder.delta == 0.0 && disorder.delta0 == 0.0 && disorder.eta == 0.0 && disorder.eta0 == 0.0 {
        return Ok(spec.clone());
    }
    let d = draw(spec, disorder, realization_index);
    let n = spec.n_chain();
    let m = spec.n_users();
    let per_bond = (0..n - 1)
        .map(|i| spec.chain_coupling(i) * (1.0 + d.chain[i]))
        .collect();
    let user_bonds = (0..m).map(|a| spec.user_coupling(a) * (1.0 + d.user[a])).collect();
    let b_user = spec
        .b_user()
        .iter()
        .zip(&d.fields)
        .map(|(b, x)| b * (1.0 + x))
        .collect();
    let mut out = spec
        .clone()
        .with_per_bond(per_bond)?
        .with_user_bonds(user_bonds)?
        .with_b_user(b_user)?;
    out.b_edge = spec.b_edge * (1.0 + d.edge);
    Ok(out)
}
