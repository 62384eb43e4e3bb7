//! Pointwise transmission fidelity as a function of the input polar angles.

use rand::Rng;

use crate::disorder::realization_rng;
use crate::error::{Error, Result};
use crate::fidelity::{aggregate, gamma_elements, GammaElements, InputState};
use crate::hamiltonian::SystemSpec;

/// Default number of points per polar-angle axis.
pub const DEFAULT_THETA_POINTS: usize = 41;

/// `points` uniform values covering `[0, pi]`.
pub fn theta_grid(points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..points)
            .map(|k| std::f64::consts::PI * k as f64 / (points - 1) as f64)
            .collect(),
    }
}

/// Azimuths of all senders, drawn once from stream 0 of `seed`.
pub fn random_phis(seed: u64, n_users: usize) -> Vec<f64> {
    let mut rng = realization_rng(seed, 0);
    (0..n_users)
        .map(|_| std::f64::consts::TAU * rng.random::<f64>())
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateScan {
    pub tau: f64,
    pub thetas: Vec<f64>,
    pub phis: Vec<f64>,
    /// `f_t[(k1, k2)]` at `(thetas[k1], thetas[k2])`; a single column for
    /// one-dimensional slices.
    pub f_t: nalgebra::DMatrix<f64>,
}

impl StateScan {
    /// Grid position and value of the smallest fidelity.
    pub fn minimum(&self) -> (usize, usize, f64) {
        let mut best = (0, 0, f64::INFINITY);
        for c in 0..self.f_t.ncols() {
            for r in 0..self.f_t.nrows() {
                if self.f_t[(r, c)] < best.2 {
                    best = (r, c, self.f_t[(r, c)]);
                }
            }
        }
        best
    }
}

fn f_t_at(g: &GammaElements, angles: Vec<(f64, f64)>) -> Result<f64> {
    Ok(aggregate(&g.pointwise(&InputState::new(angles)?)?).0)
}

/// Two-sender surface over `theta_grid x theta_grid` at readout time `tau`.
pub fn state_scan(params: &SystemSpec, tau: f64, thetas: &[f64], phi_seed: u64) -> Result<StateScan> {
    if params.n_users() != 2 {
        return Err(Error::validation(format!(
            "the two-angle scan needs 2 users, got {}; use a slice",
            params.n_users()
        )));
    }
    let g = gamma_elements(params, tau)?;
    let phis = random_phis(phi_seed, 2);
    let mut f_t = nalgebra::DMatrix::zeros(thetas.len(), thetas.len());
    for (r, &t1) in thetas.iter().enumerate() {
        for (c, &t2) in thetas.iter().enumerate() {
            f_t[(r, c)] = f_t_at(&g, vec![(t1, phis[0]), (t2, phis[1])])?;
        }
    }
    Ok(StateScan {
        tau,
        thetas: thetas.to_vec(),
        phis,
        f_t,
    })
}

/// `theta_alpha` swept over `thetas`, the other senders held at `|0>`.
pub fn state_slice(params: &SystemSpec, tau: f64, alpha: usize, thetas: &[f64], phi_seed: u64) -> Result<StateScan> {
    let m = params.n_users();
    if alpha >= m {
        return Err(Error::validation(format!("user {alpha} out of range for {m} users")));
    }
    let g = gamma_elements(params, tau)?;
    let phis = random_phis(phi_seed, m);
    let mut f_t = nalgebra::DMatrix::zeros(thetas.len(), 1);
    for (r, &th) in thetas.iter().enumerate() {
        let angles = (0..m).map(|a| (if a == alpha { th } else { 0.0 }, phis[a])).collect();
        f_t[(r, 0)] = f_t_at(&g, angles)?;
    }
    Ok(StateScan {
        tau,
        thetas: thetas.to_vec(),
        phis,
        f_t,
    })
}
