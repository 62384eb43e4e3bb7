//! Flat run configuration: a TOML file of `key = value` pairs, each of which
//! can be overridden by the flag of the same name.

use std::path::Path;

use clap::Args;
use serde::{Deserialize, Serialize};
use spinbus::{Error, Result, ScanSettings, Strategy, SystemSpec, TimeWindow};

#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    /// Chain length N
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// Number of users M (defaults to the length of --b-user)
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    /// Tuning strategy: s1, s2 or s3
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub strategy: Option<String>,
    /// User coupling J0/J [default: 1]
    #[arg(long, global = true, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub j_user: Option<f64>,
    /// Edge field B0/J [default: 0]
    #[arg(long, global = true, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b_edge: Option<f64>,
    /// User fields B_1..B_M, comma separated
    #[arg(long, global = true, value_delimiter = ',', allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b_user: Option<Vec<f64>>,
    /// Per-bond chain couplings J_i/J (N-1 values)
    #[arg(long, global = true, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_bond: Option<Vec<f64>>,

    /// Start of the time window [default: 1, or 0 for evolve]
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_min: Option<f64>,
    /// End of the time window [default: 500]
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
    /// Sampling step of evolve output [default: 0.05]
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    /// Coarse step of time scans [default: 1]
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coarse_dt: Option<f64>,
    /// Refinement step of time scans [default: 0.05]
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub refine_dt: Option<f64>,
    /// Coarse maxima refined per scan [default: 8]
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub candidates: Option<usize>,

    /// Search grid of J0/J
    #[arg(long, global = true, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub j_user_grid: Option<Vec<f64>>,
    /// Search grid of B0/J
    #[arg(long, global = true, value_delimiter = ',', allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b_edge_grid: Option<Vec<f64>>,
    /// Search grid of every user field
    #[arg(long, global = true, value_delimiter = ',', allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b_user_grid: Option<Vec<f64>>,
    /// Chain lengths of a table run
    #[arg(long, global = true, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_list: Option<Vec<usize>>,

    /// Temperatures kB T/J of a thermal sweep
    #[arg(long, global = true, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kbt: Option<Vec<f64>>,
    /// Dephasing rates gamma/J
    #[arg(long, global = true, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<Vec<f64>>,

    /// Swept disorder spread: delta, delta0, eta or eta0
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub axis: Option<String>,
    /// Values of the swept spread
    #[arg(long, global = true, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    /// Fixed chain-coupling spread
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    /// Fixed user-coupling spread
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta0: Option<f64>,
    /// Fixed user-field spread
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    /// Fixed edge-field spread
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta0: Option<f64>,
    /// Disorder realizations per axis value [default: 100]
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub realizations: Option<usize>,

    /// Readout time of a state scan [default: optimal time]
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    /// Polar-angle grid points per axis [default: 41]
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta_points: Option<usize>,
    /// Swept user (1-based) of a one-angle slice; M=2 scans the surface by default
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub user: Option<usize>,
    /// Excitation sectors of an ipr run [default: 1,2]
    #[arg(long, global = true, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sectors: Option<Vec<usize>>,

    /// Master seed of every random draw [default: 0]
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Worker threads [default: all cores]
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    /// Output directory [default: .]
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
    /// Leave the generation time out of output files
    #[arg(long, global = true, num_args = 0..=1, require_equals = true, default_missing_value = "true")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub no_timestamp: Option<bool>,
}

macro_rules! overlay {
    ($base:ident, $top:ident; $($field:ident),* $(,)?) => {
        Config { $($field: $top.$field.or($base.$field)),* }
    };
}

impl Config {
    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::validation(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Error::validation(format!("invalid config {}: {e}", path.display())))
    }

    /// Values of `top` win over those of `self`.
    pub fn overlay(self, top: Config) -> Config {
        let base = self;
        overlay!(base, top;
            n, m, strategy, j_user, b_edge, b_user, per_bond,
            t_min, t_max, dt, coarse_dt, refine_dt, candidates,
            j_user_grid, b_edge_grid, b_user_grid, n_list,
            kbt, gamma,
            axis, values, delta, delta0, eta, eta0, realizations,
            tau, theta_points, user, sectors,
            seed, workers, out, no_timestamp,
        )
    }

    pub fn strategy(&self) -> Result<Option<Strategy>> {
        self.strategy.as_deref().map(Strategy::parse).transpose()
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn timestamp(&self) -> bool {
        !self.no_timestamp.unwrap_or(false)
    }

    pub fn n_users(&self) -> Result<usize> {
        match (self.m, &self.b_user) {
            (Some(m), Some(b)) if b.len() != m => Err(Error::validation(format!(
                "--m is {m} but --b-user lists {} fields",
                b.len()
            ))),
            (Some(m), _) => Ok(m),
            (None, Some(b)) => Ok(b.len()),
            (None, None) => Ok(2),
        }
    }

    /// The system described by `n`, the user fields and couplings.
    pub fn system(&self) -> Result<SystemSpec> {
        let n = self.n.ok_or_else(|| Error::validation("missing chain length --n"))?;
        let b_user = self
            .b_user
            .clone()
            .ok_or_else(|| Error::validation("missing user fields --b-user"))?;
        self.n_users()?;
        let j_user = self.j_user.unwrap_or(1.0);
        let b_edge = self.b_edge.unwrap_or(0.0);
        match self.strategy()? {
            Some(Strategy::S1) if b_edge != 0.0 => return Err(Error::validation("strategy s1 fixes b_edge = 0")),
            Some(Strategy::S2) if j_user != 1.0 => return Err(Error::validation("strategy s2 fixes j_user = 1")),
            _ => {}
        }
        let mut spec = SystemSpec::with_params(n, j_user, b_edge, &b_user)?;
        if let Some(bonds) = &self.per_bond {
            spec = spec.with_per_bond(bonds.clone())?;
        }
        Ok(spec)
    }

    pub fn window(&self, default_start: f64) -> Result<TimeWindow> {
        TimeWindow::new(self.t_min.unwrap_or(default_start), self.t_max.unwrap_or(500.0))
    }

    pub fn scan(&self) -> Result<ScanSettings> {
        let d = ScanSettings::default();
        let s = ScanSettings {
            window: self.window(d.window.t_min)?,
            coarse_dt: self.coarse_dt.unwrap_or(d.coarse_dt),
            refine_dt: self.refine_dt.unwrap_or(d.refine_dt),
            candidates: self.candidates.unwrap_or(d.candidates),
        };
        s.validate()?;
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let file: Config = toml::from_str("n = 8\nb_user = [0.1, -0.2]\nseed = 4").unwrap();
        let flags = Config {
            n: Some(12),
            ..Config::default()
        };
        let c = file.overlay(flags);
        assert_eq!(c.n, Some(12));
        assert_eq!(c.seed, Some(4));
        assert_eq!(c.n_users().unwrap(), 2);
        assert!(toml::from_str::<Config>("bogus = 1").is_err());
    }
}
