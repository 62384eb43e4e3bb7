//! Readout-time scans and exhaustive grid search over Hamiltonian parameters.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::fidelity::{aggregate, FidelityMatrix, FidelitySeries, TransferModel};
use crate::hamiltonian::SystemSpec;
use crate::lattice::SiteLayout;

/// Anything that yields averaged fidelity matrices at requested times.
pub trait FidelitySource: Sync {
    fn n_users(&self) -> usize;
    fn fidelities(&self, times: &[f64]) -> Result<Vec<FidelityMatrix>>;
}

impl FidelitySource for TransferModel {
    fn n_users(&self) -> usize {
        self.spec().n_users()
    }

    fn fidelities(&self, times: &[f64]) -> Result<Vec<FidelityMatrix>> {
        self.average_series(times)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeWindow {
    pub t_min: f64,
    pub t_max: f64,
}

impl TimeWindow {
    pub fn new(t_min: f64, t_max: f64) -> Result<Self> {
        let w = TimeWindow { t_min, t_max };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_min >= 0.0 && self.t_max > self.t_min && self.t_max.is_finite()) {
            return Err(Error::validation(format!(
                "time window [{}, {}] must satisfy 0 <= t_min < t_max",
                self.t_min, self.t_max
            )));
        }
        Ok(())
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.t_min && t <= self.t_max
    }
}

impl Default for TimeWindow {
    fn default() -> Self {
        TimeWindow {
            t_min: 1.0,
            t_max: 500.0,
        }
    }
}

/// Time-sampling parameters of a scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanSettings {
    pub window: TimeWindow,
    pub coarse_dt: f64,
    pub refine_dt: f64,
    /// Number of coarse local maxima refined.
    pub candidates: usize,
}

impl Default for ScanSettings {
    fn default() -> Self {
        ScanSettings {
            window: TimeWindow::default(),
            coarse_dt: 1.0,
            refine_dt: 0.05,
            candidates: 8,
        }
    }
}

impl ScanSettings {
    pub fn validate(&self) -> Result<()> {
        self.window.validate()?;
        if !(self.refine_dt > 0.0 && self.coarse_dt >= self.refine_dt) {
            return Err(Error::validation(format!(
                "need coarse_dt >= refine_dt > 0, got {} and {}",
                self.coarse_dt, self.refine_dt
            )));
        }
        if self.candidates == 0 {
            return Err(Error::validation("at least one refinement candidate is required"));
        }
        Ok(())
    }

    /// Dense scan of `window` at `dt`.
    pub fn dense(window: TimeWindow, dt: f64) -> Self {
        ScanSettings {
            window,
            coarse_dt: dt,
            refine_dt: dt,
            candidates: 1,
        }
    }
}

/// `start, start + dt, ...` up to `end`, with `end` itself appended when the
/// step does not land on it.
pub fn uniform_grid(start: f64, end: f64, dt: f64) -> Vec<f64> {
    let n = ((end - start) / dt + 1e-9).floor() as usize;
    let mut v: Vec<f64> = (0..=n).map(|k| start + k as f64 * dt).collect();
    if let Some(&last) = v.last() {
        if end - last > 1e-9 * dt.max(1.0) {
            v.push(end);
        } else if let Some(l) = v.last_mut() {
            *l = l.min(end);
        }
    }
    v
}

/// Indices of the `k` largest local maxima of `values`, in ascending index
/// order. Ties in value go to the earlier index.
pub fn top_local_maxima(values: &[f64], k: usize) -> Vec<usize> {
    let n = values.len();
    let mut peaks: Vec<usize> = (0..n)
        .filter(|&i| {
            let left = i == 0 || values[i] >= values[i - 1];
            let right = i + 1 == n || values[i] >= values[i + 1];
            left && right
        })
        .collect();
    peaks.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    peaks.truncate(k);
    peaks.sort_unstable();
    peaks
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanResult {
    pub series: FidelitySeries,
    pub tau: f64,
    pub f_t_max: f64,
    pub f_c_at_tau: Option<f64>,
    pub fbar_at_tau: FidelityMatrix,
}

impl ScanResult {
    fn from_series(series: FidelitySeries) -> Result<Self> {
        let k = series.argmax().ok_or_else(|| Error::validation("empty time scan"))?;
        Ok(ScanResult {
            tau: series.times[k],
            f_t_max: series.f_t[k],
            f_c_at_tau: series.f_c[k],
            fbar_at_tau: series.fbar[k].clone(),
            series,
        })
    }
}

/// Coarse scan of the window, then refinement over `+- coarse_dt` around the
/// best coarse local maxima. `tau` is the earliest time attaining the
/// maximum of all evaluated points.
pub fn scan_source(source: &dyn FidelitySource, settings: &ScanSettings) -> Result<ScanResult> {
    settings.validate()?;
    let w = settings.window;
    let coarse_times = uniform_grid(w.t_min, w.t_max, settings.coarse_dt);
    let coarse = FidelitySeries::new(coarse_times.clone(), source.fidelities(&coarse_times)?);
    if settings.refine_dt >= settings.coarse_dt {
        return ScanResult::from_series(coarse);
    }
    let mut refine: Vec<f64> = Vec::new();
    for c in top_local_maxima(&coarse.f_t, settings.candidates) {
        let t = coarse_times[c];
        let lo = (t - settings.coarse_dt).max(w.t_min);
        let hi = (t + settings.coarse_dt).min(w.t_max);
        refine.extend(uniform_grid(lo, hi, settings.refine_dt));
    }
    refine.sort_by(f64::total_cmp);
    refine.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    refine.retain(|t| !coarse_times.iter().any(|c| (c - t).abs() < 1e-12));
    if refine.is_empty() {
        return ScanResult::from_series(coarse);
    }
    let fine = FidelitySeries::new(refine.clone(), source.fidelities(&refine)?);
    ScanResult::from_series(coarse.merge(&fine))
}

pub fn scan_time(spec: &SystemSpec, settings: &ScanSettings) -> Result<ScanResult> {
    scan_source(&TransferModel::new(spec)?, settings)
}

/// Single-time evaluation: `(f_t, f_c, fbar)`.
pub fn evaluate_at(params: &SystemSpec, tau: f64) -> Result<(f64, Option<f64>, FidelityMatrix)> {
    let fbar = TransferModel::new(params)?.average_series(&[tau])?.remove(0);
    let (f_t, f_c) = aggregate(&fbar);
    Ok((f_t, f_c, fbar))
}

/// Dense re-scan of `[tau - half_width, tau + half_width]`, clipped to `window`.
pub fn rescan_near(params: &SystemSpec, tau: f64, half_width: f64, window: TimeWindow, dt: f64) -> Result<ScanResult> {
    let w = TimeWindow::new(
        (tau - half_width).max(window.t_min),
        (tau + half_width).min(window.t_max),
    )?;
    scan_time(params, &ScanSettings::dense(w, dt))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    S1,
    S2,
    S3,
}

impl Strategy {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "s1" | "1" => Ok(Strategy::S1),
            "s2" | "2" => Ok(Strategy::S2),
            "s3" | "3" => Ok(Strategy::S3),
            other => Err(Error::validation(format!("unknown strategy `{other}`"))),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Strategy::S1 => "s1",
            Strategy::S2 => "s2",
            Strategy::S3 => "s3",
        };
        f.write_str(s)
    }
}

/// `start..=end` in steps of `step`, rounded to suppress float drift.
pub fn stepped(start: f64, end: f64, step: f64) -> Vec<f64> {
    let n = ((end - start) / step + 1e-9).floor() as usize;
    (0..=n)
        .map(|k| ((start + k as f64 * step) * 1e9).round() / 1e9)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySpec {
    pub strategy: Strategy,
    pub j_user_grid: Vec<f64>,
    pub b_edge_grid: Vec<f64>,
    /// One grid per user.
    pub b_user_grids: Vec<Vec<f64>>,
    pub scan: ScanSettings,
}

impl StrategySpec {
    /// Grids matching the granularity of the reported optima.
    pub fn default_for(strategy: Strategy, n_users: usize) -> Self {
        let b_range = if n_users >= 3 { 1.5 } else { 0.5 };
        let b_user = stepped(-b_range, b_range, 0.05);
        let j_grid = stepped(0.01, 1.0, 0.01);
        let b0_grid = stepped(1.0, 40.0, 1.0);
        let (j_user_grid, b_edge_grid) = match strategy {
            Strategy::S1 => (j_grid, vec![0.0]),
            Strategy::S2 => (vec![1.0], b0_grid),
            Strategy::S3 => (j_grid, std::iter::once(0.0).chain(b0_grid).collect()),
        };
        StrategySpec {
            strategy,
            j_user_grid,
            b_edge_grid,
            b_user_grids: vec![b_user; n_users],
            scan: ScanSettings::default(),
        }
    }

    pub fn validate(&self, n_users: usize) -> Result<()> {
        self.scan.validate()?;
        if self.b_user_grids.len() != n_users {
            return Err(Error::validation(format!(
                "{} user-field grids for {n_users} users",
                self.b_user_grids.len()
            )));
        }
        let grids = std::iter::once(&self.j_user_grid)
            .chain(std::iter::once(&self.b_edge_grid))
            .chain(self.b_user_grids.iter());
        for g in grids {
            if g.is_empty() {
                return Err(Error::validation("parameter grids must be non-empty"));
            }
            if g.windows(2).any(|w| w[1] <= w[0]) || g.iter().any(|x| !x.is_finite()) {
                return Err(Error::validation(
                    "parameter grids must be finite and strictly ascending",
                ));
            }
        }
        match self.strategy {
            Strategy::S1 if self.b_edge_grid != [0.0] => Err(Error::validation("strategy s1 fixes b_edge = 0")),
            Strategy::S2 if self.j_user_grid != [1.0] => {
                Err(Error::validation("strategy s2 fixes j_user = j_chain = 1"))
            }
            _ => Ok(()),
        }
    }

    pub fn n_points(&self) -> usize {
        self.j_user_grid.len() * self.b_edge_grid.len() * self.b_user_grids.iter().map(Vec::len).product::<usize>()
    }

    /// Parameters of grid point `index` in lexicographic order
    /// (`j_user`, `b_edge`, `b_1`, ..., `b_M`; last varies fastest).
    pub fn point(&self, index: usize) -> (f64, f64, Vec<f64>) {
        let mut rest = index;
        let mut b = vec![0.0; self.b_user_grids.len()];
        for (a, g) in self.b_user_grids.iter().enumerate().rev() {
            b[a] = g[rest % g.len()];
            rest /= g.len();
        }
        let b0 = self.b_edge_grid[rest % self.b_edge_grid.len()];
        rest /= self.b_edge_grid.len();
        (self.j_user_grid[rest], b0, b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationResult {
    pub strategy: Strategy,
    pub n_chain: usize,
    pub n_users: usize,
    pub best_params: SystemSpec,
    pub tau: f64,
    pub f_t_max: f64,
    pub f_c_at_tau: Option<f64>,
    pub series: FidelitySeries,
    pub grid: StrategySpec,
    pub grid_index: usize,
}

impl OptimizationResult {
    pub fn to_json(&self) -> serde_json::Value {
        let p = &self.best_params;
        let mut params = json!({
            "j_user": p.j_user,
            "b_edge": p.b_edge,
            "b_user": p.b_user(),
        });
        if let Some(b) = p.per_bond() {
            params["per_bond"] = json!(b);
        }
        json!({
            "strategy": self.strategy,
            "n": self.n_chain,
            "m": self.n_users,
            "params": params,
            "tau": self.tau,
            "f_t_max": self.f_t_max,
            "f_c_at_tau": self.f_c_at_tau,
            "grid": {
                "j_user": self.grid.j_user_grid,
                "b_edge": self.grid.b_edge_grid,
                "b_user": self.grid.b_user_grids,
                "t_min": self.grid.scan.window.t_min,
                "t_max": self.grid.scan.window.t_max,
                "coarse_dt": self.grid.scan.coarse_dt,
                "refine_dt": self.grid.scan.refine_dt,
                "refine_candidates": self.grid.scan.candidates,
                "n_points": self.grid.n_points(),
                "best_index": self.grid_index,
            },
            "version": crate::VERSION,
        })
    }
}

/// Exhaustive product-grid search. The winner is the largest `f_t_max`;
/// exact ties go to the lexicographically first grid point.
pub fn optimize_strategy(strategy: &StrategySpec, n_chain: usize, n_users: usize) -> Result<OptimizationResult> {
    let layout = SiteLayout::new(n_chain, n_users)?;
    strategy.validate(n_users)?;
    let n = strategy.n_points();
    let scores: Vec<Result<f64>> = (0..n)
        .into_par_iter()
        .map(|idx| {
            let (j0, b0, b) = strategy.point(idx);
            let spec = SystemSpec::new(layout, j0, b0, b)?;
            Ok(scan_time(&spec, &strategy.scan)?.f_t_max)
        })
        .collect();
    let mut best: Option<(usize, f64)> = None;
    for (idx, s) in scores.into_iter().enumerate() {
        let s = s?;
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((idx, s));
        }
    }
    let (idx, _) = best.expect("grid is non-empty");
    let (j0, b0, b) = strategy.point(idx);
    let best_params = SystemSpec::new(layout, j0, b0, b)?;
    let scan = scan_time(&best_params, &strategy.scan)?;
    Ok(OptimizationResult {
        strategy: strategy.strategy,
        n_chain,
        n_users,
        best_params,
        tau: scan.tau,
        f_t_max: scan.f_t_max,
        f_c_at_tau: scan.f_c_at_tau,
        series: scan.series,
        grid: strategy.clone(),
        grid_index: idx,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        assert_eq!(uniform_grid(1.0, 3.0, 1.0), vec![1.0, 2.0, 3.0]);
        assert_eq!(uniform_grid(1.0, 3.5, 1.0), vec![1.0, 2.0, 3.0, 3.5]);
        assert_eq!(uniform_grid(0.0, 0.1, 0.05).len(), 3);
        let s = stepped(-0.5, 0.5, 0.05);
        assert_eq!(s.len(), 21);
        assert_eq!(s[10], 0.0);
        assert_eq!(s[13], 0.15);
        assert_eq!(stepped(0.01, 1.0, 0.01).len(), 100);
    }

    #[test]
    fn local_maxima_ordering() {
        let v = [0.1, 0.5, 0.2, 0.9, 0.3, 0.5, 0.4, 0.95];
        assert_eq!(top_local_maxima(&v, 2), vec![3, 7]);
        assert_eq!(top_local_maxima(&v, 3), vec![1, 3, 7]);
        // tie between index 1 and 5 goes to the earlier one
        assert_eq!(top_local_maxima(&[0.0, 0.5, 0.0, 0.0, 0.0, 0.5, 0.0], 1), vec![1]);
    }

    #[test]
    fn grid_point_enumeration() {
        let mut s = StrategySpec::default_for(Strategy::S3, 2);
        s.j_user_grid = vec![0.1, 0.2];
        s.b_edge_grid = vec![0.0, 5.0, 6.0];
        s.b_user_grids = vec![vec![-0.1, 0.1], vec![0.3, 0.4, 0.5]];
        assert_eq!(s.n_points(), 36);
        assert_eq!(s.point(0), (0.1, 0.0, vec![-0.1, 0.3]));
        assert_eq!(s.point(1), (0.1, 0.0, vec![-0.1, 0.4]));
        assert_eq!(s.point(3), (0.1, 0.0, vec![0.1, 0.3]));
        assert_eq!(s.point(6), (0.1, 5.0, vec![-0.1, 0.3]));
        assert_eq!(s.point(35), (0.2, 6.0, vec![0.1, 0.5]));
    }

    #[test]
    fn strategy_invariants() {
        let s1 = StrategySpec::default_for(Strategy::S1, 2);
        assert_eq!(s1.b_edge_grid, vec![0.0]);
        assert!(s1.validate(2).is_ok());
        assert_eq!(s1.b_user_grids[0].len(), 21);
        let mut bad = s1.clone();
        bad.b_edge_grid = vec![3.0];
        assert!(bad.validate(2).is_err());
        let s2 = StrategySpec::default_for(Strategy::S2, 3);
        assert_eq!(s2.j_user_grid, vec![1.0]);
        assert_eq!(s2.b_edge_grid.len(), 40);
        assert_eq!(s2.b_user_grids[0].len(), 61);
        let mut empty = s2.clone();
        empty.b_user_grids[1].clear();
        assert!(empty.validate(3).is_err());
        assert!(s2.validate(2).is_err());
    }

    #[test]
    fn idle_channel_scan() {
        let spec = SystemSpec::with_params(4, 0.0, 0.0, &[0.2, -0.3]).unwrap();
        let settings = ScanSettings {
            window: TimeWindow::new(1.0, 40.0).unwrap(),
            ..ScanSettings::default()
        };
        let r = scan_time(&spec, &settings).unwrap();
        assert!((r.f_t_max - 0.5).abs() < 1e-10);
        // every point is 0.5 up to rounding; the earliest maximum wins
        let best = r.series.f_t.iter().cloned().fold(f64::MIN, f64::max);
        let first = r.series.f_t.iter().position(|&v| v == best).unwrap();
        assert_eq!(r.tau, r.series.times[first]);
    }

    #[test]
    fn refinement_never_loses() {
        for (j0, b) in [(0.3, [0.2, -0.1]), (0.6, [0.5, 0.1]), (0.1, [-0.3, 0.3])] {
            let spec = SystemSpec::with_params(5, j0, 0.5, &b).unwrap();
            let settings = ScanSettings {
                window: TimeWindow::new(1.0, 60.0).unwrap(),
                ..ScanSettings::default()
            };
            let coarse = scan_time(
                &spec,
                &ScanSettings {
                    refine_dt: settings.coarse_dt,
                    ..settings
                },
            )
            .unwrap();
            let refined = scan_time(&spec, &settings).unwrap();
            assert!(refined.f_t_max >= coarse.f_t_max);
            assert!(settings.window.contains(refined.tau));
            assert!(refined.series.times.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn tiny_search_is_deterministic_and_consistent() {
        let mut s = StrategySpec::default_for(Strategy::S1, 2);
        s.j_user_grid = vec![0.1, 0.3];
        s.b_user_grids = vec![vec![0.2, 0.4], vec![-0.3, -0.1]];
        s.scan.window = TimeWindow::new(1.0, 80.0).unwrap();
        let a = optimize_strategy(&s, 4, 2).unwrap();
        let b = optimize_strategy(&s, 4, 2).unwrap();
        assert_eq!(a, b);
        for idx in 0..s.n_points() {
            let (j0, b0, bu) = s.point(idx);
            let spec = SystemSpec::with_params(4, j0, b0, &bu).unwrap();
            assert!(scan_time(&spec, &s.scan).unwrap().f_t_max <= a.f_t_max);
        }
        let (f_t, _, _) = evaluate_at(&a.best_params, a.tau).unwrap();
        assert!((f_t - a.f_t_max).abs() < 1e-12);

        let mut single = s.clone();
        single.j_user_grid = vec![0.3];
        single.b_user_grids = vec![vec![0.4], vec![-0.1]];
        let one = optimize_strategy(&single, 4, 2).unwrap();
        let direct = scan_time(&one.best_params, &s.scan).unwrap();
        assert_eq!(one.f_t_max, direct.f_t_max);
        assert_eq!(one.tau, direct.tau);
    }

    #[test]
    fn evaluate_at_zero_time() {
        let spec = SystemSpec::with_params(6, 0.2, 1.0, &[0.3, -0.2]).unwrap();
        let (f_t, f_c, fbar) = evaluate_at(&spec, 0.0).unwrap();
        assert!((f_t - 0.5).abs() < 1e-12 && (f_c.unwrap() - 0.5).abs() < 1e-12);
        assert!(fbar.iter().all(|v| (v - 0.5).abs() < 1e-12));
    }
}
