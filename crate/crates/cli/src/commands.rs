use serde_json::{json, Value};
use spinbus::disorder::DisorderSpec;
use spinbus::io::{fmt_float, write_ipr_csv, write_series_csv, write_state_scan_csv, write_sweep_csv, Provenance};
use spinbus::localization::ipr_report;
use spinbus::optimizer::uniform_grid;
use spinbus::robustness::state_scan::{state_slice, theta_grid, DEFAULT_THETA_POINTS};
use spinbus::{
    dephasing_sweep, disorder_ensemble, optimize_strategy, scan_time, state_scan, thermal_sweep, DisorderAxis, Error,
    OptimizationResult, Result, Strategy, StrategySpec, SweepResult, TransferModel,
};

use crate::config::Config;

/// Everything a subcommand produces; the caller writes it out.
pub struct Outcome {
    pub files: Vec<(String, Vec<u8>)>,
    pub config: Value,
    pub results: Value,
    pub seed: Option<u64>,
}

fn csv(
    name: &str,
    prov: &Provenance,
    write: impl FnOnce(&mut Vec<u8>, &Provenance) -> Result<()>,
) -> Result<(String, Vec<u8>)> {
    let mut buf = Vec::new();
    write(&mut buf, prov)?;
    Ok((name.to_string(), buf))
}

fn required<T: Clone>(v: &Option<T>, flag: &str) -> Result<T> {
    v.clone().ok_or_else(|| Error::validation(format!("missing --{flag}")))
}

pub fn evolve(cfg: &Config) -> Result<Outcome> {
    let spec = cfg.system()?;
    let window = cfg.window(0.0)?;
    let dt = cfg.dt.unwrap_or(0.05);
    if dt.is_nan() || dt <= 0.0 {
        return Err(Error::validation("--dt must be positive"));
    }
    let series = TransferModel::new(&spec)?.series(&uniform_grid(window.t_min, window.t_max, dt))?;
    let config = json!({"spec": spec, "t_min": window.t_min, "t_max": window.t_max, "dt": dt});
    let prov = Provenance::new(config.clone(), cfg.timestamp());
    let k = series.argmax().expect("time grid is non-empty");
    let results = json!({
        "rows": series.len(),
        "max_f_t": series.f_t[k],
        "t_at_max": series.times[k],
        "f_c_at_max": series.f_c[k],
        "file": "evolve.csv",
    });
    Ok(Outcome {
        files: vec![csv("evolve.csv", &prov, |w, p| write_series_csv(w, &series, Some(p)))?],
        config,
        results,
        seed: None,
    })
}

fn strategy_grid(cfg: &Config) -> Result<StrategySpec> {
    let strategy = cfg.strategy()?.unwrap_or(Strategy::S1);
    let m = cfg.n_users()?;
    let mut grid = StrategySpec::default_for(strategy, m);
    if let Some(g) = &cfg.j_user_grid {
        grid.j_user_grid = g.clone();
    }
    if let Some(g) = &cfg.b_edge_grid {
        grid.b_edge_grid = g.clone();
    }
    if let Some(g) = &cfg.b_user_grid {
        grid.b_user_grids = vec![g.clone(); m];
    }
    grid.scan = cfg.scan()?;
    grid.validate(m)?;
    Ok(grid)
}

fn grid_json(grid: &StrategySpec) -> Value {
    json!({
        "strategy": grid.strategy,
        "j_user_grid": grid.j_user_grid,
        "b_edge_grid": grid.b_edge_grid,
        "b_user_grids": grid.b_user_grids,
        "scan": grid.scan,
    })
}

pub fn optimize(cfg: &Config) -> Result<Outcome> {
    let n = required(&cfg.n, "n")?;
    let m = cfg.n_users()?;
    let grid = strategy_grid(cfg)?;
    let best = optimize_strategy(&grid, n, m)?;
    let config = json!({"n": n, "m": m, "grid": grid_json(&grid)});
    let prov = Provenance::new(config.clone(), cfg.timestamp());
    let mut summary = best.to_json();
    summary["file"] = json!("optimize_series.csv");
    Ok(Outcome {
        files: vec![csv("optimize_series.csv", &prov, |w, p| {
            write_series_csv(w, &best.series, Some(p))
        })?],
        config,
        results: summary,
        seed: None,
    })
}

pub const TABLE_COLUMNS: &str = "n,m,strategy,j_user,b_edge,b_user,tau,f_t_max,f_c_at_tau";

fn table_row(r: &OptimizationResult) -> String {
    let p = &r.best_params;
    let b: Vec<String> = p.b_user().iter().map(|&x| fmt_float(x)).collect();
    format!(
        "{},{},{},{},{},{},{},{},{}",
        r.n_chain,
        r.n_users,
        r.strategy,
        fmt_float(p.j_user),
        fmt_float(p.b_edge),
        b.join(";"),
        fmt_float(r.tau),
        fmt_float(r.f_t_max),
        r.f_c_at_tau.map(fmt_float).unwrap_or_default()
    )
}

pub fn table(cfg: &Config) -> Result<Outcome> {
    let ns = required(&cfg.n_list, "n-list")?;
    let m = cfg.n_users()?;
    let grid = strategy_grid(cfg)?;
    let rows: Vec<OptimizationResult> = ns
        .iter()
        .map(|&n| optimize_strategy(&grid, n, m))
        .collect::<Result<_>>()?;
    let config = json!({"n_list": ns, "m": m, "grid": grid_json(&grid)});
    let prov = Provenance::new(config.clone(), cfg.timestamp());
    let file = csv("table.csv", &prov, |w, p| {
        p.write(w)?;
        let mut text = format!("{TABLE_COLUMNS}\n");
        for r in &rows {
            text.push_str(&table_row(r));
            text.push('\n');
        }
        w.extend(text.bytes());
        Ok(())
    })?;
    let results: Vec<Value> = rows.iter().map(OptimizationResult::to_json).collect();
    Ok(Outcome {
        files: vec![file],
        config,
        results: json!({"rows": results, "file": "table.csv"}),
        seed: None,
    })
}

fn sweep_outcome(cfg: &Config, name: &str, config: Value, sweep: SweepResult) -> Result<Outcome> {
    let prov = Provenance::new(config.clone(), cfg.timestamp());
    let file = format!("{name}.csv");
    let out = csv(&file, &prov, |w, p| write_sweep_csv(w, &sweep, Some(p)))?;
    let mut results = serde_json::to_value(&sweep).map_err(|e| Error::numerical(e.to_string()))?;
    results["file"] = json!(file);
    Ok(Outcome {
        files: vec![out],
        config,
        results,
        seed: sweep.seed,
    })
}

pub fn thermal(cfg: &Config) -> Result<Outcome> {
    let spec = cfg.system()?;
    let scan = cfg.scan()?;
    let kbt = required(&cfg.kbt, "kbt")?;
    let sweep = thermal_sweep(&spec, &scan, &kbt)?;
    sweep_outcome(cfg, "thermal", json!({"spec": spec, "scan": scan, "kbt": kbt}), sweep)
}

pub fn dephasing(cfg: &Config) -> Result<Outcome> {
    let spec = cfg.system()?;
    let scan = cfg.scan()?;
    let gamma = required(&cfg.gamma, "gamma")?;
    let sweep = dephasing_sweep(&spec, &scan, &gamma)?;
    sweep_outcome(
        cfg,
        "dephasing",
        json!({"spec": spec, "scan": scan, "gamma": gamma}),
        sweep,
    )
}

pub fn disorder(cfg: &Config) -> Result<Outcome> {
    let spec = cfg.system()?;
    let scan = cfg.scan()?;
    let axis = DisorderAxis::parse(&required(&cfg.axis, "axis")?)?;
    let values = required(&cfg.values, "values")?;
    let d = DisorderSpec {
        delta: cfg.delta.unwrap_or(0.0),
        delta0: cfg.delta0.unwrap_or(0.0),
        eta: cfg.eta.unwrap_or(0.0),
        eta0: cfg.eta0.unwrap_or(0.0),
        n_realizations: cfg.realizations.unwrap_or(100),
        master_seed: cfg.seed(),
    };
    d.validate()?;
    let sweep = disorder_ensemble(&spec, &scan, &d, axis, &values)?;
    let config = json!({"spec": spec, "scan": scan, "disorder": d, "axis": axis, "values": values});
    sweep_outcome(cfg, "disorder", config, sweep)
}

pub fn state(cfg: &Config) -> Result<Outcome> {
    let spec = cfg.system()?;
    let scan = cfg.scan()?;
    let tau = match cfg.tau {
        Some(t) => t,
        None => scan_time(&spec, &scan)?.tau,
    };
    let points = cfg.theta_points.unwrap_or(DEFAULT_THETA_POINTS);
    if points < 2 {
        return Err(Error::validation("--theta-points must be at least 2"));
    }
    let thetas = theta_grid(points);
    let seed = cfg.seed();
    let m = spec.n_users();
    let surface = match cfg.user {
        None if m == 2 => state_scan(&spec, tau, &thetas, seed)?,
        user => {
            let u = user.unwrap_or(1);
            if u == 0 {
                return Err(Error::validation("--user is 1-based"));
            }
            state_slice(&spec, tau, u - 1, &thetas, seed)?
        }
    };
    let config = json!({"spec": spec, "tau": tau, "theta_points": points, "user": cfg.user, "seed": seed});
    let prov = Provenance::new(config.clone(), cfg.timestamp());
    let (r, c, min) = surface.minimum();
    let results = json!({
        "tau": tau,
        "phis": surface.phis,
        "f_t_at_zero": surface.f_t[(0, 0)],
        "max_f_t": surface.f_t.max(),
        "min_f_t": min,
        "min_theta1": surface.thetas[r],
        "min_theta2": if surface.f_t.ncols() > 1 { json!(surface.thetas[c]) } else { Value::Null },
        "file": "state_scan.csv",
    });
    Ok(Outcome {
        files: vec![csv("state_scan.csv", &prov, |w, p| {
            write_state_scan_csv(w, &surface, Some(p))
        })?],
        config,
        results,
        seed: Some(seed),
    })
}

pub fn ipr(cfg: &Config) -> Result<Outcome> {
    let spec = cfg.system()?;
    let sectors = cfg.sectors.clone().unwrap_or_else(|| vec![1, 2]);
    let reports = sectors
        .iter()
        .map(|&k| ipr_report(&spec, k))
        .collect::<Result<Vec<_>>>()?;
    let config = json!({"spec": spec, "sectors": sectors});
    let prov = Provenance::new(config.clone(), cfg.timestamp());
    let summary: Vec<Value> = reports
        .iter()
        .map(|r| {
            json!({
                "sector": r.sector,
                "dim": r.dim,
                "ipr_near_1": r.count_in(1.0, 1.05),
                "ipr_near_2": r.count_in(1.9, 2.1),
                "min_ipr": r.eigenstates.iter().map(|e| e.ipr).fold(f64::INFINITY, f64::min),
            })
        })
        .collect();
    Ok(Outcome {
        files: vec![csv("ipr.csv", &prov, |w, p| write_ipr_csv(w, &reports, Some(p)))?],
        config,
        results: json!({"sectors": summary, "file": "ipr.csv"}),
        seed: None,
    })
}
