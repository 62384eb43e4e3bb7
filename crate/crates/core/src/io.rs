//! CSV emission with `#`-prefixed provenance lines.

use std::io::Write;

use crate::error::{Error, Result};
use crate::fidelity::FidelitySeries;
use crate::localization::IprReport;
use crate::robustness::{StateScan, SweepResult};

/// Significant digits of every float written to CSV.
pub const SIGNIFICANT_DIGITS: usize = 12;

/// Shortest rendering of `x` rounded to 12 significant digits.
pub fn fmt_float(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent in scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..SIGNIFICANT_DIGITS as i32).contains(&exp) {
        let decimals = (SIGNIFICANT_DIGITS as i32 - 1 - exp).max(0) as usize;
        trim_zeros(format!("{:.*}", decimals, x))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn opt_float(x: Option<f64>) -> String {
    x.map(fmt_float).unwrap_or_default()
}

/// Metadata written at the top of every output file.
#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub version: String,
    pub config: serde_json::Value,
    /// Seconds since the Unix epoch; omitted for reproducible output.
    pub timestamp: Option<u64>,
}

impl Provenance {
    pub fn new(config: serde_json::Value, with_timestamp: bool) -> Self {
        let timestamp = with_timestamp.then(|| {
            std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0)
        });
        Provenance {
            version: crate::VERSION.to_string(),
            config,
            timestamp,
        }
    }

    pub fn write(&self, w: &mut dyn Write) -> Result<()> {
        writeln!(w, "# spinbus {}", self.version).map_err(io_err)?;
        writeln!(w, "# config: {}", self.config).map_err(io_err)?;
        if let Some(t) = self.timestamp {
            writeln!(w, "# generated: {t}").map_err(io_err)?;
        }
        Ok(())
    }
}

pub(crate) fn io_err(e: std::io::Error) -> Error {
    Error::resource(format!("write failed: {e}"))
}

fn header(prov: Option<&Provenance>, w: &mut dyn Write, columns: &str) -> Result<()> {
    if let Some(p) = prov {
        p.write(w)?;
    }
    writeln!(w, "{columns}").map_err(io_err)
}

pub fn series_columns(n_users: usize) -> String {
    let mut cols = vec!["t".to_string()];
    for a in 1..=n_users {
        for b in 1..=n_users {
            cols.push(format!("fbar_{a}{b}"));
        }
    }
    cols.push("f_t".into());
    cols.push("f_c".into());
    cols.join(",")
}

/// `t,fbar_11,...,fbar_MM,f_t,f_c`, one row per time; `f_c` is empty for a
/// single user.
pub fn write_series_csv(w: &mut dyn Write, series: &FidelitySeries, prov: Option<&Provenance>) -> Result<()> {
    let m = series.n_users();
    header(prov, w, &series_columns(m))?;
    for k in 0..series.len() {
        let mut row = vec![fmt_float(series.times[k])];
        let f = &series.fbar[k];
        for a in 0..m {
            for b in 0..m {
                row.push(fmt_float(f[(a, b)]));
            }
        }
        row.push(fmt_float(series.f_t[k]));
        row.push(opt_float(series.f_c[k]));
        writeln!(w, "{}", row.join(",")).map_err(io_err)?;
    }
    Ok(())
}

pub const SWEEP_COLUMNS: &str = "axis_value,mean_f_t_max,std_f_t_max,n_realizations,seed";

pub fn write_sweep_csv(w: &mut dyn Write, sweep: &SweepResult, prov: Option<&Provenance>) -> Result<()> {
    header(prov, w, SWEEP_COLUMNS)?;
    let seed = sweep.seed.map(|s| s.to_string()).unwrap_or_default();
    for k in 0..sweep.values.len() {
        writeln!(
            w,
            "{},{},{},{},{}",
            fmt_float(sweep.values[k]),
            fmt_float(sweep.mean[k]),
            fmt_float(sweep.std[k]),
            sweep.n_realizations,
            seed
        )
        .map_err(io_err)?;
    }
    Ok(())
}

pub const STATE_SCAN_COLUMNS: &str = "theta1,theta2,f_t";

/// One row per grid point, `theta1` outermost. A one-dimensional slice
/// writes its swept angle as `theta1` and leaves `theta2` empty.
pub fn write_state_scan_csv(w: &mut dyn Write, scan: &StateScan, prov: Option<&Provenance>) -> Result<()> {
    header(prov, w, STATE_SCAN_COLUMNS)?;
    let slice = scan.f_t.ncols() == 1 && scan.thetas.len() > 1;
    for (r, &t1) in scan.thetas.iter().enumerate() {
        if slice {
            writeln!(w, "{},,{}", fmt_float(t1), fmt_float(scan.f_t[(r, 0)])).map_err(io_err)?;
            continue;
        }
        for (c, &t2) in scan.thetas.iter().enumerate() {
            writeln!(w, "{},{},{}", fmt_float(t1), fmt_float(t2), fmt_float(scan.f_t[(r, c)])).map_err(io_err)?;
        }
    }
    Ok(())
}

pub const IPR_COLUMNS: &str = "sector,k_index,eigenvalue,ipr,top_positions,top_weights";

/// Support positions and weights are `;`-separated lists.
pub fn write_ipr_csv(w: &mut dyn Write, reports: &[IprReport], prov: Option<&Provenance>) -> Result<()> {
    header(prov, w, IPR_COLUMNS)?;
    for r in reports {
        for e in &r.eigenstates {
            let weights: Vec<String> = e.top_weights.iter().map(|&x| fmt_float(x)).collect();
            writeln!(
                w,
                "{},{},{},{},{},{}",
                r.sector,
                e.k_index,
                fmt_float(e.eigenvalue),
                fmt_float(e.ipr),
                e.top_labels.join(";"),
                weights.join(";")
            )
            .map_err(io_err)?;
        }
    }
    Ok(())
}
