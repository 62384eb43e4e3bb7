//! Inverse participation ratios of sector eigenstates.

use serde::Serialize;

use crate::dynamics::sector_cache;
use crate::error::{Error, Result};
use crate::hamiltonian::SystemSpec;

/// Fraction of the fourth-power mass an eigenstate's support must cover.
pub const SUPPORT_FRACTION: f64 = 0.95;

/// `1 / sum |v_n|^4` of a vector normalized to one.
pub fn ipr(v: impl IntoIterator<Item = f64>) -> f64 {
    let mut s2 = 0.0;
    let mut s4 = 0.0;
    for x in v {
        let p = x * x;
        s2 += p;
        s4 += p * p;
    }
    s2 * s2 / s4
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EigenLocalization {
    /// Position in ascending energy order.
    pub k_index: usize,
    pub eigenvalue: f64,
    pub ipr: f64,
    /// Occupation states carrying the support, largest weight first.
    pub top_states: Vec<u64>,
    pub top_labels: Vec<String>,
    /// `|<n|e_k>|^4` of each support state.
    pub top_weights: Vec<f64>,
}

impl EigenLocalization {
    /// True when the support is exactly the given set of states.
    pub fn supported_on(&self, states: &[u64]) -> bool {
        self.top_states.len() == states.len() && states.iter().all(|s| self.top_states.contains(s))
    }

    /// True when the support lies inside the given set of states.
    pub fn supported_within(&self, states: &[u64]) -> bool {
        self.top_states.iter().all(|s| states.contains(s))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IprReport {
    /// Excitation number of the sector.
    pub sector: usize,
    pub dim: usize,
    pub eigenstates: Vec<EigenLocalization>,
}

impl IprReport {
    pub fn count_in(&self, lo: f64, hi: f64) -> usize {
        self.eigenstates.iter().filter(|e| e.ipr >= lo && e.ipr <= hi).count()
    }
}

/// IPR and support of every eigenstate of sector `k`.
pub fn ipr_report(spec: &SystemSpec, k: usize) -> Result<IprReport> {
    if k == 0 || k > spec.layout().total_sites() {
        return Err(Error::validation(format!("sector {k} has no localization structure")));
    }
    let cache = sector_cache(spec, k)?;
    let states = cache.basis.states();
    let layout = spec.layout();
    let mut eigenstates = Vec::with_capacity(cache.dim());
    for c in 0..cache.eigenvalues.len() {
        let col = cache.eigenvectors.column(c);
        let mut weights: Vec<(usize, f64)> = col.iter().map(|x| x.powi(4)).enumerate().collect();
        let total: f64 = weights.iter().map(|w| w.1).sum();
        weights.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let mut acc = 0.0;
        let mut support = Vec::new();
        for &(p, w) in &weights {
            support.push((p, w));
            acc += w;
            if acc >= SUPPORT_FRACTION * total {
                break;
            }
        }
        eigenstates.push(EigenLocalization {
            k_index: c,
            eigenvalue: cache.eigenvalues[c],
            ipr: ipr(col.iter().copied()),
            top_states: support.iter().map(|&(p, _)| states[p]).collect(),
            top_labels: support.iter().map(|&(p, _)| layout.label(states[p])).collect(),
            top_weights: support.iter().map(|&(_, w)| w).collect(),
        });
    }
    Ok(IprReport {
        sector: k,
        dim: cache.dim(),
        eigenstates,
    })
}

pub fn ipr_one_excitation(spec: &SystemSpec) -> Result<IprReport> {
    ipr_report(spec, 1)
}

pub fn ipr_two_excitation(spec: &SystemSpec) -> Result<IprReport> {
    ipr_report(spec, 2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formula_limits() {
        let d = 7;
        let u = vec![1.0 / (d as f64).sqrt(); d];
        assert!((ipr(u) - d as f64).abs() < 1e-12);
        assert!((ipr([0.0, 1.0, 0.0]) - 1.0).abs() < 1e-15);
        // pair states: uniform over 15 two-particle positions
        assert!((ipr(vec![1.0 / 15f64.sqrt(); 15]) - 15.0).abs() < 1e-12);
    }

    #[test]
    fn detached_site_is_fully_localized() {
        let spec = SystemSpec::with_params(4, 0.0, 0.0, &[0.7]).unwrap();
        let r = ipr_one_excitation(&spec).unwrap();
        let layout = spec.layout();
        let s = 1u64 << layout.sender(0);
        let rr = 1u64 << layout.receiver(0);
        // sender and receiver are degenerate, so any rotation of the pair is an
        // eigenvector; the pair together still has IPR in [1, 2]
        let loc: Vec<_> = r.eigenstates.iter().filter(|e| e.supported_within(&[s, rr])).collect();
        assert_eq!(loc.len(), 2);
        for e in &r.eigenstates {
            assert!(e.ipr >= 1.0 - 1e-9 && e.ipr <= r.dim as f64 + 1e-9);
            let w: f64 = e.top_weights.iter().sum();
            assert!(w >= SUPPORT_FRACTION / e.ipr - 1e-12);
        }
    }

    #[test]
    fn unique_pair_state_gives_unit_ipr() {
        let spec = SystemSpec::with_params(3, 0.0, 0.0, &[0.7, -0.3]).unwrap();
        let layout = spec.layout();
        let s1r1 = 1u64 << layout.sender(0) | 1u64 << layout.receiver(0);
        let r = ipr_two_excitation(&spec).unwrap();
        let hits: Vec<_> = r.eigenstates.iter().filter(|e| e.supported_on(&[s1r1])).collect();
        assert_eq!(hits.len(), 1);
        assert!((hits[0].ipr - 1.0).abs() < 1e-9);
        assert_eq!(hits[0].top_labels, vec!["S1+R1".to_string()]);
        assert!(ipr_report(&spec, 0).is_err());
    }
}
