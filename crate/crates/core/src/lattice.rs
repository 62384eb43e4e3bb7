//! Site layout of the senders, channel and receivers, and the
//! excitation-number sectors of the occupation basis.
//!
//! Sites are indexed `0..M` for the senders `S_1..S_M`, `M..M+N` for the
//! channel sites `1..N`, and `M+N..N+2M` for the receivers `R_1..R_M`.
//! A basis state is a bitstring over these indices; bit `b` set means site
//! `b` holds `|1>`.

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::{Error, Result};

/// Largest number of sites a bitstring can address.
pub const MAX_SITES: usize = 63;

/// What a site index stands for. Labels are 1-based, matching `S_1`, `1`, `R_1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SiteRole {
    Sender(usize),
    Chain(usize),
    Receiver(usize),
}

impl fmt::Display for SiteRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SiteRole::Sender(a) => write!(f, "S{a}"),
            SiteRole::Chain(i) => write!(f, "{i}"),
            SiteRole::Receiver(a) => write!(f, "R{a}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SiteLayout {
    n_chain: usize,
    n_users: usize,
}

impl SiteLayout {
    pub fn new(n_chain: usize, n_users: usize) -> Result<Self> {
        if n_chain < 2 {
            return Err(Error::validation(format!(
                "chain length must be at least 2, got {n_chain}"
            )));
        }
        if n_users < 1 {
            return Err(Error::validation("at least one user pair is required"));
        }
        if n_chain + 2 * n_users > MAX_SITES {
            return Err(Error::validation(format!(
                "{} sites exceed the {MAX_SITES}-site bitstring limit",
                n_chain + 2 * n_users
            )));
        }
        Ok(SiteLayout { n_chain, n_users })
    }

    pub fn n_chain(&self) -> usize {
        self.n_chain
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn total_sites(&self) -> usize {
        self.n_chain + 2 * self.n_users
    }

    /// Site index of sender `alpha` (0-based user index).
    pub fn sender(&self, alpha: usize) -> usize {
        debug_assert!(alpha < self.n_users);
        alpha
    }

    /// Site index of receiver `alpha` (0-based user index).
    pub fn receiver(&self, alpha: usize) -> usize {
        debug_assert!(alpha < self.n_users);
        self.n_users + self.n_chain + alpha
    }

    /// Site index of chain site `i` (0-based, so `chain(0)` is site 1).
    pub fn chain(&self, i: usize) -> usize {
        debug_assert!(i < self.n_chain);
        self.n_users + i
    }

    pub fn first_chain(&self) -> usize {
        self.chain(0)
    }

    pub fn last_chain(&self) -> usize {
        self.chain(self.n_chain - 1)
    }

    /// Bit mask of all sender sites.
    pub fn sender_mask(&self) -> u64 {
        (1u64 << self.n_users) - 1
    }

    /// Bit mask of all channel sites.
    pub fn chain_mask(&self) -> u64 {
        ((1u64 << self.n_chain) - 1) << self.n_users
    }

    pub fn role(&self, index: usize) -> SiteRole {
        assert!(
            index < self.total_sites(),
            "site {index} out of range for {} sites",
            self.total_sites()
        );
        let m = self.n_users;
        let n = self.n_chain;
        if index < m {
            SiteRole::Sender(index + 1)
        } else if index < m + n {
            SiteRole::Chain(index - m + 1)
        } else {
            SiteRole::Receiver(index - m - n + 1)
        }
    }

    /// Labels of the occupied sites of `state`, joined with `+` (e.g. `S1+R1`).
    pub fn label(&self, state: u64) -> String {
        let mut parts = Vec::new();
        for b in 0..self.total_sites() {
            if state >> b & 1 == 1 {
                parts.push(self.role(b).to_string());
            }
        }
        if parts.is_empty() {
            "vac".to_string()
        } else {
            parts.join("+")
        }
    }
}

/// All occupation bitstrings of a layout with a fixed number of excitations,
/// in ascending integer order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SectorBasis {
    layout: SiteLayout,
    excitations: usize,
    states: Vec<u64>,
}

impl SectorBasis {
    pub fn layout(&self) -> &SiteLayout {
        &self.layout
    }

    pub fn excitations(&self) -> usize {
        self.excitations
    }

    pub fn states(&self) -> &[u64] {
        &self.states
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn index_of(&self, state: u64) -> Option<usize> {
        self.states.binary_search(&state).ok()
    }
}

pub fn enumerate_sector(layout: &SiteLayout, k: usize) -> Result<SectorBasis> {
    let l = layout.total_sites();
    if k > l {
        return Err(Error::validation(format!("excitation number {k} exceeds {l} sites")));
    }
    let states = combinations(l, k);
    Ok(SectorBasis {
        layout: *layout,
        excitations: k,
        states,
    })
}

/// Every `k`-bit subset of `n` bits, ascending (Gosper's hack).
pub(crate) fn combinations(n: usize, k: usize) -> Vec<u64> {
    if k == 0 {
        return vec![0];
    }
    if k > n {
        return Vec::new();
    }
    let limit = 1u64 << n;
    let mut out = Vec::with_capacity(binomial(n, k));
    let mut v: u64 = (1u64 << k) - 1;
    while v < limit {
        out.push(v);
        let c = v & v.wrapping_neg();
        let r = v + c;
        v = (((r ^ v) >> 2) / c) | r;
    }
    out
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc as usize
}
