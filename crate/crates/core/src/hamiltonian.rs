//! XX data-bus Hamiltonian: channel exchange, user couplings and local
//! z-fields, built either per excitation sector or over the full Hilbert
//! space.
//!
//! Conventions: Pauli operators throughout, so an exchange `g (XX + YY)`
//! hops an excitation with amplitude `2g`. `|0>` is the `+1` eigenstate of
//! `Z`, so a field `B` on a site contributes `+B` when the site is empty and
//! `-B` when it is occupied. Constant diagonal offsets are kept.
//!
//! The hopping amplitudes and fields are all real, so every matrix here is
//! real symmetric in the occupation basis.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{SectorBasis, SiteLayout};

/// Largest system the dense full-space builder accepts.
pub const MAX_FULL_SITES: usize = 14;

/// Parameters of the chain-plus-users Hamiltonian, in units of the chain
/// exchange `J` (which is therefore always 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpecConfig", into = "SpecConfig")]
pub struct SystemSpec {
    layout: SiteLayout,
    j_chain: f64,
    pub j_user: f64,
    pub b_edge: f64,
    b_user: Vec<f64>,
    per_bond: Option<Vec<f64>>,
    user_bonds: Option<Vec<f64>>,
}

/// Flat serialized form of [`SystemSpec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecConfig {
    pub chain_length: usize,
    pub n_users: usize,
    pub j_user: f64,
    #[serde(default)]
    pub b_edge: f64,
    pub b_user: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_bond: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user_bonds: Option<Vec<f64>>,
}

impl TryFrom<SpecConfig> for SystemSpec {
    type Error = Error;

    fn try_from(c: SpecConfig) -> Result<Self> {
        let layout = SiteLayout::new(c.chain_length, c.n_users)?;
        let mut spec = SystemSpec::new(layout, c.j_user, c.b_edge, c.b_user)?;
        if let Some(bonds) = c.per_bond {
            spec = spec.with_per_bond(bonds)?;
        }
        if let Some(bonds) = c.user_bonds {
            spec = spec.with_user_bonds(bonds)?;
        }
        Ok(spec)
    }
}

impl From<SystemSpec> for SpecConfig {
    fn from(s: SystemSpec) -> Self {
        SpecConfig {
            chain_length: s.layout.n_chain(),
            n_users: s.layout.n_users(),
            j_user: s.j_user,
            b_edge: s.b_edge,
            b_user: s.b_user,
            per_bond: s.per_bond,
            user_bonds: s.user_bonds,
        }
    }
}

/// One exchange edge `g (X_a X_b + Y_a Y_b)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bond {
    pub a: usize,
    pub b: usize,
    pub coupling: f64,
}

fn check_finite(name: &str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::validation(format!("{name} must be finite")))
    }
}

impl SystemSpec {
    pub fn new(layout: SiteLayout, j_user: f64, b_edge: f64, b_user: Vec<f64>) -> Result<Self> {
        if b_user.len() != layout.n_users() {
            return Err(Error::validation(format!(
                "b_user has {} entries, expected {}",
                b_user.len(),
                layout.n_users()
            )));
        }
        check_finite("j_user", &[j_user])?;
        check_finite("b_edge", &[b_edge])?;
        check_finite("b_user", &b_user)?;
        Ok(SystemSpec {
            layout,
            j_chain: 1.0,
            j_user,
            b_edge,
            b_user,
            per_bond: None,
            user_bonds: None,
        })
    }

    /// Convenience constructor from chain length and per-user fields.
    pub fn with_params(n_chain: usize, j_user: f64, b_edge: f64, b_user: &[f64]) -> Result<Self> {
        let layout = SiteLayout::new(n_chain, b_user.len())?;
        SystemSpec::new(layout, j_user, b_edge, b_user.to_vec())
    }

    /// Replace the uniform chain exchange with `N-1` explicit couplings.
    pub fn with_per_bond(mut self, bonds: Vec<f64>) -> Result<Self> {
        if bonds.len() != self.layout.n_chain() - 1 {
            return Err(Error::validation(format!(
                "per_bond has {} entries, expected {}",
                bonds.len(),
                self.layout.n_chain() - 1
            )));
        }
        check_finite("per_bond", &bonds)?;
        self.per_bond = Some(bonds);
        Ok(self)
    }

    /// Replace the uniform user coupling with one value per user pair; user
    /// `alpha`'s value sets both the `S_alpha-1` and the `N-R_alpha` bond.
    pub fn with_user_bonds(mut self, bonds: Vec<f64>) -> Result<Self> {
        if bonds.len() != self.layout.n_users() {
            return Err(Error::validation(format!(
                "user_bonds has {} entries, expected {}",
                bonds.len(),
                self.layout.n_users()
            )));
        }
        check_finite("user_bonds", &bonds)?;
        self.user_bonds = Some(bonds);
        Ok(self)
    }

    pub fn with_b_user(mut self, b_user: Vec<f64>) -> Result<Self> {
        if b_user.len() != self.layout.n_users() {
            return Err(Error::validation("b_user length does not match n_users"));
        }
        check_finite("b_user", &b_user)?;
        self.b_user = b_user;
        Ok(self)
    }

    pub fn layout(&self) -> &SiteLayout {
        &self.layout
    }

    pub fn n_users(&self) -> usize {
        self.layout.n_users()
    }

    pub fn n_chain(&self) -> usize {
        self.layout.n_chain()
    }

    pub fn j_chain(&self) -> f64 {
        self.j_chain
    }

    pub fn b_user(&self) -> &[f64] {
        &self.b_user
    }

    pub fn per_bond(&self) -> Option<&[f64]> {
        self.per_bond.as_deref()
    }

    pub fn user_bonds(&self) -> Option<&[f64]> {
        self.user_bonds.as_deref()
    }

    pub fn chain_coupling(&self, i: usize) -> f64 {
        self.per_bond.as_ref().map_or(self.j_chain, |b| b[i])
    }

    pub fn user_coupling(&self, alpha: usize) -> f64 {
        self.user_bonds.as_ref().map_or(self.j_user, |b| b[alpha])
    }

    /// Exchange edges of the coupling graph: `S_a-1`, `i-(i+1)`, `N-R_a`.
    pub fn bonds(&self) -> Vec<Bond> {
        let l = &self.layout;
        let mut out = Vec::with_capacity(l.n_chain() - 1 + 2 * l.n_users());
        for alpha in 0..l.n_users() {
            out.push(Bond {
                a: l.sender(alpha),
                b: l.first_chain(),
                coupling: self.user_coupling(alpha),
            });
        }
        for i in 0..l.n_chain() - 1 {
            out.push(Bond {
                a: l.chain(i),
                b: l.chain(i + 1),
                coupling: self.chain_coupling(i),
            });
        }
        for alpha in 0..l.n_users() {
            out.push(Bond {
                a: l.last_chain(),
                b: l.receiver(alpha),
                coupling: self.user_coupling(alpha),
            });
        }
        out
    }

    /// z-field on every site.
    pub fn site_fields(&self) -> Vec<f64> {
        let l = &self.layout;
        let mut f = vec![0.0; l.total_sites()];
        for (alpha, &b) in self.b_user.iter().enumerate() {
            f[l.sender(alpha)] = b;
            f[l.receiver(alpha)] = b;
        }
        f[l.first_chain()] += self.b_edge;
        f[l.last_chain()] += self.b_edge;
        f
    }

    /// Largest absolute matrix element over all sectors, an upper bound used
    /// for step-size control.
    pub fn max_element_bound(&self) -> f64 {
        let diag: f64 = self.site_fields().iter().map(|b| b.abs()).sum();
        let hop = self.bonds().iter().map(|b| 2.0 * b.coupling.abs()).fold(0.0, f64::max);
        diag.max(hop)
    }
}

/// Diagonal energy of an occupation bitstring under the given site fields.
pub fn diagonal_energy(fields: &[f64], state: u64) -> f64 {
    fields
        .iter()
        .enumerate()
        .map(|(b, &f)| if state >> b & 1 == 1 { -f } else { f })
        .sum()
}

/// Dense real symmetric Hamiltonian restricted to one excitation sector.
#[derive(Debug, Clone)]
pub struct SectorHamiltonian {
    pub basis: SectorBasis,
    pub matrix: DMatrix<f64>,
}

impl SectorHamiltonian {
    pub fn dim(&self) -> usize {
        self.basis.dim()
    }
}

/// Hamiltonian of `bonds` and `fields` on an arbitrary occupation basis.
/// Shared by the full-system and channel-only builders.
pub(crate) fn hopping_matrix(bonds: &[Bond], fields: &[f64], states: &[u64]) -> DMatrix<f64> {
    let dim = states.len();
    let mut h = DMatrix::<f64>::zeros(dim, dim);
    for (col, &s) in states.iter().enumerate() {
        h[(col, col)] = diagonal_energy(fields, s);
        for bond in bonds {
            let (ba, bb) = (s >> bond.a & 1, s >> bond.b & 1);
            if ba != bb {
                let t = s ^ (1u64 << bond.a | 1u64 << bond.b);
                let row = states.binary_search(&t).expect("hop stays inside the sector");
                h[(row, col)] += 2.0 * bond.coupling;
            }
        }
    }
    h
}

pub fn build_sector_hamiltonian(spec: &SystemSpec, basis: &SectorBasis) -> Result<SectorHamiltonian> {
    if basis.layout() != spec.layout() {
        return Err(Error::validation(
            "sector basis was built on a different layout than the system spec",
        ));
    }
    let matrix = hopping_matrix(&spec.bonds(), &spec.site_fields(), basis.states());
    Ok(SectorHamiltonian {
        basis: basis.clone(),
        matrix,
    })
}

#[derive(Clone, Copy)]
enum Pauli {
    X,
    Y,
    Z,
}

/// Apply a Pauli string to `|state>`: returns the image bitstring and phase.
fn apply_pauli_string(ops: &[(usize, Pauli)], state: u64) -> (u64, Complex64) {
    let mut s = state;
    let mut phase = Complex64::new(1.0, 0.0);
    for &(site, op) in ops {
        let bit = s >> site & 1;
        match op {
            Pauli::X => s ^= 1 << site,
            Pauli::Y => {
                // Y|0> = i|1>, Y|1> = -i|0>
                phase *= if bit == 0 {
                    Complex64::new(0.0, 1.0)
                } else {
                    Complex64::new(0.0, -1.0)
                };
                s ^= 1 << site;
            }
            Pauli::Z => {
                if bit == 1 {
                    phase = -phase;
                }
            }
        }
    }
    (s, phase)
}

/// Full `2^L`-dimensional Hamiltonian, built term by term from explicit
/// Pauli strings. Row/column index is the occupation bitstring itself.
pub fn build_full_hamiltonian(spec: &SystemSpec) -> Result<DMatrix<f64>> {
    let l = spec.layout().total_sites();
    if l > MAX_FULL_SITES {
        return Err(Error::resource(format!(
            "full Hilbert space of {l} sites exceeds the {MAX_FULL_SITES}-site limit"
        )));
    }
    let dim = 1usize << l;
    let mut terms: Vec<(f64, Vec<(usize, Pauli)>)> = Vec::new();
    for bond in spec.bonds() {
        terms.push((bond.coupling, vec![(bond.a, Pauli::X), (bond.b, Pauli::X)]));
        terms.push((bond.coupling, vec![(bond.a, Pauli::Y), (bond.b, Pauli::Y)]));
    }
    for (site, &b) in spec.site_fields().iter().enumerate() {
        if b != 0.0 {
            terms.push((b, vec![(site, Pauli::Z)]));
        }
    }
    let mut h = DMatrix::<f64>::zeros(dim, dim);
    for (coeff, ops) in &terms {
        for col in 0..dim {
            let (row, phase) = apply_pauli_string(ops, col as u64);
            debug_assert!(phase.im.abs() < 1e-15);
            h[(row as usize, col)] += coeff * phase.re;
        }
    }
    Ok(h)
}
