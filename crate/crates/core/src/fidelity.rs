//! Receiver states, pointwise and Haar-averaged fidelity matrices.
//!
//! Every sender bitstring `i` seeds one initial state `|i> (x) |channel> (x) |0_R>`
//! in a fixed excitation sector. The reduced operators
//! `Gamma^b_{ij} = Tr_{not R_b} U[|i><j| (x) ...]` are partial-trace overlaps
//! between pairs of evolved seeds; both the pointwise fidelity and the
//! closed-form Bloch-sphere average are assembled from them.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::disorder::realization_rng;
use crate::dynamics::{sector_cache, EvolvedBatch, SpectralCache};
use crate::error::{Error, Result};
use crate::hamiltonian::SystemSpec;
use crate::lattice::SectorBasis;

/// `F_ab` matrix: row = sender, column = receiver.
pub type FidelityMatrix = DMatrix<f64>;

/// Bloch angles `(theta, phi)` of each sender.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputState {
    pub angles: Vec<(f64, f64)>,
}

impl InputState {
    pub fn new(angles: Vec<(f64, f64)>) -> Result<Self> {
        for &(theta, phi) in &angles {
            if !(0.0..=std::f64::consts::PI).contains(&theta) {
                return Err(Error::validation(format!("theta = {theta} outside [0, pi]")));
            }
            if !(0.0..std::f64::consts::TAU).contains(&phi) {
                return Err(Error::validation(format!("phi = {phi} outside [0, 2 pi)")));
            }
        }
        Ok(InputState { angles })
    }

    pub fn n_users(&self) -> usize {
        self.angles.len()
    }

    /// `(<0|psi_a>, <1|psi_a>)` for sender `alpha`.
    pub fn qubit(&self, alpha: usize) -> [Complex64; 2] {
        let (theta, phi) = self.angles[alpha];
        [
            Complex64::new((theta / 2.0).cos(), 0.0),
            Complex64::from_polar((theta / 2.0).sin(), phi),
        ]
    }

    /// Product-state amplitudes `a_i`, indexed by sender bitstring.
    pub fn amplitudes(&self) -> Vec<Complex64> {
        let m = self.n_users();
        let qubits: Vec<_> = (0..m).map(|a| self.qubit(a)).collect();
        (0..1usize << m)
            .map(|i| {
                qubits
                    .iter()
                    .enumerate()
                    .fold(Complex64::new(1.0, 0.0), |acc, (a, q)| acc * q[i >> a & 1])
            })
            .collect()
    }
}

/// `(f_t, f_c)`: mean of the diagonal and of the off-diagonal entries.
pub fn aggregate(fbar: &FidelityMatrix) -> (f64, Option<f64>) {
    let m = fbar.nrows();
    let f_t = (0..m).map(|a| fbar[(a, a)]).sum::<f64>() / m as f64;
    if m < 2 {
        return (f_t, None);
    }
    let off: f64 = fbar.iter().sum::<f64>() - f_t * m as f64;
    (f_t, Some(off / (m * (m - 1)) as f64))
}

/// Averaged fidelity matrices over a time grid, with their aggregates.
#[derive(Debug, Clone, PartialEq)]
pub struct FidelitySeries {
    pub times: Vec<f64>,
    pub fbar: Vec<FidelityMatrix>,
    pub f_t: Vec<f64>,
    pub f_c: Vec<Option<f64>>,
}

impl FidelitySeries {
    pub fn new(times: Vec<f64>, fbar: Vec<FidelityMatrix>) -> Self {
        let (f_t, f_c) = fbar.iter().map(aggregate).unzip();
        FidelitySeries { times, fbar, f_t, f_c }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn n_users(&self) -> usize {
        self.fbar.first().map_or(0, |f| f.nrows())
    }

    /// Index of the largest `f_t`, earliest on exact ties.
    pub fn argmax(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (k, &v) in self.f_t.iter().enumerate() {
            if best.is_none_or(|b| v > self.f_t[b]) {
                best = Some(k);
            }
        }
        best
    }

    /// Merge with another series; rows are kept ascending in time and exact
    /// duplicate times keep the entry from `self`.
    pub fn merge(&self, other: &FidelitySeries) -> FidelitySeries {
        let mut rows: Vec<(f64, &FidelityMatrix)> = self.times.iter().copied().zip(&self.fbar).collect();
        for (t, f) in other.times.iter().copied().zip(&other.fbar) {
            if !self.times.contains(&t) {
                rows.push((t, f));
            }
        }
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (times, fbar) = rows.into_iter().map(|(t, f)| (t, f.clone())).unzip();
        FidelitySeries::new(times, fbar)
    }
}

/// Diagonalized sectors of one Hamiltonian, keyed by excitation number.
#[derive(Debug, Clone)]
pub struct SectorSet {
    spec: SystemSpec,
    caches: BTreeMap<usize, SpectralCache>,
}

impl SectorSet {
    pub fn new(spec: &SystemSpec, sectors: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut caches = BTreeMap::new();
        for k in sectors {
            if let std::collections::btree_map::Entry::Vacant(e) = caches.entry(k) {
                e.insert(sector_cache(spec, k)?);
            }
        }
        Ok(SectorSet {
            spec: spec.clone(),
            caches,
        })
    }

    /// Sectors `0..=M`, enough for a channel starting in the vacuum.
    pub fn for_transfer(spec: &SystemSpec) -> Result<Self> {
        SectorSet::new(spec, 0..=spec.n_users())
    }

    pub fn spec(&self) -> &SystemSpec {
        &self.spec
    }

    pub fn cache(&self, k: usize) -> Result<&SpectralCache> {
        self.caches
            .get(&k)
            .ok_or_else(|| Error::validation(format!("sector {k} was not diagonalized")))
    }
}

/// One sender seed: the sector and the occupation-basis initial vector.
#[derive(Debug, Clone)]
pub struct Seed {
    pub sector: usize,
    pub entries: Vec<(usize, f64)>,
}

/// Seeds `|i> (x) |channel> (x) |0_R>` for all `2^M` sender bitstrings.
#[derive(Debug, Clone)]
pub struct SenderSeeds {
    pub seeds: Vec<Seed>,
}

impl SenderSeeds {
    pub fn vacuum(set: &SectorSet) -> Result<Self> {
        SenderSeeds::with_channel(set, &[(0, 1.0)])
    }

    /// `channel` lists (bitstring over the full layout with only chain bits
    /// set, amplitude); all entries must share one excitation number.
    pub fn with_channel(set: &SectorSet, channel: &[(u64, f64)]) -> Result<Self> {
        let layout = set.spec.layout();
        let chain = layout.chain_mask();
        let n_c = channel.first().map_or(0, |c| c.0.count_ones() as usize);
        if channel
            .iter()
            .any(|&(s, _)| s & !chain != 0 || s.count_ones() as usize != n_c)
        {
            return Err(Error::validation(
                "channel state must live on chain sites with a fixed excitation number",
            ));
        }
        let m = layout.n_users();
        let mut seeds = Vec::with_capacity(1 << m);
        for i in 0..1u64 << m {
            let sector = i.count_ones() as usize + n_c;
            let cache = set.cache(sector)?;
            let entries = channel
                .iter()
                .map(|&(c, amp)| {
                    let idx = cache.basis.index_of(i | c).expect("seed state inside its sector");
                    (idx, amp)
                })
                .collect();
            seeds.push(Seed { sector, entries });
        }
        Ok(SenderSeeds { seeds })
    }

    fn coefficients(&self, set: &SectorSet) -> Result<Vec<DVector<f64>>> {
        self.seeds
            .iter()
            .map(|s| {
                let cache = set.cache(s.sector)?;
                let mut psi0 = DVector::zeros(cache.dim());
                for &(idx, a) in &s.entries {
                    psi0[idx] += a;
                }
                Ok(cache.coefficients(&psi0))
            })
            .collect()
    }
}

/// Reduced receiver blocks `<a|Gamma^b_{ij}|b>` at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaElements {
    pub time: f64,
    n_users: usize,
    data: Vec<Complex64>,
}

impl GammaElements {
    pub(crate) fn zeros(time: f64, n_users: usize) -> Self {
        let s = 1usize << n_users;
        GammaElements {
            time,
            n_users,
            data: vec![Complex64::new(0.0, 0.0); n_users * s * s * 4],
        }
    }

    fn offset(&self, beta: usize, i: usize, j: usize, a: usize, b: usize) -> usize {
        let s = 1usize << self.n_users;
        (((beta * s + i) * s + j) * 2 + a) * 2 + b
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn get(&self, beta: usize, i: usize, j: usize, a: usize, b: usize) -> Complex64 {
        self.data[self.offset(beta, i, j, a, b)]
    }

    pub(crate) fn set(&mut self, beta: usize, i: usize, j: usize, a: usize, b: usize, v: Complex64) {
        let o = self.offset(beta, i, j, a, b);
        self.data[o] = v;
    }

    /// Fill in the conjugate mirror `<b|Gamma_ji|a> = <a|Gamma_ij|b>^*` of the
    /// listed entries.
    pub(crate) fn mirror(&mut self, entries: &[(usize, usize, usize, usize, usize)]) {
        for &(beta, i, j, a, b) in entries {
            let v = self.get(beta, i, j, a, b);
            self.set(beta, j, i, b, a, v.conj());
        }
    }

    /// `Gamma^beta_{ij}` as a 2x2 matrix.
    pub fn block(&self, beta: usize, i: usize, j: usize) -> nalgebra::Matrix2<Complex64> {
        nalgebra::Matrix2::new(
            self.get(beta, i, j, 0, 0),
            self.get(beta, i, j, 0, 1),
            self.get(beta, i, j, 1, 0),
            self.get(beta, i, j, 1, 1),
        )
    }

    /// Receiver state `rho_{R_beta} = sum_ij a_i a_j^* Gamma^beta_ij`.
    pub fn receiver_state(&self, beta: usize, amplitudes: &[Complex64]) -> nalgebra::Matrix2<Complex64> {
        let mut rho = nalgebra::Matrix2::zeros();
        for (i, ai) in amplitudes.iter().enumerate() {
            for (j, aj) in amplitudes.iter().enumerate() {
                rho += self.block(beta, i, j) * (ai * aj.conj());
            }
        }
        rho
    }

    /// Pointwise fidelity matrix for one input.
    pub fn pointwise(&self, input: &InputState) -> Result<FidelityMatrix> {
        let m = self.n_users;
        if input.n_users() != m {
            return Err(Error::validation(format!(
                "input has {} senders, system has {m}",
                input.n_users()
            )));
        }
        let amps = input.amplitudes();
        let rhos: Vec<_> = (0..m).map(|b| self.receiver_state(b, &amps)).collect();
        Ok(DMatrix::from_fn(m, m, |alpha, beta| {
            let q = input.qubit(alpha);
            let rho = &rhos[beta];
            let mut f = Complex64::new(0.0, 0.0);
            for a in 0..2 {
                for b in 0..2 {
                    f += q[a].conj() * rho[(a, b)] * q[b];
                }
            }
            f.re
        }))
    }

    /// Closed-form Bloch-sphere average for any number of users.
    pub fn average(&self) -> FidelityMatrix {
        let m = self.n_users;
        let s = 1usize << m;
        let norm = 1.0 / (3.0 * s as f64);
        DMatrix::from_fn(m, m, |alpha, beta| {
            let mut acc = 0.0;
            for i in 0..s {
                let g = self.get(beta, i, i, 0, 0).re;
                if i >> alpha & 1 == 0 {
                    acc += g;
                } else {
                    acc -= g;
                }
                let ip = i ^ 1 << alpha;
                let (a, b) = (i >> alpha & 1, ip >> alpha & 1);
                acc += self.get(beta, i, ip, a, b).re;
            }
            0.5 + norm * acc
        })
    }

    /// The two-user average written out term by term; used to cross-check
    /// [`GammaElements::average`]. Bitstring `i1 i2` is index `i1 + 2 i2`.
    pub fn average_two_users(&self) -> Result<FidelityMatrix> {
        if self.n_users != 2 {
            return Err(Error::validation("two-user form needs exactly two users"));
        }
        let idx = |label: &str| -> usize {
            let b = label.as_bytes();
            (b[0] - b'0') as usize | ((b[1] - b'0') as usize) << 1
        };
        let g = |beta: usize, i: &str, j: &str, a: usize, b: usize| self.get(beta, idx(i), idx(j), a, b);
        let mut out = DMatrix::zeros(2, 2);
        for beta in 0..2 {
            let f1 = g(beta, "00", "00", 0, 0) + g(beta, "01", "01", 0, 0)
                - g(beta, "10", "10", 0, 0)
                - g(beta, "11", "11", 0, 0)
                + g(beta, "00", "10", 0, 1)
                + g(beta, "01", "11", 0, 1)
                + g(beta, "10", "00", 1, 0)
                + g(beta, "11", "01", 1, 0);
            let f2 = g(beta, "00", "00", 0, 0) + g(beta, "10", "10", 0, 0)
                - g(beta, "01", "01", 0, 0)
                - g(beta, "11", "11", 0, 0)
                + g(beta, "00", "01", 0, 1)
                + g(beta, "10", "11", 0, 1)
                + g(beta, "01", "00", 1, 0)
                + g(beta, "11", "10", 1, 0);
            out[(0, beta)] = 0.5 + f1.re / 12.0;
            out[(1, beta)] = 0.5 + f2.re / 12.0;
        }
        Ok(out)
    }
}

/// Key of a partial-trace table: (left sector, right sector, receiver, a, b).
type PairKey = (usize, usize, usize, usize, usize);

/// Index pairs `(p, q)` with `left[p] = (a at R_beta, e)` and
/// `right[q] = (b at R_beta, e)` for a common environment `e`.
pub(crate) fn pair_table(left: &SectorBasis, right: &SectorBasis, bit: usize, a: u64, b: u64) -> Vec<(u32, u32)> {
    let mask = 1u64 << bit;
    left.states()
        .iter()
        .enumerate()
        .filter(|(_, &s)| (s >> bit & 1) == a)
        .filter_map(|(p, &s)| {
            let t = (s & !mask) | (b << bit);
            right.index_of(t).map(|q| (p as u32, q as u32))
        })
        .collect()
}

/// Which Gamma entries to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GammaSet {
    /// Only the entries the closed-form average reads.
    Average,
    All,
}

/// `(beta, i, j, a, b)` tuples of a gamma set, skipping entries that vanish
/// by excitation counting.
pub fn gamma_entries(n_users: usize, which: GammaSet) -> Vec<(usize, usize, usize, usize, usize)> {
    let s = 1usize << n_users;
    let mut out = Vec::new();
    for beta in 0..n_users {
        match which {
            GammaSet::Average => {
                for i in 0..s {
                    out.push((beta, i, i, 0, 0));
                }
                for alpha in 0..n_users {
                    for i in 0..s {
                        if i >> alpha & 1 == 0 {
                            out.push((beta, i, i | 1 << alpha, 0, 1));
                        }
                    }
                }
            }
            GammaSet::All => {
                for i in 0..s {
                    for j in 0..s {
                        for a in 0..2 {
                            for b in 0..2 {
                                let ki = i.count_ones() as isize - a as isize;
                                let kj = j.count_ones() as isize - b as isize;
                                if ki == kj {
                                    out.push((beta, i, j, a, b));
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Partial-trace tables for every entry of a gamma set under given seeds.
#[derive(Debug, Clone, Default)]
pub struct PairTables {
    tables: HashMap<PairKey, Vec<(u32, u32)>>,
}

impl PairTables {
    pub fn build(
        set: &SectorSet,
        seeds: &SenderSeeds,
        entries: &[(usize, usize, usize, usize, usize)],
    ) -> Result<Self> {
        let mut tables = HashMap::new();
        for &(beta, i, j, a, b) in entries {
            let (kl, kr) = (seeds.seeds[i].sector, seeds.seeds[j].sector);
            let key = (kl, kr, beta, a, b);
            if let std::collections::hash_map::Entry::Vacant(e) = tables.entry(key) {
                let bit = set.spec.layout().receiver(beta);
                e.insert(pair_table(
                    &set.cache(kl)?.basis,
                    &set.cache(kr)?.basis,
                    bit,
                    a as u64,
                    b as u64,
                ));
            }
        }
        Ok(PairTables { tables })
    }

    pub fn get(&self, key: PairKey) -> &[(u32, u32)] {
        self.tables.get(&key).map_or(&[], |v| v.as_slice())
    }
}

/// Largest number of time points evolved in one batch.
const TIME_CHUNK: usize = 128;

/// Unitary transfer model: one diagonalized Hamiltonian plus the sender seeds.
#[derive(Debug, Clone)]
pub struct TransferModel {
    set: Arc<SectorSet>,
    seeds: SenderSeeds,
    coeffs: Vec<DVector<f64>>,
    average_entries: Vec<(usize, usize, usize, usize, usize)>,
    all_entries: Vec<(usize, usize, usize, usize, usize)>,
    tables: PairTables,
}

impl TransferModel {
    /// Channel initialized in the vacuum.
    pub fn new(spec: &SystemSpec) -> Result<Self> {
        let set = Arc::new(SectorSet::for_transfer(spec)?);
        let seeds = SenderSeeds::vacuum(&set)?;
        TransferModel::from_parts(set, seeds)
    }

    pub fn from_parts(set: Arc<SectorSet>, seeds: SenderSeeds) -> Result<Self> {
        let m = set.spec.n_users();
        let average_entries = gamma_entries(m, GammaSet::Average);
        let all_entries = gamma_entries(m, GammaSet::All);
        let tables = PairTables::build(&set, &seeds, &all_entries)?;
        let coeffs = seeds.coefficients(&set)?;
        Ok(TransferModel {
            set,
            seeds,
            coeffs,
            average_entries,
            all_entries,
            tables,
        })
    }

    pub fn spec(&self) -> &SystemSpec {
        self.set.spec()
    }

    fn evolve_seeds(&self, times: &[f64]) -> Result<Vec<EvolvedBatch>> {
        self.seeds
            .seeds
            .iter()
            .zip(&self.coeffs)
            .map(|(s, c)| Ok(self.set.cache(s.sector)?.evolve_batch(c, times)))
            .collect()
    }

    fn gamma_chunk(&self, times: &[f64], which: GammaSet) -> Result<Vec<GammaElements>> {
        let m = self.spec().n_users();
        let batches = self.evolve_seeds(times)?;
        let entries = match which {
            GammaSet::Average => &self.average_entries,
            GammaSet::All => &self.all_entries,
        };
        let mut out: Vec<GammaElements> = times.iter().map(|&t| GammaElements::zeros(t, m)).collect();
        for &(beta, i, j, a, b) in entries {
            let key = (self.seeds.seeds[i].sector, self.seeds.seeds[j].sector, beta, a, b);
            let pairs = self.tables.get(key);
            let (bi, bj) = (&batches[i], &batches[j]);
            for (col, g) in out.iter_mut().enumerate() {
                let (ri, ii) = (bi.re.column(col), bi.im.column(col));
                let (rj, ij) = (bj.re.column(col), bj.im.column(col));
                let mut re = 0.0;
                let mut im = 0.0;
                for &(p, q) in pairs {
                    let (p, q) = (p as usize, q as usize);
                    // psi_i[p] * conj(psi_j[q])
                    re += ri[p] * rj[q] + ii[p] * ij[q];
                    im += ii[p] * rj[q] - ri[p] * ij[q];
                }
                g.set(beta, i, j, a, b, Complex64::new(re, im));
            }
        }
        if which == GammaSet::Average {
            for g in &mut out {
                g.mirror(entries);
            }
        }
        Ok(out)
    }

    fn gamma_series_with(&self, times: &[f64], which: GammaSet) -> Result<Vec<GammaElements>> {
        let mut out = Vec::with_capacity(times.len());
        for chunk in times.chunks(TIME_CHUNK) {
            out.extend(self.gamma_chunk(chunk, which)?);
        }
        Ok(out)
    }

    /// All Gamma elements at each time.
    pub fn gamma_series(&self, times: &[f64]) -> Result<Vec<GammaElements>> {
        self.gamma_series_with(times, GammaSet::All)
    }

    /// Averaged fidelity matrices at each time.
    pub fn average_series(&self, times: &[f64]) -> Result<Vec<FidelityMatrix>> {
        Ok(self
            .gamma_series_with(times, GammaSet::Average)?
            .iter()
            .map(|g| g.average())
            .collect())
    }

    pub fn series(&self, times: &[f64]) -> Result<FidelitySeries> {
        Ok(FidelitySeries::new(times.to_vec(), self.average_series(times)?))
    }
}

pub fn gamma_elements(spec: &SystemSpec, t: f64) -> Result<GammaElements> {
    Ok(TransferModel::new(spec)?.gamma_series(&[t])?.remove(0))
}

pub fn average_fidelity(spec: &SystemSpec, t: f64) -> Result<FidelityMatrix> {
    Ok(TransferModel::new(spec)?.average_series(&[t])?.remove(0))
}

pub fn pointwise_fidelity(spec: &SystemSpec, input: &InputState, t: f64) -> Result<FidelityMatrix> {
    gamma_elements(spec, t)?.pointwise(input)
}

/// Monte Carlo estimate of the averaged fidelity and its standard error.
#[derive(Debug, Clone, PartialEq)]
pub struct HaarEstimate {
    pub mean: FidelityMatrix,
    pub stderr: FidelityMatrix,
    pub n_samples: usize,
}

/// Samples per independent random stream.
const MC_CHUNK: usize = 1024;

/// Uniform Bloch-sphere input for `m` senders.
pub fn haar_input<R: Rng>(rng: &mut R, m: usize) -> InputState {
    let angles = (0..m)
        .map(|_| {
            let u: f64 = rng.random();
            let v: f64 = rng.random();
            ((1.0 - 2.0 * u).clamp(-1.0, 1.0).acos(), std::f64::consts::TAU * v)
        })
        .collect();
    InputState { angles }
}

pub fn haar_mc_average(spec: &SystemSpec, t: f64, n_samples: usize, seed: u64) -> Result<HaarEstimate> {
    if n_samples == 0 {
        return Err(Error::validation("n_samples must be at least 1"));
    }
    let gamma = gamma_elements(spec, t)?;
    let m = spec.n_users();
    let n_chunks = n_samples.div_ceil(MC_CHUNK);
    let partial: Vec<Result<(DMatrix<f64>, DMatrix<f64>)>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = realization_rng(seed, c as u64);
            let count = MC_CHUNK.min(n_samples - c * MC_CHUNK);
            let mut sum = DMatrix::zeros(m, m);
            let mut sq = DMatrix::zeros(m, m);
            for _ in 0..count {
                let f = gamma.pointwise(&haar_input(&mut rng, m))?;
                sq += f.component_mul(&f);
                sum += f;
            }
            Ok((sum, sq))
        })
        .collect();
    let mut sum = DMatrix::zeros(m, m);
    let mut sq = DMatrix::zeros(m, m);
    for p in partial {
        let (s, q) = p?;
        sum += s;
        sq += q;
    }
    let n = n_samples as f64;
    let mean = &sum / n;
    let stderr = DMatrix::from_fn(m, m, |a, b| {
        if n_samples < 2 {
            return 0.0;
        }
        let var = (sq[(a, b)] - n * mean[(a, b)].powi(2)) / (n - 1.0);
        (var.max(0.0) / n).sqrt()
    });
    Ok(HaarEstimate {
        mean,
        stderr,
        n_samples,
    })
}
