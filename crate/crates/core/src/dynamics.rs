//! Time evolution: exact unitary propagation from a cached spectral
//! decomposition, and Markovian z-dephasing.
//!
//! Two dephasing integrators are provided. [`lindblad_evolve`] is a plain
//! fixed-step RK4 on the density matrix in the occupation basis.
//! [`DyadPropagator`] evolves one inter-sector block in the interaction
//! picture of the Hamiltonian (integrating-factor RK4), so the coherent part
//! is exact and the step size is set by the dephasing rate alone.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::hamiltonian::{build_sector_hamiltonian, SectorHamiltonian, SystemSpec};
use crate::lattice::{enumerate_sector, SectorBasis};

#[derive(Debug, Clone)]
pub struct SpectralCache {
    pub basis: SectorBasis,
    /// Ascending.
    pub eigenvalues: DVector<f64>,
    /// Orthogonal; column `k` is the eigenvector of `eigenvalues[k]`.
    pub eigenvectors: DMatrix<f64>,
}

/// Eigen-decomposition of a real symmetric matrix with ascending eigenvalues.
pub fn decompose_symmetric(m: &DMatrix<f64>, label: &str) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let dim = m.nrows();
    if dim == 0 {
        return Ok((DVector::zeros(0), DMatrix::zeros(0, 0)));
    }
    let eig = m
        .clone()
        .try_symmetric_eigen(f64::EPSILON, 10_000)
        .ok_or_else(|| Error::numerical(format!("eigensolver did not converge for {label}")))?;
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(dim, order.iter().map(|&k| eig.eigenvalues[k]));
    let mut vectors = DMatrix::zeros(dim, dim);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok((values, vectors))
}

pub fn spectral_decompose(h: &SectorHamiltonian) -> Result<SpectralCache> {
    let label = format!("the {}-excitation sector ({} states)", h.basis.excitations(), h.dim());
    let (eigenvalues, eigenvectors) = decompose_symmetric(&h.matrix, &label)?;
    Ok(SpectralCache {
        basis: h.basis.clone(),
        eigenvalues,
        eigenvectors,
    })
}

/// Build and diagonalize sector `k` of `spec`.
pub fn sector_cache(spec: &SystemSpec, k: usize) -> Result<SpectralCache> {
    let basis = enumerate_sector(spec.layout(), k)?;
    spectral_decompose(&build_sector_hamiltonian(spec, &basis)?)
}

/// Real and imaginary parts of a batch of evolved states, one column per time.
#[derive(Debug, Clone)]
pub struct EvolvedBatch {
    pub re: DMatrix<f64>,
    pub im: DMatrix<f64>,
}

impl EvolvedBatch {
    pub fn amplitude(&self, row: usize, col: usize) -> Complex64 {
        Complex64::new(self.re[(row, col)], self.im[(row, col)])
    }
}

impl SpectralCache {
    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    /// `V, diag(E), V^T` reassembled; used by tests.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let v = &self.eigenvectors;
        v * DMatrix::from_diagonal(&self.eigenvalues) * v.transpose()
    }

    pub fn evolve_state(&self, psi0: &DVector<Complex64>, t: f64) -> Result<DVector<Complex64>> {
        if psi0.len() != self.dim() {
            return Err(Error::validation(format!(
                "state has dimension {}, sector has {}",
                psi0.len(),
                self.dim()
            )));
        }
        let v = self.eigenvectors.map(|x| Complex64::new(x, 0.0));
        let mut c = v.transpose() * psi0;
        for (k, ck) in c.iter_mut().enumerate() {
            *ck *= Complex64::from_polar(1.0, -self.eigenvalues[k] * t);
        }
        Ok(v * c)
    }

    /// Eigenbasis coefficients `V^T psi0` of a real initial state.
    pub fn coefficients(&self, psi0: &DVector<f64>) -> DVector<f64> {
        self.eigenvectors.tr_mul(psi0)
    }

    /// Coefficients of the occupation basis state at `index`.
    pub fn basis_coefficients(&self, index: usize) -> DVector<f64> {
        self.eigenvectors.row(index).transpose()
    }

    /// Evolve the state with eigenbasis coefficients `coeffs` to every time in
    /// `times` at once (two real matrix products).
    pub fn evolve_batch(&self, coeffs: &DVector<f64>, times: &[f64]) -> EvolvedBatch {
        let d = self.eigenvalues.len();
        let nt = times.len();
        let mut cos = DMatrix::<f64>::zeros(d, nt);
        let mut sin = DMatrix::<f64>::zeros(d, nt);
        for (col, &t) in times.iter().enumerate() {
            for k in 0..d {
                let (s, c) = (self.eigenvalues[k] * t).sin_cos();
                cos[(k, col)] = c * coeffs[k];
                sin[(k, col)] = -s * coeffs[k];
            }
        }
        EvolvedBatch {
            re: &self.eigenvectors * cos,
            im: &self.eigenvectors * sin,
        }
    }
}

/// Per-element dephasing rates `-2 gamma * hamming(a, b)` between two
/// occupation bases.
pub fn dephasing_rates(gamma: f64, rows: &[u64], cols: &[u64]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |r, c| {
        -2.0 * gamma * (rows[r] ^ cols[c]).count_ones() as f64
    })
}

/// Density matrix on the direct sum of several excitation sectors.
#[derive(Debug, Clone)]
pub struct DensityBlockState {
    pub sectors: Vec<usize>,
    /// Direct-sum basis: sector-major, ascending within each sector.
    pub states: Vec<u64>,
    pub rho: DMatrix<Complex64>,
    pub time: f64,
}

impl DensityBlockState {
    /// Basis for `sectors` on the layout of `spec`, in direct-sum order.
    pub fn basis_states(spec: &SystemSpec, sectors: &[usize]) -> Result<Vec<u64>> {
        let mut states = Vec::new();
        for &k in sectors {
            states.extend_from_slice(enumerate_sector(spec.layout(), k)?.states());
        }
        Ok(states)
    }

    /// Pure state `|psi><psi|` given as (bitstring, amplitude) pairs.
    pub fn pure(spec: &SystemSpec, sectors: &[usize], psi: &[(u64, Complex64)]) -> Result<Self> {
        let states = Self::basis_states(spec, sectors)?;
        let mut v = DVector::<Complex64>::zeros(states.len());
        for &(s, a) in psi {
            let idx = states
                .iter()
                .position(|&x| x == s)
                .ok_or_else(|| Error::validation(format!("state {s:#b} outside the chosen sectors")))?;
            v[idx] += a;
        }
        let rho = &v * v.adjoint();
        Ok(DensityBlockState {
            sectors: sectors.to_vec(),
            states,
            rho,
            time: 0.0,
        })
    }

    pub fn trace(&self) -> Complex64 {
        self.rho.trace()
    }

    pub fn index_of(&self, state: u64) -> Option<usize> {
        self.states.iter().position(|&x| x == state)
    }
}

/// Sparse real symmetric operator as (row, col, value) triplets.
struct Triplets {
    entries: Vec<(usize, usize, f64)>,
}

impl Triplets {
    fn direct_sum(spec: &SystemSpec, sectors: &[usize]) -> Result<(Self, f64)> {
        let mut entries = Vec::new();
        let mut offset = 0;
        let mut max_abs: f64 = 0.0;
        for &k in sectors {
            let basis = enumerate_sector(spec.layout(), k)?;
            let h = build_sector_hamiltonian(spec, &basis)?;
            for c in 0..h.dim() {
                for r in 0..h.dim() {
                    let v = h.matrix[(r, c)];
                    if v != 0.0 {
                        entries.push((offset + r, offset + c, v));
                        max_abs = max_abs.max(v.abs());
                    }
                }
            }
            offset += h.dim();
        }
        Ok((Triplets { entries }, max_abs))
    }

    /// `-i (H X - X H) + D o X`
    fn lindblad_rhs(&self, x: &DMatrix<Complex64>, rates: &DMatrix<f64>) -> DMatrix<Complex64> {
        let n = x.nrows();
        let mut out = DMatrix::<Complex64>::zeros(n, n);
        let mi = Complex64::new(0.0, -1.0);
        for &(r, c, v) in &self.entries {
            // (H X)[r, :] += v X[c, :]   and   (X H)[:, c] += v X[:, r]
            for j in 0..n {
                out[(r, j)] += mi * v * x[(c, j)];
                out[(j, c)] -= mi * v * x[(j, r)];
            }
        }
        for j in 0..n {
            for i in 0..n {
                out[(i, j)] += rates[(i, j)] * x[(i, j)];
            }
        }
        out
    }
}

/// RK4 step size used by [`lindblad_evolve`].
pub fn rk4_step(max_element: f64) -> f64 {
    0.01f64.min(0.1 / max_element.max(1.0))
}

/// Integrate the dephasing master equation with fixed-step RK4 in the
/// occupation basis, reporting the state at every time of `t_grid`.
pub fn lindblad_evolve(
    spec: &SystemSpec,
    gamma: f64,
    rho0: &DensityBlockState,
    t_grid: &[f64],
) -> Result<Vec<DensityBlockState>> {
    lindblad_evolve_with_step(spec, gamma, rho0, t_grid, None)
}

/// [`lindblad_evolve`] with an optional tighter cap on the RK4 step.
pub fn lindblad_evolve_with_step(
    spec: &SystemSpec,
    gamma: f64,
    rho0: &DensityBlockState,
    t_grid: &[f64],
    max_step: Option<f64>,
) -> Result<Vec<DensityBlockState>> {
    if gamma < 0.0 || !gamma.is_finite() {
        return Err(Error::validation(format!(
            "dephasing rate {gamma} must be non-negative"
        )));
    }
    if t_grid.windows(2).any(|w| w[1] < w[0]) || t_grid.first().is_some_and(|&t| t < rho0.time) {
        return Err(Error::validation("time grid must be ascending from the initial time"));
    }
    let expected = DensityBlockState::basis_states(spec, &rho0.sectors)?;
    if expected != rho0.states || rho0.rho.nrows() != expected.len() {
        return Err(Error::validation("initial state basis does not match its sectors"));
    }
    let (h, max_abs) = Triplets::direct_sum(spec, &rho0.sectors)?;
    let rates = dephasing_rates(gamma, &rho0.states, &rho0.states);
    let h_max = max_step.map_or(rk4_step(max_abs), |h| h.min(rk4_step(max_abs)));
    let trace0 = rho0.trace();

    let mut rho = rho0.rho.clone();
    let mut t = rho0.time;
    let mut out = Vec::with_capacity(t_grid.len());
    for &target in t_grid {
        let span = target - t;
        if span > 0.0 {
            let steps = (span / h_max).ceil() as usize;
            let step = span / steps as f64;
            for _ in 0..steps {
                let k1 = h.lindblad_rhs(&rho, &rates);
                let k2 = h.lindblad_rhs(&(&rho + &k1 * Complex64::from(step / 2.0)), &rates);
                let k3 = h.lindblad_rhs(&(&rho + &k2 * Complex64::from(step / 2.0)), &rates);
                let k4 = h.lindblad_rhs(&(&rho + &k3 * Complex64::from(step)), &rates);
                rho += (k1 + (k2 + k3) * Complex64::from(2.0) + k4) * Complex64::from(step / 6.0);
            }
        }
        t = target;
        let drift = (rho.trace() - trace0).norm();
        if drift > 1e-6 {
            return Err(Error::numerical(format!(
                "trace drifted by {drift:.3e} at t = {t}; reduce the integration step"
            )));
        }
        out.push(DensityBlockState {
            sectors: rho0.sectors.clone(),
            states: rho0.states.clone(),
            rho: rho.clone(),
            time: t,
        });
    }
    Ok(out)
}

/// Complex matrix kept as separate real and imaginary parts so the basis
/// changes are pure real matrix products.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitMatrix {
    pub re: DMatrix<f64>,
    pub im: DMatrix<f64>,
}

impl SplitMatrix {
    pub fn zeros(r: usize, c: usize) -> Self {
        SplitMatrix {
            re: DMatrix::zeros(r, c),
            im: DMatrix::zeros(r, c),
        }
    }

    pub fn from_complex(m: &DMatrix<Complex64>) -> Self {
        SplitMatrix {
            re: m.map(|z| z.re),
            im: m.map(|z| z.im),
        }
    }

    pub fn to_complex(&self) -> DMatrix<Complex64> {
        self.re.zip_map(&self.im, Complex64::new)
    }

    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        Complex64::new(self.re[(r, c)], self.im[(r, c)])
    }

    fn axpy(&self, a: f64, other: &SplitMatrix) -> SplitMatrix {
        SplitMatrix {
            re: &self.re + &other.re * a,
            im: &self.im + &other.im * a,
        }
    }

    /// Elementwise product with the phase table `(cos, sin)`.
    fn rotate(&self, phase: &(DMatrix<f64>, DMatrix<f64>)) -> SplitMatrix {
        let (c, s) = phase;
        SplitMatrix {
            re: self.re.component_mul(c) - self.im.component_mul(s),
            im: self.re.component_mul(s) + self.im.component_mul(c),
        }
    }

    fn left_mul(&self, m: &DMatrix<f64>) -> SplitMatrix {
        SplitMatrix {
            re: m * &self.re,
            im: m * &self.im,
        }
    }

    fn right_mul(&self, m: &DMatrix<f64>) -> SplitMatrix {
        SplitMatrix {
            re: &self.re * m,
            im: &self.im * m,
        }
    }

    fn scale_elements(&mut self, d: &DMatrix<f64>) {
        self.re.component_mul_assign(d);
        self.im.component_mul_assign(d);
    }
}

/// Dephasing evolution of one `(k, k')` block `X` of the density matrix,
/// `X' = -i (H_k X - X H_k') + D o X`.
///
/// The state is held in the eigenbasis pair and in the interaction picture
/// of the coherent part, which is applied exactly; the dissipator is
/// integrated with RK4. With `gamma = 0` the evolution is exact.
pub struct DyadPropagator<'a> {
    left: &'a SpectralCache,
    right: &'a SpectralCache,
    rates: DMatrix<f64>,
    gamma: f64,
    max_step: f64,
}

/// Default cap on the interaction-picture step.
pub const DEFAULT_DYAD_STEP: f64 = 0.25;

impl<'a> DyadPropagator<'a> {
    pub fn new(left: &'a SpectralCache, right: &'a SpectralCache, gamma: f64) -> Result<Self> {
        if gamma < 0.0 || !gamma.is_finite() {
            return Err(Error::validation(format!(
                "dephasing rate {gamma} must be non-negative"
            )));
        }
        let rates = dephasing_rates(gamma, left.basis.states(), right.basis.states());
        let sites = left.basis.layout().total_sites() as f64;
        let max_step = DEFAULT_DYAD_STEP.min(Self::stable_step(gamma, sites));
        Ok(DyadPropagator {
            left,
            right,
            rates,
            gamma,
            max_step,
        })
    }

    /// Step cap from the dissipator's spectral radius, at most `2 gamma L`.
    fn stable_step(gamma: f64, sites: f64) -> f64 {
        0.1 / (2.0 * gamma * sites).max(1e-300)
    }

    /// Override the step cap; it is still kept below the stability bound.
    pub fn with_max_step(mut self, step: f64) -> Self {
        let sites = self.left.basis.layout().total_sites() as f64;
        self.max_step = step.min(Self::stable_step(self.gamma, sites));
        self
    }

    pub fn max_step(&self) -> f64 {
        self.max_step
    }

    /// Occupation-basis block to the eigenbasis pair.
    pub fn to_eigen(&self, x: &SplitMatrix) -> SplitMatrix {
        x.left_mul(&self.left.eigenvectors.transpose())
            .right_mul(&self.right.eigenvectors)
    }

    /// Eigenbasis block back to the occupation basis, `V_l Y V_r^T`.
    pub fn to_occupation(&self, y: &SplitMatrix) -> SplitMatrix {
        y.left_mul(&self.left.eigenvectors)
            .right_mul(&self.right.eigenvectors.transpose())
    }

    /// `exp(-i (E_m - E'_n) t)` as (cos, sin) tables.
    fn phases(&self, t: f64) -> (DMatrix<f64>, DMatrix<f64>) {
        let el = &self.left.eigenvalues;
        let er = &self.right.eigenvalues;
        let mut c = DMatrix::zeros(el.len(), er.len());
        let mut s = DMatrix::zeros(el.len(), er.len());
        for n in 0..er.len() {
            for m in 0..el.len() {
                let (sn, cs) = (-(el[m] - er[n]) * t).sin_cos();
                c[(m, n)] = cs;
                s[(m, n)] = sn;
            }
        }
        (c, s)
    }

    /// Dissipator in the eigenbasis pair, `V_l^T (D o (V_l Y V_r^T)) V_r`.
    fn dissipator(&self, y: &SplitMatrix) -> SplitMatrix {
        let vl = &self.left.eigenvectors;
        let vr = &self.right.eigenvectors;
        let mut x = y.left_mul(vl).right_mul(&vr.transpose());
        x.scale_elements(&self.rates);
        x.left_mul(&vl.transpose()).right_mul(vr)
    }

    /// One integrating-factor RK4 step of length `h` on the eigenbasis block.
    fn step(
        &self,
        y: &SplitMatrix,
        h: f64,
        half: &(DMatrix<f64>, DMatrix<f64>),
        full: &(DMatrix<f64>, DMatrix<f64>),
    ) -> SplitMatrix {
        let k1 = self.dissipator(y);
        let ya = y.axpy(h / 2.0, &k1).rotate(half);
        let k2 = self.dissipator(&ya);
        let y_half = y.rotate(half);
        let yb = y_half.axpy(h / 2.0, &k2);
        let k3 = self.dissipator(&yb);
        let yc = y.rotate(full).axpy(h, &k3.rotate(half));
        let k4 = self.dissipator(&yc);

        let mut acc = k2.axpy(1.0, &k3).rotate(half);
        acc.re *= 2.0;
        acc.im *= 2.0;
        let acc = acc.axpy(1.0, &k1.rotate(full)).axpy(1.0, &k4);
        y.rotate(full).axpy(h / 6.0, &acc)
    }

    /// Advance the eigenbasis block `y` by `span >= 0`.
    pub fn advance(&self, y: &SplitMatrix, span: f64) -> SplitMatrix {
        if span <= 0.0 {
            return y.clone();
        }
        if self.gamma == 0.0 {
            return y.rotate(&self.phases(span));
        }
        let steps = (span / self.max_step - 1e-9).ceil().max(1.0) as usize;
        let h = span / steps as f64;
        let half = self.phases(h / 2.0);
        let full = self.phases(h);
        let mut y = y.clone();
        for _ in 0..steps {
            y = self.step(&y, h, &half, &full);
        }
        y
    }

    /// Evolve the occupation-basis block `x0` from time 0 and return the
    /// eigenbasis block `Y(t)` at each (ascending) time.
    pub fn evolve(&self, x0: &SplitMatrix, times: &[f64]) -> Result<Vec<SplitMatrix>> {
        if times.windows(2).any(|w| w[1] < w[0]) || times.first().is_some_and(|&t| t < 0.0) {
            return Err(Error::validation("time grid must be ascending from 0"));
        }
        let mut y = self.to_eigen(x0);
        let mut t = 0.0;
        let mut out = Vec::with_capacity(times.len());
        for &target in times {
            y = self.advance(&y, target - t);
            t = target;
            out.push(y.clone());
        }
        Ok(out)
    }

    /// Element of the lab-frame eigenbasis block `y` in the occupation basis.
    pub fn occupation_element(&self, y: &SplitMatrix, p: usize, q: usize) -> Complex64 {
        let vl = &self.left.eigenvectors;
        let vr = &self.right.eigenvectors;
        let mut acc = Complex64::new(0.0, 0.0);
        for n in 0..vr.ncols() {
            let mut row = Complex64::new(0.0, 0.0);
            for m in 0..vl.ncols() {
                row += vl[(p, m)] * y.get(m, n);
            }
            acc += row * vr[(q, n)];
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn trivial_spectra() {
        let s = SystemSpec::with_params(3, 0.5, 1.5, &[0.2]).unwrap();
        let vac = sector_cache(&s, 0).unwrap();
        assert_eq!(vac.dim(), 1);
        let expected = 2.0 * 1.5 + 2.0 * 0.2;
        assert!((vac.eigenvalues[0] - expected).abs() < 1e-14);

        let m = DMatrix::from_row_slice(2, 2, &[0.0, 2.0, 2.0, 0.0]);
        let (e, _) = decompose_symmetric(&m, "toy").unwrap();
        assert!((e[0] + 2.0).abs() < 1e-14 && (e[1] - 2.0).abs() < 1e-14);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]
        #[test]
        fn reconstruction_of_random_symmetric(seed in 0u64..1000) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n = 50;
            let mut m = DMatrix::<f64>::zeros(n, n);
            for i in 0..n {
                for j in 0..=i {
                    let v: f64 = rng.random_range(-1.0..1.0);
                    m[(i, j)] = v;
                    m[(j, i)] = v;
                }
            }
            let (e, v) = decompose_symmetric(&m, "random").unwrap();
            prop_assert!(e.as_slice().windows(2).all(|w| w[0] <= w[1]));
            let recon = &v * DMatrix::from_diagonal(&e) * v.transpose();
            prop_assert!((&recon - &m).norm() / m.norm() < 1e-9);
            let ortho = v.transpose() * &v - DMatrix::identity(n, n);
            prop_assert!(ortho.abs().max() < 1e-10);
        }
    }

    #[test]
    fn evolve_identity_and_norm() {
        let s = SystemSpec::with_params(4, 0.3, 0.5, &[0.2, -0.1]).unwrap();
        let cache = sector_cache(&s, 2).unwrap();
        let d = cache.dim();
        let psi0 = DVector::from_fn(d, |i, _| Complex64::new((i as f64).cos(), (i as f64 * 0.7).sin()));
        let psi0 = &psi0 / Complex64::from(psi0.norm());
        let same = cache.evolve_state(&psi0, 0.0).unwrap();
        assert!((&same - &psi0).norm() < 1e-12);
        for t in [0.3, 7.0, 123.4] {
            let psi = cache.evolve_state(&psi0, t).unwrap();
            assert!((psi.norm() - 1.0).abs() < 1e-10);
        }
        assert!(cache.evolve_state(&DVector::zeros(d + 1), 1.0).is_err());
    }

    #[test]
    fn two_level_rabi() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 2.0, 2.0, 0.0]);
        let (e, v) = decompose_symmetric(&m, "toy").unwrap();
        let s = SystemSpec::with_params(2, 1.0, 0.0, &[0.0]).unwrap();
        let cache = SpectralCache {
            basis: enumerate_sector(s.layout(), 0).unwrap(),
            eigenvalues: e,
            eigenvectors: v,
        };
        // the basis field is only a label here; evolve through the raw API
        let coeffs = cache.coefficients(&DVector::from_vec(vec![1.0, 0.0]));
        let times: Vec<f64> = (0..20).map(|k| 0.17 * k as f64).collect();
        let batch = cache.evolve_batch(&coeffs, &times);
        for (col, &t) in times.iter().enumerate() {
            let p = batch.amplitude(1, col).norm_sqr();
            assert!((p - (2.0 * t).sin().powi(2)).abs() < 1e-12);
        }
    }

    #[test]
    fn batch_matches_single() {
        let s = SystemSpec::with_params(5, 0.2, 2.0, &[0.3, -0.4]).unwrap();
        let cache = sector_cache(&s, 1).unwrap();
        let idx = cache.basis.index_of(1).unwrap();
        let coeffs = cache.basis_coefficients(idx);
        let batch = cache.evolve_batch(&coeffs, &[0.0, 2.5, 40.0]);
        let mut psi0 = DVector::zeros(cache.dim());
        psi0[idx] = c(1.0);
        for (col, t) in [0.0, 2.5, 40.0].into_iter().enumerate() {
            let psi = cache.evolve_state(&psi0, t).unwrap();
            for r in 0..cache.dim() {
                assert!((psi[r] - batch.amplitude(r, col)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn single_qubit_dephasing_decay() {
        // all couplings and fields zero: each site dephases independently
        let s = SystemSpec::with_params(2, 0.0, 0.0, &[0.0])
            .unwrap()
            .with_per_bond(vec![0.0])
            .unwrap();
        let half = Complex64::from(std::f64::consts::FRAC_1_SQRT_2);
        let rho0 = DensityBlockState::pure(&s, &[0, 1], &[(0, half), (1, half)]).unwrap();
        let gamma = 0.3;
        let times = [0.5, 1.0, 2.0];
        let out = lindblad_evolve(&s, gamma, &rho0, &times).unwrap();
        let i0 = rho0.index_of(0).unwrap();
        let i1 = rho0.index_of(1).unwrap();
        for st in &out {
            let expected = 0.5 * (-2.0 * gamma * st.time).exp();
            assert!((st.rho[(i0, i1)].re - expected).abs() < 1e-9);
            assert!((st.rho[(i0, i0)].re - 0.5).abs() < 1e-12);
            assert!((st.rho[(i1, i1)].re - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn populations_frozen_without_hamiltonian() {
        let s = SystemSpec::with_params(2, 0.0, 0.0, &[0.0])
            .unwrap()
            .with_per_bond(vec![0.0])
            .unwrap();
        let a = Complex64::new(0.6, 0.0);
        let b = Complex64::new(0.0, 0.8);
        let rho0 = DensityBlockState::pure(&s, &[1], &[(2, a), (8, b)]).unwrap();
        let out = lindblad_evolve(&s, 0.2, &rho0, &[3.0]).unwrap();
        for i in 0..rho0.states.len() {
            assert!((out[0].rho[(i, i)] - rho0.rho[(i, i)]).norm() < 1e-12);
        }
    }

    #[test]
    fn closed_limit_matches_unitary() {
        let s = SystemSpec::with_params(3, 0.4, 0.7, &[0.3]).unwrap();
        let cache = sector_cache(&s, 1).unwrap();
        let idx = cache.basis.index_of(1).unwrap();
        let rho0 = DensityBlockState::pure(&s, &[1], &[(1, c(1.0))]).unwrap();
        let mut psi0 = DVector::zeros(cache.dim());
        psi0[idx] = c(1.0);
        let err = |st: &DensityBlockState| {
            let psi = cache.evolve_state(&psi0, st.time).unwrap();
            let exact = &psi * psi.adjoint();
            (&st.rho - exact).iter().map(|z| z.norm()).fold(0.0, f64::max)
        };
        for st in lindblad_evolve(&s, 0.0, &rho0, &[0.25, 0.5, 1.0]).unwrap() {
            assert!(err(&st) < 1e-8);
        }
        // the RK4 phase error grows linearly in time and falls as h^4
        let coarse = err(&lindblad_evolve(&s, 0.0, &rho0, &[4.0]).unwrap()[0]);
        let fine = err(&lindblad_evolve_with_step(&s, 0.0, &rho0, &[4.0], Some(0.005)).unwrap()[0]);
        assert!(fine < coarse / 10.0 && fine < 1e-8);
    }

    #[test]
    fn dissipator_rates_count_differing_sites() {
        let rates = dephasing_rates(0.5, &[0b0011, 0b0101], &[0b0011, 0b1100, 0b0001]);
        assert_eq!(rates[(0, 0)], 0.0);
        assert_eq!(rates[(0, 1)], -4.0);
        assert_eq!(rates[(1, 2)], -1.0);
        // against the superoperator sum_i (Z_i X Z_i - X) on a 3-site toy
        let states: Vec<u64> = (0..8).collect();
        let g = 0.37;
        let r = dephasing_rates(g, &states, &states);
        for a in 0..8u64 {
            for b in 0..8u64 {
                let mut s = 0.0;
                for i in 0..3 {
                    let za = if a >> i & 1 == 1 { -1.0 } else { 1.0 };
                    let zb = if b >> i & 1 == 1 { -1.0 } else { 1.0 };
                    s += g * (za * zb - 1.0);
                }
                assert!((r[(a as usize, b as usize)] - s).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn dyad_propagator_matches_rk4_reference() {
        let s = SystemSpec::with_params(3, 0.6, 1.2, &[0.3]).unwrap();
        let gamma = 0.05;
        let c0 = sector_cache(&s, 0).unwrap();
        let c1 = sector_cache(&s, 1).unwrap();
        // coherence block between vacuum and the sender excitation
        let p1 = c1.basis.index_of(1).unwrap();
        let mut x0 = SplitMatrix::zeros(1, c1.dim());
        x0.re[(0, p1)] = 1.0;
        let prop = DyadPropagator::new(&c0, &c1, gamma).unwrap();
        let times = [0.5, 2.0, 6.0];
        let out = prop.evolve(&x0, &times).unwrap();

        // reference: embed |0><S1| in the direct sum of sectors 0 and 1
        let states = DensityBlockState::basis_states(&s, &[0, 1]).unwrap();
        let mut rho = DMatrix::<Complex64>::zeros(states.len(), states.len());
        let col = states.iter().position(|&x| x == 1).unwrap();
        rho[(0, col)] = c(1.0);
        let rho0 = DensityBlockState {
            sectors: vec![0, 1],
            states: states.clone(),
            rho,
            time: 0.0,
        };
        let reference = lindblad_evolve_with_step(&s, gamma, &rho0, &times, Some(0.002)).unwrap();
        for (y, r) in out.iter().zip(&reference) {
            for q in 0..c1.dim() {
                let a = prop.occupation_element(y, 0, q);
                let b = r.rho[(0, 1 + q)];
                assert!((a - b).norm() < 1e-9, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn dyad_propagator_exact_without_dephasing() {
        let s = SystemSpec::with_params(4, 1.0, 10.0, &[0.3, -0.2]).unwrap();
        let c1 = sector_cache(&s, 1).unwrap();
        let c2 = sector_cache(&s, 2).unwrap();
        let p = c1.basis.index_of(1).unwrap();
        let q = c2.basis.index_of(3).unwrap();
        let mut x0 = SplitMatrix::zeros(c1.dim(), c2.dim());
        x0.re[(p, q)] = 1.0;
        let prop = DyadPropagator::new(&c1, &c2, 0.0).unwrap();
        let t = 300.0;
        let y = &prop.evolve(&x0, &[t]).unwrap()[0];
        let mut a = DVector::zeros(c1.dim());
        a[p] = c(1.0);
        let mut b = DVector::zeros(c2.dim());
        b[q] = c(1.0);
        let pa = c1.evolve_state(&a, t).unwrap();
        let pb = c2.evolve_state(&b, t).unwrap();
        let exact = &pa * pb.adjoint();
        for r in 0..c1.dim() {
            for cc in 0..c2.dim() {
                assert!((prop.occupation_element(y, r, cc) - exact[(r, cc)]).norm() < 1e-10);
            }
        }
    }
}
