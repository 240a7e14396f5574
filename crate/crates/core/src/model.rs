//! The axial next-nearest-neighbour Ising chain
//!
//! `H = -J1 Σ Z_i Z_{i+1} + J2 Σ Z_i Z_{i+2} + Bx Σ X_i`
//!
//! with exact diagonalization and the perturbative ground-state oracles.
//!
//! The Hamiltonian commutes with the global flip `X^⊗N`, so the dense solve is
//! split into the two parity sectors spanned by `(|r⟩ ± |r̄⟩)/√2`.

use std::io::{Read, Write};

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::engine::{self, Statevector};
use crate::error::{Error, Result};
use crate::pauli::{Pauli, PauliSum, PauliTerm};

/// Largest chain accepted by the dense eigensolver.
pub const MAX_ED_SITES: usize = 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Open,
    Periodic,
}

impl Boundary {
    pub fn is_periodic(self) -> bool {
        self == Boundary::Periodic
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub num_sites: usize,
    #[serde(default = "unit")]
    pub j1: f64,
    pub j2: f64,
    pub bx: f64,
    pub boundary: Boundary,
}

fn unit() -> f64 {
    1.0
}

impl ModelParams {
    pub fn new(num_sites: usize, j2: f64, bx: f64, boundary: Boundary) -> Result<Self> {
        let mp = Self { num_sites, j1: 1.0, j2, bx, boundary };
        mp.validate()?;
        Ok(mp)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_sites < 3 || self.num_sites > engine::MAX_QUBITS {
            return Err(Error::InvalidArgument(format!(
                "chain length {} outside [3, {}]",
                self.num_sites,
                engine::MAX_QUBITS
            )));
        }
        if !(self.j2 >= 0.0 && self.j2.is_finite()) {
            return Err(Error::InvalidArgument(format!("J2 must be finite and nonnegative, got {}", self.j2)));
        }
        if !self.bx.is_finite() || !self.j1.is_finite() {
            return Err(Error::InvalidArgument("couplings must be finite".into()));
        }
        Ok(())
    }

    pub fn with_j2(&self, j2: f64) -> Self {
        Self { j2, ..*self }
    }
}

/// Site pairs `(i, i + distance)`, wrapped for periodic chains.
pub fn bonds(n: usize, distance: usize, boundary: Boundary) -> Vec<(usize, usize)> {
    match boundary {
        Boundary::Open => (0..n.saturating_sub(distance)).map(|i| (i, i + distance)).collect(),
        Boundary::Periodic => (0..n).map(|i| (i, (i + distance) % n)).collect(),
    }
}

fn zz_sum(n: usize, pairs: &[(usize, usize)], coeff: f64) -> Result<Vec<PauliTerm>> {
    pairs
        .iter()
        .map(|&(a, b)| PauliTerm::from_sparse(n, &[(a, Pauli::Z), (b, Pauli::Z)], coeff))
        .collect()
}

pub fn build_hamiltonian(mp: &ModelParams) -> Result<PauliSum> {
    mp.validate()?;
    let n = mp.num_sites;
    let mut terms = zz_sum(n, &bonds(n, 1, mp.boundary), -mp.j1)?;
    terms.extend(zz_sum(n, &bonds(n, 2, mp.boundary), mp.j2)?);
    for i in 0..n {
        terms.push(PauliTerm::from_sparse(n, &[(i, Pauli::X)], mp.bx)?);
    }
    PauliSum::new(n, terms)
}

/// `Σ Z_i Z_{i+2}` with unit coefficients, i.e. `∂H/∂J2`.
pub fn build_ha(mp: &ModelParams) -> Result<PauliSum> {
    mp.validate()?;
    let n = mp.num_sites;
    PauliSum::new(n, zz_sum(n, &bonds(n, 2, mp.boundary), 1.0)?)
}

/// Basis used by one diagonal block of the solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sector {
    /// `(|r⟩ + |r̄⟩)/√2`.
    Even,
    /// `(|r⟩ - |r̄⟩)/√2`.
    Odd,
    /// Plain computational basis (Hamiltonian does not conserve parity).
    Full,
}

impl Sector {
    fn sign(self) -> f64 {
        if self == Sector::Odd {
            -1.0
        } else {
            1.0
        }
    }
}

#[derive(Debug, Clone)]
struct Block {
    sector: Sector,
    /// Retained eigenvectors as columns, in block coordinates.
    vectors: DMatrix<f64>,
}

/// Lowest eigenpairs of a real Hamiltonian.
#[derive(Debug, Clone)]
pub struct SpectrumResult {
    num_qubits: usize,
    energies: Vec<f64>,
    /// (block, column) for each retained level.
    location: Vec<(usize, usize)>,
    blocks: Vec<Block>,
    ground_degeneracy: usize,
    degeneracy_tol: f64,
    total_states: usize,
}

impl SpectrumResult {
    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    /// Ascending eigenvalues.
    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn ground_energy(&self) -> f64 {
        self.energies[0]
    }

    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    pub fn is_truncated(&self) -> bool {
        self.energies.len() < self.total_states
    }

    pub fn total_states(&self) -> usize {
        self.total_states
    }

    /// Number of levels within `degeneracy_tol` of the ground energy, across all sectors.
    pub fn ground_degeneracy(&self) -> usize {
        self.ground_degeneracy
    }

    pub fn degeneracy_tol(&self) -> f64 {
        self.degeneracy_tol
    }

    pub fn sector(&self, n: usize) -> Sector {
        self.blocks[self.location[n].0].sector
    }

    /// Eigenvector `n` as a full statevector.
    pub fn state(&self, n: usize) -> Statevector {
        let (b, col) = self.location[n];
        let block = &self.blocks[b];
        let u = block.vectors.column(col);
        let dim = 1usize << self.num_qubits;
        let mut amps = vec![Complex64::new(0.0, 0.0); dim];
        match block.sector {
            Sector::Full => {
                for (a, &v) in amps.iter_mut().zip(u.iter()) {
                    a.re = v;
                }
            }
            s => {
                let full = dim - 1;
                let norm = std::f64::consts::FRAC_1_SQRT_2;
                for (r, &v) in u.iter().enumerate() {
                    amps[r].re = v * norm;
                    amps[r ^ full].re = s.sign() * v * norm;
                }
            }
        }
        Statevector::from_amplitudes(amps).expect("eigenvectors are normalized")
    }

    pub fn states(&self) -> Vec<Statevector> {
        (0..self.len()).map(|n| self.state(n)).collect()
    }

    /// `⟨Ψ_n|O|Ψ_0⟩` for every retained level.
    pub fn matrix_elements_from_ground(&self, obs: &PauliSum) -> Result<Vec<f64>> {
        if obs.num_qubits() != self.num_qubits {
            return Err(Error::SizeMismatch { expected: self.num_qubits, got: obs.num_qubits() });
        }
        let v = engine::apply_pauli_sum(&self.state(0), obs)?;
        let dim = v.len();
        let mut out = vec![0.0; self.len()];
        for (bi, block) in self.blocks.iter().enumerate() {
            let coords: Vec<f64> = match block.sector {
                Sector::Full => v.iter().map(|c| c.re).collect(),
                s => {
                    let half = dim / 2;
                    let norm = std::f64::consts::FRAC_1_SQRT_2;
                    (0..half).map(|r| (v[r].re + s.sign() * v[r ^ (dim - 1)].re) * norm).collect()
                }
            };
            let coords = nalgebra::DVector::from_vec(coords);
            let proj = block.vectors.tr_mul(&coords);
            for (n, &(b, col)) in self.location.iter().enumerate() {
                if b == bi {
                    out[n] = proj[col];
                }
            }
        }
        Ok(out)
    }
}

fn degeneracy_default(e0: f64) -> f64 {
    1e-8 * e0.abs().max(1.0)
}

/// Sparse real matrix in triplet form.
struct Triplets {
    dim: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl Triplets {
    fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for &(i, j, v) in &self.entries {
            m[(i, j)] += v;
        }
        m
    }

    fn is_diagonal(&self) -> bool {
        self.entries.iter().all(|&(i, j, v)| i == j || v == 0.0)
    }

    fn residual(&self, u: &[f64], e: f64) -> f64 {
        let mut r: Vec<f64> = u.iter().map(|&x| -e * x).collect();
        for &(i, j, v) in &self.entries {
            r[i] += v * u[j];
        }
        r.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// Real sign of `i^{#Y}`; `None` for an odd number of Y letters.
fn real_phase(term: &PauliTerm) -> Option<f64> {
    match term.count_y() % 4 {
        0 => Some(1.0),
        2 => Some(-1.0),
        _ => None,
    }
}

fn block_matrix(h: &PauliSum, sector: Sector) -> Result<Triplets> {
    let n = h.num_qubits();
    let full = (1usize << n) - 1;
    let dim = if sector == Sector::Full { 1usize << n } else { 1usize << (n - 1) };
    let mut entries = Vec::new();
    for term in h.terms() {
        let phase = real_phase(term)
            .ok_or_else(|| Error::InvalidArgument(format!("term {} is not real", term.label())))?;
        let (x, z) = term.masks();
        let (x, z) = (x as usize, z as usize);
        for r in 0..dim {
            let sign = if (r & z).count_ones() % 2 == 1 { -1.0 } else { 1.0 };
            let value = term.coeff() * phase * sign;
            let t = r ^ x;
            if t < dim {
                entries.push((t, r, value));
            } else {
                entries.push((t ^ full, r, sector.sign() * value));
            }
        }
    }
    Ok(Triplets { dim, entries })
}

fn solve_block(m: &Triplets) -> (Vec<f64>, DMatrix<f64>) {
    if m.is_diagonal() {
        let mut diag = vec![0.0; m.dim];
        for &(i, _, v) in &m.entries {
            diag[i] += v;
        }
        let mut order: Vec<usize> = (0..m.dim).collect();
        order.sort_by(|&a, &b| diag[a].total_cmp(&diag[b]));
        let mut vecs = DMatrix::zeros(m.dim, m.dim);
        for (col, &i) in order.iter().enumerate() {
            vecs[(i, col)] = 1.0;
        }
        return (order.iter().map(|&i| diag[i]).collect(), vecs);
    }
    let eig = SymmetricEigen::new(m.to_dense());
    let mut order: Vec<usize> = (0..m.dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = eig.eigenvectors.select_columns(&order);
    (vals, vecs)
}

/// Dense eigensolve of a real Hamiltonian on at most [`MAX_ED_SITES`] qubits.
///
/// `num_states` defaults to the full spectrum up to 12 sites and 32 levels beyond.
pub fn diagonalize(h: &PauliSum, num_states: Option<usize>, degeneracy_tol: Option<f64>) -> Result<SpectrumResult> {
    let n = h.num_qubits();
    if n > MAX_ED_SITES {
        return Err(Error::TooLarge(n));
    }
    let total = 1usize << n;
    let keep = num_states.unwrap_or(if n <= 12 { total } else { 32 }).clamp(1, total);
    let parity = n >= 1 && h.terms().iter().all(|t| t.masks().1.count_ones() % 2 == 0);
    let sectors: &[Sector] = if parity { &[Sector::Even, Sector::Odd] } else { &[Sector::Full] };

    let mut matrices = Vec::new();
    let mut solved = Vec::new();
    for &s in sectors {
        let m = block_matrix(h, s)?;
        solved.push(solve_block(&m));
        matrices.push(m);
    }

    // Merge ascending; ties keep the even sector first.
    let mut levels: Vec<(f64, usize, usize)> = solved
        .iter()
        .enumerate()
        .flat_map(|(b, (vals, _))| vals.iter().enumerate().map(move |(c, &e)| (e, b, c)))
        .collect();
    levels.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    levels.truncate(keep);

    let mut blocks = Vec::new();
    let mut location = Vec::with_capacity(keep);
    let mut columns: Vec<Vec<usize>> = vec![Vec::new(); solved.len()];
    for &(_, b, c) in &levels {
        columns[b].push(c);
    }
    let mut remap: Vec<std::collections::HashMap<usize, usize>> = Vec::new();
    for (b, (_, vecs)) in solved.iter().enumerate() {
        let kept = vecs.select_columns(&columns[b]);
        for (new, &old) in columns[b].iter().enumerate() {
            let u: Vec<f64> = kept.column(new).iter().copied().collect();
            let e = levels.iter().find(|l| l.1 == b && l.2 == old).map(|l| l.0).unwrap_or(0.0);
            let res = matrices[b].residual(&u, e);
            if res >= 1e-8 {
                return Err(Error::InvalidArgument(format!("eigenpair residual {res:e} above 1e-8")));
            }
        }
        remap.push(columns[b].iter().enumerate().map(|(new, &old)| (old, new)).collect());
        blocks.push(Block { sector: sectors[b], vectors: kept });
    }
    for &(_, b, c) in &levels {
        location.push((b, remap[b][&c]));
    }
    let energies: Vec<f64> = levels.iter().map(|l| l.0).collect();
    let tol = degeneracy_tol.unwrap_or_else(|| degeneracy_default(energies[0]));
    let ground_degeneracy = energies.iter().filter(|&&e| e - energies[0] <= tol).count();
    Ok(SpectrumResult {
        num_qubits: n,
        energies,
        location,
        blocks,
        ground_degeneracy,
        degeneracy_tol: tol,
        total_states: total,
    })
}

pub fn exact_diagonalize(
    mp: &ModelParams,
    num_states: Option<usize>,
    degeneracy_tol: Option<f64>,
) -> Result<SpectrumResult> {
    mp.validate()?;
    if mp.num_sites > MAX_ED_SITES {
        return Err(Error::TooLarge(mp.num_sites));
    }
    diagonalize(&build_hamiltonian(mp)?, num_states, degeneracy_tol)
}

/// Per-level `(E_n - E_0, |⟨Ψ_n|O|Ψ_0⟩|²)` for the excited levels coupled to the ground state.
///
/// Refuses when a level within the degeneracy tolerance couples to the ground state,
/// since the perturbative sums are then undefined.
pub fn coupled_levels(spec: &SpectrumResult, obs: &PauliSum) -> Result<Vec<(f64, f64)>> {
    if spec.is_truncated() {
        return Err(Error::TruncatedSpectrum { kept: spec.len(), total: spec.total_states() });
    }
    let elems = spec.matrix_elements_from_ground(obs)?;
    let scale = obs.terms().iter().map(|t| t.coeff().abs()).sum::<f64>().max(1.0);
    let e0 = spec.ground_energy();
    let mut out = Vec::new();
    for (n, &m) in elems.iter().enumerate().skip(1) {
        let gap = spec.energies()[n] - e0;
        let w = m * m;
        if w <= (1e-10 * scale).powi(2) {
            continue;
        }
        if gap <= spec.degeneracy_tol() {
            return Err(Error::Degenerate { gap, tol: spec.degeneracy_tol() });
        }
        out.push((gap, w));
    }
    Ok(out)
}

/// `χ = Σ_{n≠0} |⟨Ψ_n|H_A|Ψ_0⟩|² / (E_n - E_0)²`.
pub fn perturbative_chi(spec: &SpectrumResult, ha: &PauliSum) -> Result<f64> {
    Ok(coupled_levels(spec, ha)?.iter().map(|(g, w)| w / (g * g)).sum())
}

/// Nonnegative terms `2|⟨Ψ_n|H_A|Ψ_0⟩|² / (E_n - E_0)`.
pub fn second_order_terms(spec: &SpectrumResult, ha: &PauliSum) -> Result<Vec<f64>> {
    Ok(coupled_levels(spec, ha)?.iter().map(|(g, w)| 2.0 * w / g).collect())
}

/// Curvature `∂²E_0/∂J2²`, which is minus the sum of [`second_order_terms`].
pub fn second_derivative(spec: &SpectrumResult, ha: &PauliSum) -> Result<f64> {
    Ok(-second_order_terms(spec, ha)?.iter().sum::<f64>())
}

/// CSV with header `n,energy`.
pub fn write_spectrum_csv<W: Write>(spec: &SpectrumResult, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["n", "energy"])?;
    for (n, e) in spec.energies().iter().enumerate() {
        w.write_record([n.to_string(), format!("{e:.15e}")])?;
    }
    w.flush()?;
    Ok(())
}

/// Binary amplitude dump: `u64` qubit count, then `2^N` `(re, im)` pairs of `f64`, all little-endian.
pub fn write_amplitudes<W: Write>(state: &Statevector, mut out: W) -> Result<()> {
    out.write_all(&(state.num_qubits() as u64).to_le_bytes())?;
    for a in state.amplitudes() {
        out.write_all(&a.re.to_le_bytes())?;
        out.write_all(&a.im.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_amplitudes<R: Read>(mut input: R) -> Result<Statevector> {
    let mut word = [0u8; 8];
    input.read_exact(&mut word)?;
    let n = u64::from_le_bytes(word) as usize;
    if n > engine::MAX_QUBITS {
        return Err(Error::TooLarge(n));
    }
    let mut amps = Vec::with_capacity(1 << n);
    for _ in 0..1usize << n {
        input.read_exact(&mut word)?;
        let re = f64::from_le_bytes(word);
        input.read_exact(&mut word)?;
        amps.push(Complex64::new(re, f64::from_le_bytes(word)));
    }
    Statevector::from_amplitudes(amps)
}
