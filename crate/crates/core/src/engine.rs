//! Dense statevector simulation.
//!
//! Amplitude index `b` is the computational basis state whose bit `k` is the
//! value of qubit `k`. Gates act in place; circuits are replayed from `|0…0⟩`.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{Basis, MeasurementRecord, RecordMeta};
use crate::pauli::{PauliSum, PauliTerm};

/// Largest register the dense simulator accepts.
pub const MAX_QUBITS: usize = 24;

const C0: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const C1: Complex64 = Complex64 { re: 1.0, im: 0.0 };

#[derive(Debug, Clone, PartialEq)]
pub struct Statevector {
    num_qubits: usize,
    amps: Vec<Complex64>,
}

impl Statevector {
    pub fn zero(num_qubits: usize) -> Result<Self> {
        Self::basis_state(num_qubits, 0)
    }

    pub fn basis_state(num_qubits: usize, index: u64) -> Result<Self> {
        check_register(num_qubits)?;
        let dim = 1usize << num_qubits;
        if index as usize >= dim {
            return Err(Error::InvalidArgument(format!("basis index {index} out of range")));
        }
        let mut amps = vec![C0; dim];
        amps[index as usize] = C1;
        Ok(Self { num_qubits, amps })
    }

    /// Wrap raw amplitudes, normalizing them. Length must be a power of two.
    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self> {
        let dim = amps.len();
        if dim < 2 || !dim.is_power_of_two() {
            return Err(Error::InvalidArgument(format!("amplitude count {dim} is not 2^N")));
        }
        let num_qubits = dim.trailing_zeros() as usize;
        check_register(num_qubits)?;
        let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::InvalidArgument("amplitudes have zero or non-finite norm".into()));
        }
        Ok(Self { num_qubits, amps: amps.into_iter().map(|a| a / norm).collect() })
    }

    pub fn from_real(amps: &[f64]) -> Result<Self> {
        Self::from_amplitudes(amps.iter().map(|&a| Complex64::new(a, 0.0)).collect())
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }

    fn check_qubit(&self, q: usize) -> Result<()> {
        if q >= self.num_qubits {
            return Err(Error::QubitOutOfRange { index: q, num_qubits: self.num_qubits });
        }
        Ok(())
    }

    pub fn apply_ry(&mut self, q: usize, theta: f64) -> Result<()> {
        self.check_qubit(q)?;
        let (s, c) = (theta / 2.0).sin_cos();
        let stride = 1usize << q;
        for i in (0..self.amps.len()).filter(|i| i & stride == 0) {
            let a = self.amps[i];
            let b = self.amps[i | stride];
            self.amps[i] = a * c - b * s;
            self.amps[i | stride] = a * s + b * c;
        }
        Ok(())
    }

    pub fn apply_rz(&mut self, q: usize, theta: f64) -> Result<()> {
        self.check_qubit(q)?;
        let lo = Complex64::from_polar(1.0, -theta / 2.0);
        let hi = Complex64::from_polar(1.0, theta / 2.0);
        let stride = 1usize << q;
        for (i, a) in self.amps.iter_mut().enumerate() {
            *a *= if i & stride == 0 { lo } else { hi };
        }
        Ok(())
    }

    pub fn apply_x(&mut self, q: usize) -> Result<()> {
        self.check_qubit(q)?;
        let stride = 1usize << q;
        for i in (0..self.amps.len()).filter(|i| i & stride == 0) {
            self.amps.swap(i, i | stride);
        }
        Ok(())
    }

    pub fn apply_cnot(&mut self, control: usize, target: usize) -> Result<()> {
        self.check_qubit(control)?;
        self.check_qubit(target)?;
        if control == target {
            return Err(Error::InvalidArgument("CNOT control equals target".into()));
        }
        let (cm, tm) = (1usize << control, 1usize << target);
        for i in (0..self.amps.len()).filter(|i| i & cm != 0 && i & tm == 0) {
            self.amps.swap(i, i | tm);
        }
        Ok(())
    }

    /// `exp(-i θ/2 Z_a Z_b)`.
    pub fn apply_zz(&mut self, a: usize, b: usize, theta: f64) -> Result<()> {
        self.check_qubit(a)?;
        self.check_qubit(b)?;
        let even = Complex64::from_polar(1.0, -theta / 2.0);
        let odd = Complex64::from_polar(1.0, theta / 2.0);
        let mask = (1usize << a) | (1usize << b);
        for (i, amp) in self.amps.iter_mut().enumerate() {
            *amp *= if (i & mask).count_ones().is_multiple_of(2) { even } else { odd };
        }
        Ok(())
    }

    /// Apply the Pauli string of `term` (its coefficient is ignored).
    pub fn apply_pauli(&mut self, term: &PauliTerm) -> Result<()> {
        if term.num_qubits() != self.num_qubits {
            return Err(Error::SizeMismatch { expected: self.num_qubits, got: term.num_qubits() });
        }
        let (x, z) = term.masks();
        let phase = i_power(term.count_y());
        let mut out = vec![C0; self.amps.len()];
        for (b, &a) in self.amps.iter().enumerate() {
            let sign = if (b as u64 & z).count_ones().is_multiple_of(2) { 1.0 } else { -1.0 };
            out[b ^ x as usize] = a * phase * sign;
        }
        self.amps = out;
        Ok(())
    }

    pub fn apply(&mut self, gate: &Gate, params: &[f64]) -> Result<()> {
        match *gate {
            Gate::Ry { qubit, angle } => self.apply_ry(qubit, angle.resolve(params)?),
            Gate::Rz { qubit, angle } => self.apply_rz(qubit, angle.resolve(params)?),
            Gate::X { qubit } => self.apply_x(qubit),
            Gate::Cnot { control, target } => self.apply_cnot(control, target),
        }
    }

    /// Rotate every qubit so that an X-basis measurement becomes a Z-basis one.
    pub fn rotate_to_basis(&mut self, basis: Basis) -> Result<()> {
        if basis == Basis::X {
            for q in 0..self.num_qubits {
                self.apply_ry(q, -std::f64::consts::FRAC_PI_2)?;
            }
        }
        Ok(())
    }
}

fn check_register(num_qubits: usize) -> Result<()> {
    if num_qubits == 0 {
        return Err(Error::InvalidArgument("register needs at least one qubit".into()));
    }
    if num_qubits > MAX_QUBITS {
        return Err(Error::TooLarge(num_qubits));
    }
    Ok(())
}

fn i_power(k: usize) -> Complex64 {
    match k % 4 {
        0 => C1,
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    }
}

/// A rotation angle: fixed, or read from the parameter vector with a sign.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Angle {
    Fixed(f64),
    Param { index: usize, scale: f64 },
}

impl Angle {
    pub fn param(index: usize) -> Self {
        Angle::Param { index, scale: 1.0 }
    }

    pub fn resolve(&self, params: &[f64]) -> Result<f64> {
        match *self {
            Angle::Fixed(a) => Ok(a),
            Angle::Param { index, scale } => params
                .get(index)
                .map(|p| p * scale)
                .ok_or(Error::ParamCount { expected: index + 1, got: params.len() }),
        }
    }

    fn negated(self) -> Self {
        match self {
            Angle::Fixed(a) => Angle::Fixed(-a),
            Angle::Param { index, scale } => Angle::Param { index, scale: -scale },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Gate {
    Ry { qubit: usize, angle: Angle },
    Rz { qubit: usize, angle: Angle },
    X { qubit: usize },
    Cnot { control: usize, target: usize },
}

impl Gate {
    fn qubits(&self) -> (usize, Option<usize>) {
        match *self {
            Gate::Ry { qubit, .. } | Gate::Rz { qubit, .. } | Gate::X { qubit } => (qubit, None),
            Gate::Cnot { control, target } => (control, Some(target)),
        }
    }

    fn param_index(&self) -> Option<usize> {
        match *self {
            Gate::Ry { angle: Angle::Param { index, .. }, .. }
            | Gate::Rz { angle: Angle::Param { index, .. }, .. } => Some(index),
            _ => None,
        }
    }

    pub fn is_cnot(&self) -> bool {
        matches!(self, Gate::Cnot { .. })
    }

    fn inverse(self) -> Self {
        match self {
            Gate::Ry { qubit, angle } => Gate::Ry { qubit, angle: angle.negated() },
            Gate::Rz { qubit, angle } => Gate::Rz { qubit, angle: angle.negated() },
            other => other,
        }
    }

    fn relabeled(self, perm: &[usize]) -> Self {
        match self {
            Gate::Ry { qubit, angle } => Gate::Ry { qubit: perm[qubit], angle },
            Gate::Rz { qubit, angle } => Gate::Rz { qubit: perm[qubit], angle },
            Gate::X { qubit } => Gate::X { qubit: perm[qubit] },
            Gate::Cnot { control, target } => Gate::Cnot { control: perm[control], target: perm[target] },
        }
    }

    fn bound(self, params: &[f64]) -> Result<Self> {
        Ok(match self {
            Gate::Ry { qubit, angle } => Gate::Ry { qubit, angle: Angle::Fixed(angle.resolve(params)?) },
            Gate::Rz { qubit, angle } => Gate::Rz { qubit, angle: Angle::Fixed(angle.resolve(params)?) },
            other => other,
        })
    }
}

/// An ordered gate program over a fixed register.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Circuit {
    num_qubits: usize,
    num_params: usize,
    gates: Vec<Gate>,
}

impl Circuit {
    pub fn new(num_qubits: usize) -> Result<Self> {
        check_register(num_qubits)?;
        Ok(Self { num_qubits, num_params: 0, gates: Vec::new() })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn num_params(&self) -> usize {
        self.num_params
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn cnot_count(&self) -> usize {
        self.gates.iter().filter(|g| g.is_cnot()).count()
    }

    pub fn push(&mut self, gate: Gate) -> Result<()> {
        let (a, b) = gate.qubits();
        for q in std::iter::once(a).chain(b) {
            if q >= self.num_qubits {
                return Err(Error::QubitOutOfRange { index: q, num_qubits: self.num_qubits });
            }
        }
        if b == Some(a) {
            return Err(Error::InvalidArgument("CNOT control equals target".into()));
        }
        if let Some(idx) = gate.param_index() {
            self.num_params = self.num_params.max(idx + 1);
        }
        self.gates.push(gate);
        Ok(())
    }

    /// Add an RY driven by a fresh parameter slot; returns the slot index.
    pub fn push_param_ry(&mut self, qubit: usize) -> Result<usize> {
        let index = self.num_params;
        self.push(Gate::Ry { qubit, angle: Angle::param(index) })?;
        Ok(index)
    }

    pub fn extend(&mut self, gates: impl IntoIterator<Item = Gate>) -> Result<()> {
        gates.into_iter().try_for_each(|g| self.push(g))
    }

    fn check_params(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_params {
            return Err(Error::ParamCount { expected: self.num_params, got: params.len() });
        }
        Ok(())
    }

    /// Replace every parameter reference by its numeric value.
    pub fn bind(&self, params: &[f64]) -> Result<Circuit> {
        self.check_params(params)?;
        let gates = self.gates.iter().map(|g| g.bound(params)).collect::<Result<_>>()?;
        Ok(Circuit { num_qubits: self.num_qubits, num_params: 0, gates })
    }

    /// The adjoint program: gates reversed, rotation angles negated.
    pub fn inverse(&self) -> Circuit {
        Circuit {
            num_qubits: self.num_qubits,
            num_params: self.num_params,
            gates: self.gates.iter().rev().map(|g| g.inverse()).collect(),
        }
    }

    /// Reassign qubit `i` to `perm[i]` throughout.
    pub fn relabeled(&self, perm: &[usize]) -> Result<Circuit> {
        check_permutation(perm, self.num_qubits)?;
        Ok(Circuit {
            num_qubits: self.num_qubits,
            num_params: self.num_params,
            gates: self.gates.iter().map(|g| g.relabeled(perm)).collect(),
        })
    }

    /// Concatenate a parameter-free circuit after this one.
    pub fn then(&self, other: &Circuit) -> Result<Circuit> {
        if other.num_qubits != self.num_qubits {
            return Err(Error::SizeMismatch { expected: self.num_qubits, got: other.num_qubits });
        }
        if other.num_params != 0 {
            return Err(Error::InvalidArgument("appended circuit must be bound".into()));
        }
        let mut out = self.clone();
        out.gates.extend_from_slice(&other.gates);
        Ok(out)
    }

    pub(crate) fn with_gates(&self, gates: Vec<Gate>) -> Circuit {
        Circuit { num_qubits: self.num_qubits, num_params: self.num_params, gates }
    }
}

/// Apply one gate to a copy of `state`.
pub fn apply_gate(state: &Statevector, gate: &Gate) -> Result<Statevector> {
    let mut out = state.clone();
    out.apply(gate, &[])?;
    Ok(out)
}

/// `C(params)|0…0⟩`.
pub fn run(circuit: &Circuit, params: &[f64]) -> Result<Statevector> {
    circuit.check_params(params)?;
    let mut state = Statevector::zero(circuit.num_qubits)?;
    for g in &circuit.gates {
        state.apply(g, params)?;
    }
    Ok(state)
}

/// `⟨a|b⟩`.
pub fn inner_product(a: &Statevector, b: &Statevector) -> Result<Complex64> {
    if a.num_qubits != b.num_qubits {
        return Err(Error::SizeMismatch { expected: a.num_qubits, got: b.num_qubits });
    }
    Ok(a.amps.iter().zip(&b.amps).map(|(x, y)| x.conj() * y).sum())
}

pub fn fidelity(a: &Statevector, b: &Statevector) -> Result<f64> {
    Ok(inner_product(a, b)?.norm_sqr())
}

/// Draw `shots` outcomes from a probability vector.
pub(crate) fn sample_outcomes(probs: &[f64], shots: u64, rng: &mut impl Rng) -> BTreeMap<u64, u64> {
    let mut cdf = Vec::with_capacity(probs.len());
    let mut acc = 0.0;
    for p in probs {
        acc += p;
        cdf.push(acc);
    }
    let total = acc;
    let mut counts = BTreeMap::new();
    for _ in 0..shots {
        let u = rng.gen::<f64>() * total;
        let mut idx = cdf.partition_point(|&c| c <= u);
        // Guard against landing on a trailing zero-probability outcome.
        while idx > 0 && (idx >= probs.len() || probs[idx] == 0.0) {
            idx -= 1;
        }
        *counts.entry(idx as u64).or_insert(0) += 1;
    }
    counts
}

/// Born-rule sampling in the requested basis.
pub fn sample_counts(state: &Statevector, basis: Basis, shots: u64, seed: u64) -> Result<MeasurementRecord> {
    if shots == 0 {
        return Err(Error::InvalidArgument("shots must be positive".into()));
    }
    let mut rotated = state.clone();
    rotated.rotate_to_basis(basis)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let counts = sample_outcomes(&rotated.probabilities(), shots, &mut rng);
    let meta = RecordMeta { seed, ..RecordMeta::default() };
    Ok(MeasurementRecord::new(basis, counts, meta))
}

pub(crate) fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    if perm.len() != n {
        return Err(Error::SizeMismatch { expected: n, got: perm.len() });
    }
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n || seen[p] {
            return Err(Error::InvalidArgument(format!("{perm:?} is not a bijection on 0..{n}")));
        }
        seen[p] = true;
    }
    Ok(())
}

/// Map basis index `b` through a qubit relabeling (bit `i` moves to bit `perm[i]`).
pub(crate) fn permute_index(b: usize, perm: &[usize]) -> usize {
    perm.iter()
        .enumerate()
        .filter(|(i, _)| b >> i & 1 == 1)
        .fold(0, |acc, (_, &p)| acc | 1 << p)
}

/// Relabel qubits: the amplitude of bitstring `b` moves to `b` with bit `i` sent to bit `perm[i]`.
pub fn permute_qubits(state: &Statevector, perm: &[usize]) -> Result<Statevector> {
    check_permutation(perm, state.num_qubits)?;
    let mut amps = vec![C0; state.dim()];
    for (b, &a) in state.amps.iter().enumerate() {
        amps[permute_index(b, perm)] = a;
    }
    Ok(Statevector { num_qubits: state.num_qubits, amps })
}

/// Cyclic shift sending site `i` to `(i + k) mod n`.
pub fn shift_permutation(n: usize, k: usize) -> Vec<usize> {
    (0..n).map(|i| (i + k) % n).collect()
}

/// `O|ψ⟩` for a Pauli sum `O` (not normalized).
pub fn apply_pauli_sum(state: &Statevector, obs: &PauliSum) -> Result<Vec<Complex64>> {
    if obs.num_qubits() != state.num_qubits {
        return Err(Error::SizeMismatch { expected: state.num_qubits, got: obs.num_qubits() });
    }
    let mut out = vec![C0; state.dim()];
    for t in obs.terms() {
        let (x, z) = t.masks();
        let phase = i_power(t.count_y()) * t.coeff();
        for (b, &a) in state.amps.iter().enumerate() {
            let sign = if (b as u64 & z).count_ones().is_multiple_of(2) { 1.0 } else { -1.0 };
            out[b ^ x as usize] += a * phase * sign;
        }
    }
    Ok(out)
}

/// Exact `⟨ψ|O|ψ⟩`.
pub fn expectation(state: &Statevector, obs: &PauliSum) -> Result<f64> {
    if obs.num_qubits() != state.num_qubits {
        return Err(Error::SizeMismatch { expected: state.num_qubits, got: obs.num_qubits() });
    }
    let mut total = 0.0;
    for t in obs.terms() {
        let (x, z) = t.masks();
        let phase = i_power(t.count_y());
        let mut acc = C0;
        for (b, &a) in state.amps.iter().enumerate() {
            let sign = if (b as u64 & z).count_ones().is_multiple_of(2) { 1.0 } else { -1.0 };
            acc += state.amps[b ^ x as usize].conj() * a * sign;
        }
        total += t.coeff() * (acc * phase).re;
    }
    Ok(total)
}

/// Dense unitary of a circuit; entry `[row][col]` is `⟨row|C|col⟩`.
pub fn circuit_unitary(circuit: &Circuit, params: &[f64]) -> Result<Vec<Vec<Complex64>>> {
    circuit.check_params(params)?;
    let dim = 1usize << circuit.num_qubits;
    let mut u = vec![vec![C0; dim]; dim];
    for col in 0..dim {
        let mut s = Statevector::basis_state(circuit.num_qubits, col as u64)?;
        for g in &circuit.gates {
            s.apply(g, params)?;
        }
        for (row, a) in s.amps.iter().enumerate() {
            u[row][col] = *a;
        }
    }
    Ok(u)
}
