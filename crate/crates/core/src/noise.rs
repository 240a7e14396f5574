//! Simulated noisy device.
//!
//! Every CNOT is followed by a systematic `ZZ(ε)` over-rotation and, with
//! probability `p₂`, a uniformly random non-identity two-qubit Pauli. Single-qubit
//! gates are ideal. Readout bits are flipped classically after sampling.
//!
//! Shots that draw the same fault pattern share one simulated trajectory; the
//! resulting counts have the same distribution as simulating every shot alone.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{self, Angle, Circuit, Gate, Statevector};
use crate::error::{Error, Result};
use crate::pauli::{conjugate_by_cnot, Pauli, PauliTerm};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Basis {
    Z,
    X,
}

/// Provenance attached to every record.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RecordMeta {
    pub circuit_id: String,
    pub frame_id: Option<u32>,
    /// Noise-scale factor λ (CNOT folding); 1 means unfolded.
    pub noise_scale: u32,
    pub seed: u64,
}

/// Outcome histogram for one executed circuit instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub basis: Basis,
    pub shots: u64,
    /// Raw outcome counts; bit `k` is qubit `k`.
    pub counts: BTreeMap<u64, u64>,
    /// Readout X-frame applied before measurement; XOR-ed out by `corrected_counts`.
    pub readout_mask: u64,
    pub meta: RecordMeta,
}

impl MeasurementRecord {
    pub fn new(basis: Basis, counts: BTreeMap<u64, u64>, meta: RecordMeta) -> Self {
        let shots = counts.values().sum();
        Self { basis, shots, counts, readout_mask: 0, meta }
    }

    /// Counts with the readout frame undone.
    pub fn corrected_counts(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.counts.iter().map(move |(&k, &c)| (k ^ self.readout_mask, c))
    }

    pub fn is_consistent(&self) -> bool {
        self.counts.values().sum::<u64>() == self.shots
    }

    pub fn to_json_line(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// Parse a JSON-lines archive of records.
pub fn read_records(text: &str) -> Result<Vec<MeasurementRecord>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

/// Per-qubit readout confusion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfusionModel {
    /// P(read 1 | true 0).
    pub p01: f64,
    /// P(read 0 | true 1).
    pub p10: f64,
}

impl ConfusionModel {
    pub const IDEAL: ConfusionModel = ConfusionModel { p01: 0.0, p10: 0.0 };

    pub fn validate(&self) -> Result<()> {
        for p in [self.p01, self.p10] {
            if !(0.0..0.5).contains(&p) {
                return Err(Error::InvalidArgument(format!("readout probability {p} outside [0, 0.5)")));
            }
        }
        Ok(())
    }

    /// Z-readout attenuation under a symmetrized (twirled) readout map.
    pub fn attenuation(&self) -> f64 {
        1.0 - self.p01 - self.p10
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Probability of a random non-identity two-qubit Pauli after each CNOT.
    pub cnot_pauli_error: f64,
    /// Angle ε of the `exp(-i ε/2 ZZ)` applied after each CNOT.
    pub cnot_coherent_angle: f64,
    /// Readout model per qubit; a single entry applies to every qubit.
    pub readout: Vec<ConfusionModel>,
}

impl NoiseModel {
    pub fn ideal() -> Self {
        Self { cnot_pauli_error: 0.0, cnot_coherent_angle: 0.0, readout: vec![ConfusionModel::IDEAL] }
    }

    pub fn uniform(p2: f64, coherent_angle: f64, p01: f64, p10: f64) -> Self {
        Self {
            cnot_pauli_error: p2,
            cnot_coherent_angle: coherent_angle,
            readout: vec![ConfusionModel { p01, p10 }],
        }
    }

    /// Desk-scale defaults: p₂=0.01, ε=0.02 rad, p01=0.02, p10=0.04.
    pub fn default_device() -> Self {
        Self::uniform(0.01, 0.02, 0.02, 0.04)
    }

    pub fn readout_only(p01: f64, p10: f64) -> Self {
        Self::uniform(0.0, 0.0, p01, p10)
    }

    pub fn confusion(&self, qubit: usize) -> ConfusionModel {
        self.readout
            .get(qubit)
            .or(self.readout.last())
            .copied()
            .unwrap_or(ConfusionModel::IDEAL)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.cnot_pauli_error) {
            return Err(Error::InvalidArgument(format!(
                "CNOT error probability {} outside [0, 1]",
                self.cnot_pauli_error
            )));
        }
        if !self.cnot_coherent_angle.is_finite() {
            return Err(Error::InvalidArgument("coherent angle must be finite".into()));
        }
        self.readout.iter().try_for_each(ConfusionModel::validate)
    }
}

/// Splitmix64 finalizer over `(seed, index)`; used to derive per-batch seeds.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One circuit execution request.
#[derive(Debug, Clone)]
pub struct Job<'a> {
    pub circuit: &'a Circuit,
    pub params: &'a [f64],
    pub basis: Basis,
    pub shots: u64,
    pub seed: u64,
    /// Qubits receiving an ideal X right before measurement.
    pub readout_mask: u64,
    pub meta: RecordMeta,
}

impl<'a> Job<'a> {
    pub fn new(circuit: &'a Circuit, params: &'a [f64], basis: Basis, shots: u64, seed: u64) -> Self {
        Self {
            circuit,
            params,
            basis,
            shots,
            seed,
            readout_mask: 0,
            meta: RecordMeta { noise_scale: 1, ..RecordMeta::default() },
        }
    }
}

/// Anything that turns circuits into measurement records.
pub trait Executor: Send + Sync {
    fn execute(&self, job: &Job<'_>) -> Result<MeasurementRecord>;
}

/// Exact Born-rule sampling with no noise.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdealExecutor;

impl Executor for IdealExecutor {
    fn execute(&self, job: &Job<'_>) -> Result<MeasurementRecord> {
        check_job(job)?;
        let state = engine::run(job.circuit, job.params)?;
        let mut rec = engine::sample_counts(&state, job.basis, job.shots, job.seed)?;
        rec.counts = rec.counts.into_iter().map(|(k, c)| (k ^ job.readout_mask, c)).collect();
        rec.readout_mask = job.readout_mask;
        rec.meta = RecordMeta { seed: job.seed, ..job.meta.clone() };
        Ok(rec)
    }
}

/// Trajectory sampler for a [`NoiseModel`].
#[derive(Debug, Clone)]
pub struct NoisyExecutor {
    model: NoiseModel,
}

impl NoisyExecutor {
    pub fn new(model: NoiseModel) -> Result<Self> {
        model.validate()?;
        Ok(Self { model })
    }

    pub fn model(&self) -> &NoiseModel {
        &self.model
    }
}

impl Executor for NoisyExecutor {
    fn execute(&self, job: &Job<'_>) -> Result<MeasurementRecord> {
        check_job(job)?;
        execute_trajectories(&self.model, job)
    }
}

fn check_job(job: &Job<'_>) -> Result<()> {
    if job.shots == 0 {
        return Err(Error::InvalidArgument("shots must be positive".into()));
    }
    if job.params.len() != job.circuit.num_params() {
        return Err(Error::ParamCount { expected: job.circuit.num_params(), got: job.params.len() });
    }
    Ok(())
}

/// Run `circuit` on the noisy device model and sample `shots` outcomes.
pub fn noisy_execute(
    circuit: &Circuit,
    params: &[f64],
    noise: &NoiseModel,
    basis: Basis,
    shots: u64,
    seed: u64,
) -> Result<MeasurementRecord> {
    NoisyExecutor::new(noise.clone())?.execute(&Job::new(circuit, params, basis, shots, seed))
}

/// Fault index `1..16`: control letter `k & 3`, target letter `k >> 2`.
fn fault_letters(k: u8) -> (Pauli, Pauli) {
    (Pauli::ALL[(k & 3) as usize], Pauli::ALL[(k >> 2) as usize])
}

fn apply_letter(state: &mut Statevector, q: usize, p: Pauli) -> Result<()> {
    // Global phases are irrelevant for sampling.
    match p {
        Pauli::I => Ok(()),
        Pauli::X => state.apply_x(q),
        Pauli::Z => state.apply_rz(q, std::f64::consts::PI),
        Pauli::Y => {
            state.apply_rz(q, std::f64::consts::PI)?;
            state.apply_x(q)
        }
    }
}

/// Gate list with parameters resolved, plus positions of the CNOTs.
struct Program {
    gates: Vec<Gate>,
    cnot_pos: Vec<usize>,
}

fn step(state: &mut Statevector, gate: &Gate, eps: f64) -> Result<()> {
    state.apply(gate, &[])?;
    if let Gate::Cnot { control, target } = *gate {
        if eps != 0.0 {
            state.apply_zz(control, target, eps)?;
        }
    }
    Ok(())
}

/// Noise-free evolution except for the coherent CNOT over-rotation.
pub fn run_coherent(circuit: &Circuit, params: &[f64], coherent_angle: f64) -> Result<Statevector> {
    let bound = circuit.bind(params)?;
    let mut state = Statevector::zero(circuit.num_qubits())?;
    for g in bound.gates() {
        step(&mut state, g, coherent_angle)?;
    }
    Ok(state)
}

fn execute_trajectories(model: &NoiseModel, job: &Job<'_>) -> Result<MeasurementRecord> {
    let n = job.circuit.num_qubits();
    let bound = job.circuit.bind(job.params)?;
    let program = Program {
        cnot_pos: bound.gates().iter().enumerate().filter(|(_, g)| g.is_cnot()).map(|(i, _)| i).collect(),
        gates: bound.gates().to_vec(),
    };
    let eps = model.cnot_coherent_angle;
    let mut rng = ChaCha8Rng::seed_from_u64(job.seed);

    // Fault patterns: sorted list of (cnot index, fault letter index).
    let mut patterns: BTreeMap<Vec<(u32, u8)>, u64> = BTreeMap::new();
    let p2 = model.cnot_pauli_error;
    for _ in 0..job.shots {
        let mut pattern = Vec::new();
        if p2 > 0.0 {
            for k in 0..program.cnot_pos.len() {
                if rng.gen::<f64>() < p2 {
                    pattern.push((k as u32, rng.gen_range(1..16u8)));
                }
            }
        }
        *patterns.entry(pattern).or_insert(0) += 1;
    }

    // Prefix cache: state right after CNOT k (including its coherent error).
    let mut prefix = Vec::with_capacity(program.cnot_pos.len());
    let mut state = Statevector::zero(n)?;
    for g in &program.gates {
        step(&mut state, g, eps)?;
        if g.is_cnot() {
            prefix.push(state.clone());
        }
    }
    let clean_final = state;

    let confusion: Vec<ConfusionModel> = (0..n).map(|q| model.confusion(q)).collect();
    let mut counts = BTreeMap::new();
    for (pattern, shots) in patterns {
        let mut state = match pattern.first() {
            None => clean_final.clone(),
            Some(&(first, _)) => {
                let mut s = prefix[first as usize].clone();
                let mut faults = pattern.iter().peekable();
                let start = program.cnot_pos[first as usize];
                // Apply the fault at `first`, then replay the remainder.
                let mut cnot_index = first as usize;
                if let Some(&&(k, f)) = faults.peek() {
                    if k as usize == cnot_index {
                        apply_fault(&mut s, &program.gates[start], f)?;
                        faults.next();
                    }
                }
                for g in &program.gates[start + 1..] {
                    step(&mut s, g, eps)?;
                    if g.is_cnot() {
                        cnot_index += 1;
                        if let Some(&&(k, f)) = faults.peek() {
                            if k as usize == cnot_index {
                                apply_fault(&mut s, g, f)?;
                                faults.next();
                            }
                        }
                    }
                }
                s
            }
        };
        state.rotate_to_basis(job.basis)?;
        let sampled = engine::sample_outcomes(&state.probabilities(), shots, &mut rng);
        for (outcome, c) in sampled {
            let physical = outcome ^ job.readout_mask;
            for _ in 0..c {
                let mut read = physical;
                for (q, cm) in confusion.iter().enumerate() {
                    let bit = physical >> q & 1;
                    let p = if bit == 0 { cm.p01 } else { cm.p10 };
                    if p > 0.0 && rng.gen::<f64>() < p {
                        read ^= 1 << q;
                    }
                }
                *counts.entry(read).or_insert(0) += 1;
            }
        }
    }
    let mut rec = MeasurementRecord::new(job.basis, counts, RecordMeta { seed: job.seed, ..job.meta.clone() });
    rec.readout_mask = job.readout_mask;
    Ok(rec)
}

fn apply_fault(state: &mut Statevector, cnot: &Gate, fault: u8) -> Result<()> {
    let Gate::Cnot { control, target } = *cnot else {
        unreachable!("faults attach to CNOTs only");
    };
    let (pc, pt) = fault_letters(fault);
    apply_letter(state, control, pc)?;
    apply_letter(state, target, pt)
}

/// A twirl frame for one CNOT: `before` is applied ahead of it and `after`
/// behind it, both on (control, target).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FramePair {
    pub before: [Pauli; 2],
    pub after: [Pauli; 2],
}

impl FramePair {
    /// The frame whose `after` undoes `before` through the CNOT.
    pub fn for_before(before: [Pauli; 2]) -> Self {
        let t = PauliTerm::new(before.to_vec(), 1.0).expect("two letters");
        let conj = conjugate_by_cnot(&t, 0, 1).expect("valid indices");
        let l = conj.letters();
        Self { before, after: [l[0], l[1]] }
    }

    pub fn identity() -> Self {
        Self::for_before([Pauli::I, Pauli::I])
    }

    /// All 16 frames, indexed by `4 * control + target` letter.
    pub fn all() -> Vec<FramePair> {
        Pauli::ALL
            .iter()
            .flat_map(|&c| Pauli::ALL.iter().map(move |&t| FramePair::for_before([c, t])))
            .collect()
    }

    pub fn random(rng: &mut impl Rng) -> Self {
        let k = rng.gen_range(0..16usize);
        Self::for_before([Pauli::ALL[k >> 2], Pauli::ALL[k & 3]])
    }

    fn is_valid(&self) -> bool {
        let t = PauliTerm::new(self.before.to_vec(), 1.0).expect("two letters");
        conjugate_by_cnot(&t, 0, 1).map(|c| c.letters() == self.after).unwrap_or(false)
    }
}

fn letter_gates(q: usize, p: Pauli) -> Vec<Gate> {
    let z = Gate::Rz { qubit: q, angle: Angle::Fixed(std::f64::consts::PI) };
    match p {
        Pauli::I => vec![],
        Pauli::X => vec![Gate::X { qubit: q }],
        Pauli::Z => vec![z],
        Pauli::Y => vec![z, Gate::X { qubit: q }],
    }
}

/// Sandwich every CNOT between its frame's Paulis, compiled to single-qubit gates.
/// The result implements the same unitary up to a global phase.
pub fn apply_pauli_frame(circuit: &Circuit, frames: &[FramePair]) -> Result<Circuit> {
    if frames.len() != circuit.cnot_count() {
        return Err(Error::InvalidArgument(format!(
            "{} frames for {} CNOTs",
            frames.len(),
            circuit.cnot_count()
        )));
    }
    let mut gates = Vec::with_capacity(circuit.gates().len() + 4 * frames.len());
    let mut k = 0;
    for g in circuit.gates() {
        if let Gate::Cnot { control, target } = *g {
            let f = &frames[k];
            if !f.is_valid() {
                return Err(Error::InvalidFrame(k));
            }
            gates.extend(letter_gates(control, f.before[0]));
            gates.extend(letter_gates(target, f.before[1]));
            gates.push(*g);
            gates.extend(letter_gates(control, f.after[0]));
            gates.extend(letter_gates(target, f.after[1]));
            k += 1;
        } else {
            gates.push(*g);
        }
    }
    Ok(circuit.with_gates(gates))
}

/// Independent uniformly random frames, one per CNOT.
pub fn random_frames(circuit: &Circuit, rng: &mut impl Rng) -> Vec<FramePair> {
    (0..circuit.cnot_count()).map(|_| FramePair::random(rng)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_are_mixed() {
        assert_ne!(derive_seed(1, 0), derive_seed(1, 1));
        assert_ne!(derive_seed(1, 0), derive_seed(2, 0));
        assert_eq!(derive_seed(5, 9), derive_seed(5, 9));
    }

    #[test]
    fn invalid_probabilities_rejected() {
        assert!(NoiseModel::uniform(1.5, 0.0, 0.0, 0.0).validate().is_err());
        assert!(NoiseModel::uniform(0.1, 0.0, 0.6, 0.0).validate().is_err());
        assert!(NoisyExecutor::new(NoiseModel::uniform(-0.1, 0.0, 0.0, 0.0)).is_err());
    }

    #[test]
    fn readout_flip_rate() {
        let mut c = Circuit::new(1).unwrap();
        c.push(Gate::X { qubit: 0 }).unwrap();
        let shots = 100_000;
        let rec = noisy_execute(&c, &[], &NoiseModel::readout_only(0.0, 0.1), Basis::Z, shots, 3).unwrap();
        let f0 = *rec.counts.get(&0).unwrap_or(&0) as f64 / shots as f64;
        let sigma = (0.1 * 0.9 / shots as f64).sqrt();
        assert!((f0 - 0.1).abs() < 3.0 * sigma, "{f0}");
    }

    #[test]
    fn deterministic_for_seed() {
        let mut c = Circuit::new(2).unwrap();
        c.push_param_ry(0).unwrap();
        c.push(Gate::Cnot { control: 0, target: 1 }).unwrap();
        let m = NoiseModel::default_device();
        let a = noisy_execute(&c, &[0.7], &m, Basis::X, 5000, 11).unwrap();
        let b = noisy_execute(&c, &[0.7], &m, Basis::X, 5000, 11).unwrap();
        assert_eq!(a, b);
        assert!(a.is_consistent());
    }

    #[test]
    fn frame_count_and_validity() {
        let mut c = Circuit::new(2).unwrap();
        c.push(Gate::Cnot { control: 0, target: 1 }).unwrap();
        assert!(apply_pauli_frame(&c, &[]).is_err());
        let bad = FramePair { before: [Pauli::X, Pauli::I], after: [Pauli::X, Pauli::I] };
        assert!(matches!(apply_pauli_frame(&c, &[bad]), Err(Error::InvalidFrame(0))));
        let id = apply_pauli_frame(&c, &[FramePair::identity()]).unwrap();
        assert_eq!(id, c);
        let xi = FramePair::for_before([Pauli::X, Pauli::I]);
        assert_eq!(xi.after, [Pauli::X, Pauli::X]);
    }

    #[test]
    fn records_round_trip_as_json_lines() {
        let mut c = Circuit::new(2).unwrap();
        c.push(Gate::X { qubit: 1 }).unwrap();
        let mut job = Job::new(&c, &[], Basis::Z, 10, 4);
        job.readout_mask = 0b01;
        job.meta.frame_id = Some(3);
        let rec = IdealExecutor.execute(&job).unwrap();
        assert_eq!(rec.counts.get(&0b11), Some(&10));
        let line = rec.to_json_line().unwrap();
        assert_eq!(read_records(&line).unwrap(), vec![rec]);
    }
}
