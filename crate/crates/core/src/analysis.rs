//! Noise-robust observables and transition detection.

use std::collections::{BTreeSet, VecDeque};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{self, Circuit, Gate, Statevector};
use crate::error::{Error, Result};
use crate::mitigation::{self, TrexCalibration, ZneFit};
use crate::model::{self, Boundary, ModelParams};
use crate::noise::{Basis, Executor, Job, MeasurementRecord, RecordMeta};
use crate::pauli::{self, Estimate, PauliSum};

/// A symmetry action of the chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Generator {
    Identity,
    /// `X^⊗N`.
    GlobalFlip,
    /// Site relabeling `i -> (i + k) mod N`.
    Shift(usize),
}

impl Generator {
    pub fn label(&self) -> String {
        match self {
            Generator::Identity => "I".into(),
            Generator::GlobalFlip => "flip".into(),
            Generator::Shift(k) => format!("shift{k}"),
        }
    }

    pub fn apply_to_basis(&self, n: usize, b: u64) -> u64 {
        match *self {
            Generator::Identity => b,
            Generator::GlobalFlip => b ^ ((1u64 << n) - 1),
            Generator::Shift(k) => engine::permute_index(b as usize, &engine::shift_permutation(n, k)) as u64,
        }
    }

    pub fn apply_to_state(&self, state: &Statevector) -> Result<Statevector> {
        let n = state.num_qubits();
        match *self {
            Generator::Identity => Ok(state.clone()),
            Generator::GlobalFlip => {
                let mut s = state.clone();
                for q in 0..n {
                    s.apply_x(q)?;
                }
                Ok(s)
            }
            Generator::Shift(k) => engine::permute_qubits(state, &engine::shift_permutation(n, k)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetryGroup {
    num_qubits: usize,
    generators: Vec<Generator>,
}

/// Largest size for the dense commutation check at construction.
const COMMUTATION_CHECK_MAX: usize = 10;

impl SymmetryGroup {
    /// Generators without a commutation check.
    pub fn new(num_qubits: usize, generators: Vec<Generator>) -> Result<Self> {
        for g in &generators {
            if let Generator::Shift(k) = g {
                if *k == 0 || *k >= num_qubits {
                    return Err(Error::InvalidArgument(format!("shift {k} outside [1, {num_qubits})")));
                }
            }
        }
        Ok(Self { num_qubits, generators })
    }

    /// Identity, global flip and, for periodic chains, every cyclic shift.
    /// Commutation with the Hamiltonian is verified numerically up to 10 sites.
    pub fn for_model(mp: &ModelParams) -> Result<Self> {
        let n = mp.num_sites;
        let mut gens = vec![Generator::Identity, Generator::GlobalFlip];
        if mp.boundary == Boundary::Periodic {
            gens.extend((1..n).map(Generator::Shift));
        }
        let group = Self::new(n, gens)?;
        if n <= COMMUTATION_CHECK_MAX {
            group.verify(&model::build_hamiltonian(mp)?)?;
        }
        Ok(group)
    }

    pub fn flip_only(num_qubits: usize) -> Self {
        Self { num_qubits, generators: vec![Generator::Identity, Generator::GlobalFlip] }
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn generators(&self) -> &[Generator] {
        &self.generators
    }

    /// Cardinality `d`.
    pub fn len(&self) -> usize {
        self.generators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.generators.is_empty()
    }

    /// Check `‖[H, U]ψ‖ < 1e-10` on a random state for every generator.
    pub fn verify(&self, h: &PauliSum) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let dim = 1usize << self.num_qubits;
        let amps = (0..dim).map(|_| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)).collect();
        let psi = Statevector::from_amplitudes(amps)?;
        let h_psi = engine::apply_pauli_sum(&psi, h)?;
        for g in &self.generators {
            let u_psi = g.apply_to_state(&psi)?;
            let hu = engine::apply_pauli_sum(&u_psi, h)?;
            // U acts linearly, so apply it to the unnormalized H|ψ⟩ via basis relabeling.
            let mut uh = vec![Complex64::new(0.0, 0.0); dim];
            for (b, a) in h_psi.iter().enumerate() {
                uh[g.apply_to_basis(self.num_qubits, b as u64) as usize] = *a;
            }
            let diff: f64 = hu.iter().zip(&uh).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt();
            if diff >= 1e-10 {
                return Err(Error::InvalidArgument(format!(
                    "generator {} does not commute with the Hamiltonian (residual {diff:e})",
                    g.label()
                )));
            }
        }
        Ok(())
    }

    /// Closure of `b` under the generators.
    pub fn basis_orbit(&self, b: u64) -> BTreeSet<u64> {
        let mut seen = BTreeSet::from([b]);
        let mut queue = VecDeque::from([b]);
        while let Some(x) = queue.pop_front() {
            for g in &self.generators {
                let y = g.apply_to_basis(self.num_qubits, x);
                if seen.insert(y) {
                    queue.push_back(y);
                }
            }
        }
        seen
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CorrelationBasis {
    ZZ,
    XX,
}

impl CorrelationBasis {
    fn measurement(self) -> Basis {
        match self {
            CorrelationBasis::ZZ => Basis::Z,
            CorrelationBasis::XX => Basis::X,
        }
    }
}

/// Two-point correlators `⟨σ_i σ_j⟩` with per-entry standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub basis: CorrelationBasis,
    pub values: Vec<Vec<f64>>,
    pub stderr: Vec<Vec<f64>>,
}

impl CorrelationMatrix {
    pub fn num_qubits(&self) -> usize {
        self.values.len()
    }

    fn from_parity_means(basis: CorrelationBasis, n: usize, f: impl Fn(usize, usize) -> (f64, f64)) -> Self {
        let mut values = vec![vec![1.0; n]; n];
        let mut stderr = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in i + 1..n {
                let (v, s) = f(i, j);
                values[i][j] = v;
                values[j][i] = v;
                stderr[i][j] = s;
                stderr[j][i] = s;
            }
        }
        Self { basis, values, stderr }
    }

    /// Estimate every pair from the same pooled bitstring ensemble, optionally
    /// dividing by the readout attenuation `c_i c_j`.
    pub fn from_records(
        records: &[MeasurementRecord],
        basis: CorrelationBasis,
        n: usize,
        calibration: Option<&TrexCalibration>,
    ) -> Result<Self> {
        let counts = pauli::pooled_counts(records, basis.measurement());
        let shots: u64 = counts.values().sum();
        if shots == 0 {
            return Err(Error::Unmeasurable(format!("{basis:?} correlations need {:?}-basis records", basis.measurement())));
        }
        if let Some(cal) = calibration {
            cal.check(n)?;
        }
        Ok(Self::from_parity_means(basis, n, |i, j| {
            let mask = (1u64 << i) | (1u64 << j);
            let sum: f64 = counts
                .iter()
                .map(|(&b, &c)| if (b & mask).count_ones() % 2 == 1 { -(c as f64) } else { c as f64 })
                .sum();
            let mean = sum / shots as f64;
            let se = ((1.0 - mean * mean).max(0.0) / shots as f64).sqrt();
            match calibration {
                Some(cal) => {
                    let scale = cal.factors[i] * cal.factors[j];
                    (mean / scale, se / scale)
                }
                None => (mean, se),
            }
        }))
    }

    /// Exact correlators of a state.
    pub fn from_state(state: &Statevector, basis: CorrelationBasis) -> Result<Self> {
        let mut s = state.clone();
        s.rotate_to_basis(basis.measurement())?;
        let probs = s.probabilities();
        let n = state.num_qubits();
        Ok(Self::from_parity_means(basis, n, |i, j| {
            let mask = (1usize << i) | (1usize << j);
            let v = probs
                .iter()
                .enumerate()
                .map(|(b, p)| if (b & mask).count_ones() % 2 == 1 { -p } else { *p })
                .sum();
            (v, 0.0)
        }))
    }

    /// Correlators of the state relabeled by `i -> (i + k) mod N`.
    pub fn shifted(&self, k: usize) -> Self {
        let n = self.num_qubits();
        let mut out = self.clone();
        for i in 0..n {
            for j in 0..n {
                out.values[(i + k) % n][(j + k) % n] = self.values[i][j];
                out.stderr[(i + k) % n][(j + k) % n] = self.stderr[i][j];
            }
        }
        out
    }

    pub fn squared_distance(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .flatten()
            .zip(other.values.iter().flatten())
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    /// RMS off-diagonal difference.
    pub fn rms_difference(&self, other: &Self) -> f64 {
        let n = self.num_qubits();
        if n < 2 {
            return 0.0;
        }
        (self.squared_distance(other) / (n * (n - 1)) as f64).sqrt()
    }

    /// Row `⟨σ_0 σ_i⟩` for `i = 1..N`.
    pub fn first_row(&self) -> &[f64] {
        &self.values[0][1..]
    }
}

/// Find the shift `k` with `cur ≈ ref.shifted(k)` and undo it.
///
/// Open chains have no shift symmetry; they return `cur` unchanged with `k = 0`.
pub fn align_correlations(
    reference: &CorrelationMatrix,
    cur: &CorrelationMatrix,
    boundary: Boundary,
) -> Result<(CorrelationMatrix, usize)> {
    let n = reference.num_qubits();
    if cur.num_qubits() != n {
        return Err(Error::SizeMismatch { expected: n, got: cur.num_qubits() });
    }
    if boundary == Boundary::Open {
        return Ok((cur.clone(), 0));
    }
    let mut best = (f64::INFINITY, 0usize);
    for k in 0..n {
        let d = reference.shifted(k).squared_distance(cur);
        if d < best.0 - 1e-12 {
            best = (d, k);
        }
    }
    let k = best.1;
    Ok((cur.shifted((n - k) % n), k))
}

/// `dE/dJ2 = ⟨H_A⟩` from Z-basis records.
pub fn energy_derivative_from_records(
    records: &[MeasurementRecord],
    mp: &ModelParams,
    calibration: Option<&TrexCalibration>,
) -> Result<Estimate> {
    let ha = model::build_ha(mp)?;
    if !records.iter().any(|r| r.basis == Basis::Z) {
        return Err(Error::Unmeasurable("energy derivative needs Z-basis records".into()));
    }
    match calibration {
        Some(cal) => mitigation::trex_correct(&ha, records, cal),
        None => pauli::expectation_from_counts(&ha, records),
    }
}

pub fn energy_derivative_from_state(state: &Statevector, mp: &ModelParams) -> Result<f64> {
    engine::expectation(state, &model::build_ha(mp)?)
}

/// Compound circuit `B† · U · A` whose all-zeros probability is `|⟨Ψ_B|U|Ψ_A⟩|²`.
pub fn overlap_circuit(
    circ_a: &Circuit,
    params_a: &[f64],
    circ_b: &Circuit,
    params_b: &[f64],
    generator: Generator,
) -> Result<Circuit> {
    let n = circ_a.num_qubits();
    if circ_b.num_qubits() != n {
        return Err(Error::SizeMismatch { expected: n, got: circ_b.num_qubits() });
    }
    let mut compound = circ_a.bind(params_a)?;
    let mut inverse_b = circ_b.bind(params_b)?.inverse();
    match generator {
        Generator::Identity => {}
        Generator::GlobalFlip => {
            let mut layer = Circuit::new(n)?;
            layer.extend((0..n).map(|qubit| Gate::X { qubit }))?;
            compound = compound.then(&layer)?;
        }
        Generator::Shift(k) => {
            // ⟨0|B† P A|0⟩ = ⟨0|(P† B† P) A|0⟩: relabel B† by the inverse shift.
            inverse_b = inverse_b.relabeled(&engine::shift_permutation(n, (n - k % n) % n))?;
        }
    }
    compound.then(&inverse_b)
}

/// Execute the compound overlap circuit for one generator.
#[allow(clippy::too_many_arguments)]
pub fn overlap_record(
    circ_a: &Circuit,
    params_a: &[f64],
    circ_b: &Circuit,
    params_b: &[f64],
    generator: Generator,
    executor: &dyn Executor,
    shots: u64,
    seed: u64,
) -> Result<MeasurementRecord> {
    if shots == 0 {
        return Err(Error::InvalidArgument("overlap estimate needs shots".into()));
    }
    let compound = overlap_circuit(circ_a, params_a, circ_b, params_b, generator)?;
    let mut job = Job::new(&compound, &[], Basis::Z, shots, seed);
    job.meta = RecordMeta { circuit_id: overlap_id(generator), noise_scale: 1, ..RecordMeta::default() };
    executor.execute(&job)
}

/// Record tag of an overlap circuit.
pub fn overlap_id(generator: Generator) -> String {
    format!("overlap:{}", generator.label())
}

/// All-zeros fraction with binomial stderr.
pub fn survival(record: &MeasurementRecord) -> Result<Estimate> {
    if record.shots == 0 {
        return Err(Error::EmptyCounts);
    }
    let zeros: u64 = record.corrected_counts().filter(|&(b, _)| b == 0).map(|(_, c)| c).sum();
    let p = zeros as f64 / record.shots as f64;
    Ok(Estimate::new(p, (p * (1.0 - p) / record.shots as f64).sqrt()))
}

/// All-zeros survival of the compound overlap circuit, with binomial stderr.
#[allow(clippy::too_many_arguments)]
pub fn fidelity_overlap(
    circ_a: &Circuit,
    params_a: &[f64],
    circ_b: &Circuit,
    params_b: &[f64],
    generator: Generator,
    executor: &dyn Executor,
    shots: u64,
    seed: u64,
) -> Result<Estimate> {
    survival(&overlap_record(circ_a, params_a, circ_b, params_b, generator, executor, shots, seed)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FsEstimate {
    pub chi: f64,
    pub stderr: f64,
    /// Label of the generator with the largest overlap.
    pub generator: String,
    pub survivals: Vec<(String, Estimate)>,
}

fn overlap_from_survival(s: &Estimate, shots: u64) -> Estimate {
    let p = s.value.max(0.0);
    let ov = p.sqrt();
    let se = if p > 0.0 { s.stderr / (2.0 * ov) } else { (1.0 / shots as f64).sqrt() };
    Estimate::new(ov, se)
}

/// `χ̂ = 1 - max_g sqrt(survival_g)`, ties resolved toward earlier records.
pub fn fs_from_records(records: &[(String, MeasurementRecord)]) -> Result<FsEstimate> {
    let mut survivals = Vec::with_capacity(records.len());
    let mut best: Option<(Estimate, String)> = None;
    for (label, rec) in records {
        let s = survival(rec)?;
        let ov = overlap_from_survival(&s, rec.shots);
        if best.as_ref().is_none_or(|(b, _)| ov.value > b.value) {
            best = Some((ov, label.clone()));
        }
        survivals.push((label.clone(), s));
    }
    let (ov, generator) = best.ok_or(Error::EmptyCounts)?;
    Ok(FsEstimate { chi: 1.0 - ov.value, stderr: ov.stderr, generator, survivals })
}

/// Overlap records for every generator of the group.
pub fn fs_records(
    point_a: (&Circuit, &[f64]),
    point_b: (&Circuit, &[f64]),
    group: &SymmetryGroup,
    executor: &dyn Executor,
    shots: u64,
    seed: u64,
) -> Result<Vec<(String, MeasurementRecord)>> {
    if !group.generators().contains(&Generator::Identity) {
        return Err(Error::InvalidArgument("symmetry group must include the identity".into()));
    }
    group
        .generators()
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let seed = crate::noise::derive_seed(seed, i as u64);
            let rec = overlap_record(point_a.0, point_a.1, point_b.0, point_b.1, *g, executor, shots, seed)?;
            Ok((g.label(), rec))
        })
        .collect()
}

/// `χ̂ = 1 - max_g |⟨Ψ_B|U_g|Ψ_A⟩|` over the group, ties resolved toward earlier generators.
pub fn practical_fs(
    point_a: (&Circuit, &[f64]),
    point_b: (&Circuit, &[f64]),
    group: &SymmetryGroup,
    executor: &dyn Executor,
    shots: u64,
    seed: u64,
) -> Result<FsEstimate> {
    fs_from_records(&fs_records(point_a, point_b, group, executor, shots, seed)?)
}

/// Exact `1 - max_g |⟨b|U_g|a⟩|` from statevectors.
pub fn statevector_fs(a: &Statevector, b: &Statevector, group: &SymmetryGroup) -> Result<(f64, String)> {
    let mut best = (-1.0, String::new());
    for g in group.generators() {
        let ov = engine::inner_product(b, &g.apply_to_state(a)?)?.norm();
        if ov > best.0 {
            best = (ov, g.label());
        }
    }
    Ok((1.0 - best.0, best.1))
}

/// Everything measured at one scan point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRecord {
    pub model: ModelParams,
    pub energy_raw: Option<Estimate>,
    pub energy_trex: Option<Estimate>,
    pub zne: Option<ZneFit>,
    /// Noise-free statevector energy of the optimized parameters.
    pub energy_ideal: Option<f64>,
    pub energy_ed: Option<f64>,
    /// Best available `dE/dJ2` estimate (TREX-corrected when calibrated).
    pub derivative: Option<Estimate>,
    pub derivative_raw: Option<Estimate>,
    pub derivative_ideal: Option<f64>,
    pub derivative_ed: Option<f64>,
    pub zz: Option<CorrelationMatrix>,
    pub xx: Option<CorrelationMatrix>,
    /// Fidelity susceptibility estimate toward the next scan point.
    pub chi_next: Option<FsEstimate>,
    pub shift_k: usize,
    pub flags: Vec<String>,
}

impl ScanRecord {
    pub fn new(model: ModelParams) -> Self {
        Self {
            model,
            energy_raw: None,
            energy_trex: None,
            zne: None,
            energy_ideal: None,
            energy_ed: None,
            derivative: None,
            derivative_raw: None,
            derivative_ideal: None,
            derivative_ed: None,
            zz: None,
            xx: None,
            chi_next: None,
            shift_k: 0,
            flags: Vec::new(),
        }
    }
}

/// Align every point's correlators to its predecessor; returns the shift per point.
pub fn align_chain(scan: &mut [ScanRecord]) -> Result<Vec<usize>> {
    let mut shifts = vec![0; scan.len()];
    for i in 1..scan.len() {
        let boundary = scan[i].model.boundary;
        let (Some(prev), Some(cur)) = (scan[i - 1].zz.clone(), scan[i].zz.clone()) else {
            continue;
        };
        let (aligned, k) = align_correlations(&prev, &cur, boundary)?;
        let n = cur.num_qubits();
        scan[i].zz = Some(aligned);
        if let Some(xx) = scan[i].xx.as_mut() {
            *xx = xx.shifted((n - k) % n);
        }
        scan[i].shift_k = k;
        shifts[i] = k;
    }
    Ok(shifts)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectionPolicy {
    /// `T` in `median + T·MAD` for χ̂.
    pub chi_threshold: f64,
    /// Lower bound on the χ̂ spread.
    pub chi_floor: f64,
    pub derivative_threshold: f64,
    pub derivative_floor: f64,
    pub use_derivative: bool,
    pub correlation_threshold: f64,
    pub correlation_floor: f64,
}

impl Default for DetectionPolicy {
    fn default() -> Self {
        Self {
            chi_threshold: 5.0,
            chi_floor: 1e-3,
            derivative_threshold: 5.0,
            derivative_floor: 0.05,
            use_derivative: true,
            correlation_threshold: 5.0,
            correlation_floor: 0.02,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Evidence {
    Fs,
    Derivative,
    Correlation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionInterval {
    pub lo: f64,
    pub hi: f64,
    pub evidence: Vec<Evidence>,
    pub chi: Option<f64>,
    pub derivative_step: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityNote {
    pub lo: f64,
    pub hi: f64,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub intervals: Vec<TransitionInterval>,
    pub notes: Vec<ReliabilityNote>,
}

impl DetectionReport {
    pub fn flagged(&self) -> Vec<(f64, f64)> {
        self.intervals.iter().map(|i| (i.lo, i.hi)).collect()
    }
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Indices whose value exceeds `median + T·max(MAD, floor, stderr)`.
fn robust_exceedances(values: &[Option<(f64, f64)>], t: f64, floor: f64) -> Vec<bool> {
    let present: Vec<f64> = values.iter().flatten().map(|v| v.0).collect();
    if present.len() < 2 {
        return vec![false; values.len()];
    }
    let med = median(&present);
    let dev: Vec<f64> = present.iter().map(|x| (x - med).abs()).collect();
    let mad = median(&dev);
    values
        .iter()
        .map(|v| match v {
            Some((x, se)) => *x > med + t * mad.max(floor).max(*se),
            None => false,
        })
        .collect()
}

/// Flag intervals whose χ̂ or derivative step stands out from the scan's robust baseline.
pub fn detect_transitions(scan: &[ScanRecord], policy: &DetectionPolicy) -> DetectionReport {
    let m = scan.len();
    if m < 3 {
        return DetectionReport::default();
    }
    let intervals = m - 1;
    let chi: Vec<Option<(f64, f64)>> =
        scan[..intervals].iter().map(|r| r.chi_next.as_ref().map(|c| (c.chi, c.stderr))).collect();
    let dstep: Vec<Option<(f64, f64)>> = (0..intervals)
        .map(|k| match (&scan[k].derivative, &scan[k + 1].derivative) {
            (Some(a), Some(b)) => Some(((b.value - a.value).abs(), a.stderr.hypot(b.stderr))),
            _ => None,
        })
        .collect();
    let corr_change = |pick: fn(&ScanRecord) -> Option<&CorrelationMatrix>| -> Vec<Option<(f64, f64)>> {
        (0..intervals)
            .map(|k| match (pick(&scan[k]), pick(&scan[k + 1])) {
                (Some(a), Some(b)) => {
                    let se = a.stderr.iter().flatten().chain(b.stderr.iter().flatten()).fold(0.0f64, |s, x| s.max(*x));
                    Some((a.rms_difference(b), se))
                }
                _ => None,
            })
            .collect()
    };
    let zz = corr_change(|r| r.zz.as_ref());
    let xx = corr_change(|r| r.xx.as_ref());

    let chi_flag = robust_exceedances(&chi, policy.chi_threshold, policy.chi_floor);
    let d_flag = if policy.use_derivative {
        robust_exceedances(&dstep, policy.derivative_threshold, policy.derivative_floor)
    } else {
        vec![false; intervals]
    };
    let zz_flag = robust_exceedances(&zz, policy.correlation_threshold, policy.correlation_floor);
    let xx_flag = robust_exceedances(&xx, policy.correlation_threshold, policy.correlation_floor);

    let mut report = DetectionReport::default();
    for k in 0..intervals {
        let (lo, hi) = (scan[k].model.j2, scan[k + 1].model.j2);
        if chi_flag[k] || d_flag[k] {
            let mut evidence = Vec::new();
            if chi_flag[k] {
                evidence.push(Evidence::Fs);
            }
            if d_flag[k] {
                evidence.push(Evidence::Derivative);
            }
            if zz_flag[k] || xx_flag[k] {
                evidence.push(Evidence::Correlation);
            }
            report.intervals.push(TransitionInterval {
                lo,
                hi,
                evidence,
                chi: chi[k].map(|c| c.0),
                derivative_step: dstep[k].map(|d| d.0),
            });
        } else if xx_flag[k] && !zz_flag[k] {
            report.notes.push(ReliabilityNote {
                lo,
                hi,
                message: "XX correlations change without FS or ZZ support; the X-basis data at this interval is suspect"
                    .into(),
            });
        }
    }
    report
}
