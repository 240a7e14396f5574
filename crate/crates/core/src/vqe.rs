//! Layered RY/CNOT ansatz and its classical pre-optimization.

use std::collections::BTreeSet;
use std::f64::consts::{FRAC_PI_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::SymmetryGroup;
use crate::engine::{self, Angle, Circuit, Gate, Statevector};
use crate::error::{Error, Result};
use crate::model::{self, Boundary, ModelParams, SpectrumResult};
use crate::noise::derive_seed;
use crate::pauli::PauliSum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnsatzSpec {
    pub num_qubits: usize,
    #[serde(default = "one")]
    pub layers: usize,
    pub boundary: Boundary,
}

fn one() -> usize {
    1
}

impl AnsatzSpec {
    pub fn new(num_qubits: usize, layers: usize, boundary: Boundary) -> Result<Self> {
        let spec = Self { num_qubits, layers, boundary };
        spec.validate()?;
        Ok(spec)
    }

    pub fn for_model(mp: &ModelParams) -> Self {
        Self { num_qubits: mp.num_sites, layers: 1, boundary: mp.boundary }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 {
            return Err(Error::InvalidArgument("ansatz needs at least one layer".into()));
        }
        if self.num_qubits < 2 || self.num_qubits > engine::MAX_QUBITS {
            return Err(Error::InvalidArgument(format!("ansatz width {} out of range", self.num_qubits)));
        }
        Ok(())
    }

    pub fn num_params(&self) -> usize {
        self.num_qubits * (2 * self.layers + 1)
    }

    /// CNOT (control, target) pairs of the even and odd rounds.
    pub fn rounds(&self) -> (Vec<(usize, usize)>, Vec<(usize, usize)>) {
        let n = self.num_qubits;
        let mut even: Vec<_> = (0..n - 1).step_by(2).map(|i| (i, i + 1)).collect();
        let mut odd: Vec<_> = (1..n - 1).step_by(2).map(|i| (i, i + 1)).collect();
        if self.boundary.is_periodic() && n > 2 {
            if (n - 1).is_multiple_of(2) {
                even.push((n - 1, 0));
            } else {
                odd.push((n - 1, 0));
            }
        }
        (even, odd)
    }

    /// Slot index of the final rotation on `qubit`.
    pub fn final_slot(&self, qubit: usize) -> usize {
        2 * self.layers * self.num_qubits + qubit
    }
}

/// Per layer: RY row, even CNOT round, RY row, odd CNOT round; then a closing RY row.
pub fn build_ansatz(spec: &AnsatzSpec) -> Result<Circuit> {
    spec.validate()?;
    let n = spec.num_qubits;
    let (even, odd) = spec.rounds();
    let mut c = Circuit::new(n)?;
    for _ in 0..spec.layers {
        for round in [&even, &odd] {
            for q in 0..n {
                c.push_param_ry(q)?;
            }
            for &(control, target) in round {
                c.push(Gate::Cnot { control, target })?;
            }
        }
    }
    for q in 0..n {
        c.push_param_ry(q)?;
    }
    Ok(c)
}

pub fn energy_cost(circuit: &Circuit, params: &[f64], hamiltonian: &PauliSum) -> Result<f64> {
    engine::expectation(&engine::run(circuit, params)?, hamiltonian)
}

/// `1 - |⟨target|C(φ)|0⟩|²`.
pub fn overlap_cost(circuit: &Circuit, params: &[f64], target: &Statevector) -> Result<f64> {
    Ok(1.0 - engine::fidelity(target, &engine::run(circuit, params)?)?)
}

/// Splits the ground manifold of `spec` along the orbit of its dominant basis state.
///
/// The manifold holds as many low levels as the orbit of the dominant basis state
/// under `group`, trimmed to the largest prefix that is well separated from the
/// next level. The returned state is the normalized projection of that basis
/// state onto the manifold.
pub fn desymmetrize_target(spec: &SpectrumResult, group: &SymmetryGroup) -> Result<Statevector> {
    if spec.num_qubits() != group.num_qubits() {
        return Err(Error::SizeMismatch { expected: spec.num_qubits(), got: group.num_qubits() });
    }
    let ground = spec.state(0);
    let amps = ground.amplitudes();
    let mut best = 0usize;
    for (i, a) in amps.iter().enumerate() {
        if a.norm_sqr() > amps[best].norm_sqr() * (1.0 + 1e-9) {
            best = i;
        }
    }
    let orbit = group.basis_orbit(best as u64);
    let e = spec.energies();
    let e0 = e[0];
    let max_k = orbit.len().min(spec.len());
    let mut k = 1;
    for cand in (2..=max_k).rev() {
        let spread = e[cand - 1] - e0;
        let separated = match e.get(cand) {
            Some(&next) => spread <= 0.1 * (next - e0),
            None => true,
        };
        if separated {
            k = cand;
            break;
        }
    }
    let dim = amps.len();
    let mut out = vec![num_complex::Complex64::new(0.0, 0.0); dim];
    for n in 0..k {
        let s = spec.state(n);
        let w = s.amplitudes()[best].conj();
        for (o, a) in out.iter_mut().zip(s.amplitudes()) {
            *o += a * w;
        }
    }
    Statevector::from_amplitudes(out)
}

/// Basis states with the lowest classical (field-free) energy, one per flip pair.
pub fn classical_configurations(mp: &ModelParams, count: usize) -> Result<Vec<u64>> {
    let diag = ModelParams { bx: 0.0, ..*mp };
    let h = model::build_hamiltonian(&diag)?;
    let n = mp.num_sites;
    let half = 1u64 << (n - 1);
    let mut energies = Vec::with_capacity(half as usize);
    for b in 0..half {
        let e: f64 = h
            .terms()
            .iter()
            .map(|t| {
                let z = t.masks().1;
                if (b & z).count_ones() % 2 == 1 {
                    -t.coeff()
                } else {
                    t.coeff()
                }
            })
            .sum();
        energies.push((e, b));
    }
    energies.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(energies.into_iter().take(count).map(|(_, b)| b).collect())
}

/// Angles preparing the basis state `bits` exactly.
pub fn basis_state_params(spec: &AnsatzSpec, bits: u64) -> Vec<f64> {
    let mut p = vec![0.0; spec.num_params()];
    for q in 0..spec.num_qubits {
        if bits >> q & 1 == 1 {
            p[spec.final_slot(q)] = PI;
        }
    }
    p
}

/// A differentiable scalar objective over a parameter vector.
pub trait CostFunction: Sync {
    fn num_params(&self) -> usize;

    fn value(&self, params: &[f64]) -> Result<f64>;

    /// Parameter-shift gradient, exact when every slot drives one rotation with unit scale.
    fn gradient(&self, params: &[f64]) -> Result<Vec<f64>> {
        let mut p = params.to_vec();
        let mut g = Vec::with_capacity(params.len());
        for k in 0..params.len() {
            p[k] = params[k] + FRAC_PI_2;
            let plus = self.value(&p)?;
            p[k] = params[k] - FRAC_PI_2;
            let minus = self.value(&p)?;
            p[k] = params[k];
            g.push(0.5 * (plus - minus));
        }
        Ok(g)
    }
}

fn check_shift_rule(circuit: &Circuit) -> Result<()> {
    let mut seen = BTreeSet::new();
    for g in circuit.gates() {
        if let Gate::Ry { angle: Angle::Param { index, scale }, .. } | Gate::Rz { angle: Angle::Param { index, scale }, .. } = *g {
            if scale.abs() != 1.0 || !seen.insert(index) {
                return Err(Error::InvalidArgument(format!(
                    "parameter {index} is not a single unit-scale rotation; shift rule does not apply"
                )));
            }
        }
    }
    Ok(())
}

/// `⟨Ψ(φ)|H|Ψ(φ)⟩`.
#[derive(Debug, Clone)]
pub struct EnergyCost {
    circuit: Circuit,
    hamiltonian: PauliSum,
}

impl EnergyCost {
    pub fn new(circuit: Circuit, hamiltonian: PauliSum) -> Result<Self> {
        if circuit.num_qubits() != hamiltonian.num_qubits() {
            return Err(Error::SizeMismatch { expected: circuit.num_qubits(), got: hamiltonian.num_qubits() });
        }
        check_shift_rule(&circuit)?;
        Ok(Self { circuit, hamiltonian })
    }
}

impl CostFunction for EnergyCost {
    fn num_params(&self) -> usize {
        self.circuit.num_params()
    }

    fn value(&self, params: &[f64]) -> Result<f64> {
        energy_cost(&self.circuit, params, &self.hamiltonian)
    }
}

/// `1 - |⟨target|Ψ(φ)⟩|²`.
#[derive(Debug, Clone)]
pub struct OverlapCost {
    circuit: Circuit,
    target: Statevector,
}

impl OverlapCost {
    pub fn new(circuit: Circuit, target: Statevector) -> Result<Self> {
        if circuit.num_qubits() != target.num_qubits() {
            return Err(Error::SizeMismatch { expected: circuit.num_qubits(), got: target.num_qubits() });
        }
        check_shift_rule(&circuit)?;
        Ok(Self { circuit, target })
    }
}

impl CostFunction for OverlapCost {
    fn num_params(&self) -> usize {
        self.circuit.num_params()
    }

    fn value(&self, params: &[f64]) -> Result<f64> {
        overlap_cost(&self.circuit, params, &self.target)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CostKind {
    Energy,
    NegativeOverlap,
}

/// Gradient descent with Armijo backtracking and step growth after success.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Schedule {
    pub max_iterations: usize,
    pub gradient_tol: f64,
    pub initial_step: f64,
    pub growth: f64,
    pub shrink: f64,
    pub armijo: f64,
    pub min_step: f64,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            max_iterations: 5000,
            gradient_tol: 1e-6,
            initial_step: 0.1,
            growth: 2.0,
            shrink: 0.5,
            armijo: 1e-4,
            min_step: 1e-14,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeReport {
    pub final_params: Vec<f64>,
    pub final_cost: f64,
    pub cost_history: Vec<f64>,
    pub converged: bool,
    pub cost_kind: CostKind,
    pub iterations: usize,
    pub gradient_norm: f64,
}

pub fn optimize(
    cost: &dyn CostFunction,
    initial: &[f64],
    kind: CostKind,
    schedule: &Schedule,
) -> Result<OptimizeReport> {
    if initial.len() != cost.num_params() {
        return Err(Error::ParamCount { expected: cost.num_params(), got: initial.len() });
    }
    if initial.iter().any(|p| !p.is_finite()) {
        return Err(Error::InvalidArgument("initial parameters must be finite".into()));
    }
    let mut params = initial.to_vec();
    let mut value = cost.value(&params)?;
    if !value.is_finite() {
        return Err(Error::NonFiniteCost(0));
    }
    let mut history = vec![value];
    let mut step = schedule.initial_step;
    let mut converged = false;
    let mut grad_norm = f64::INFINITY;
    let mut iterations = 0;
    while iterations < schedule.max_iterations {
        let g = cost.gradient(&params)?;
        grad_norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !grad_norm.is_finite() {
            return Err(Error::NonFiniteCost(iterations));
        }
        if grad_norm < schedule.gradient_tol {
            converged = true;
            break;
        }
        iterations += 1;
        let mut accepted = false;
        while step >= schedule.min_step {
            let trial: Vec<f64> = params.iter().zip(&g).map(|(p, d)| p - step * d).collect();
            let v = cost.value(&trial)?;
            if !v.is_finite() {
                return Err(Error::NonFiniteCost(iterations));
            }
            if v <= value - schedule.armijo * step * grad_norm * grad_norm {
                params = trial;
                value = v;
                accepted = true;
                break;
            }
            step *= schedule.shrink;
        }
        history.push(value);
        if !accepted {
            // No descent step above the floor: a numerical stationary point.
            break;
        }
        step *= schedule.growth;
    }
    Ok(OptimizeReport {
        final_params: params,
        final_cost: value,
        cost_history: history,
        converged,
        cost_kind: kind,
        iterations,
        gradient_norm: grad_norm,
    })
}

/// How each scan point picks its starting points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScanStrategy {
    pub seed: u64,
    /// Half-width of the uniform initial angle distribution.
    pub init_scale: f64,
    pub warm_start: bool,
    pub random_start: bool,
    /// Number of lowest classical configurations tried as extra starts.
    pub classical_seeds: usize,
    /// Chains at least this long use the overlap bootstrap before the energy cost.
    pub bootstrap_min_sites: usize,
    pub schedule: Schedule,
    pub bootstrap_schedule: Schedule,
}

impl Default for ScanStrategy {
    fn default() -> Self {
        Self {
            seed: 0,
            init_scale: 0.1,
            warm_start: true,
            random_start: true,
            classical_seeds: 2,
            bootstrap_min_sites: 12,
            schedule: Schedule::default(),
            bootstrap_schedule: Schedule { max_iterations: 2000, gradient_tol: 1e-5, ..Schedule::default() },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub model: ModelParams,
    /// Label of the winning start (`warm`, `random`, `classical:<bits>`).
    pub start: String,
    pub report: std::result::Result<OptimizeReport, String>,
}

impl ScanPoint {
    pub fn params(&self) -> Option<&[f64]> {
        self.report.as_ref().ok().map(|r| r.final_params.as_slice())
    }
}

pub fn random_params(spec: &AnsatzSpec, scale: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..spec.num_params()).map(|_| rng.gen_range(-scale..=scale)).collect()
}

fn optimize_point(
    mp: &ModelParams,
    spec: &AnsatzSpec,
    strategy: &ScanStrategy,
    index: usize,
    warm: Option<&[f64]>,
) -> Result<(String, OptimizeReport)> {
    let circuit = build_ansatz(spec)?;
    let h = model::build_hamiltonian(mp)?;
    let energy = EnergyCost::new(circuit.clone(), h)?;
    let mut starts: Vec<(String, Vec<f64>)> = Vec::new();
    if let Some(w) = warm.filter(|_| strategy.warm_start) {
        starts.push(("warm".into(), w.to_vec()));
    }

    let bootstrap = mp.num_sites >= strategy.bootstrap_min_sites;
    let target = if bootstrap {
        let ed = model::exact_diagonalize(mp, Some(64), None)?;
        let target = desymmetrize_target(&ed, &SymmetryGroup::for_model(mp)?)?;
        let dominant = target
            .probabilities()
            .iter()
            .enumerate()
            .fold((0usize, -1.0), |acc, (i, &p)| if p > acc.1 { (i, p) } else { acc })
            .0;
        starts.push((format!("classical:{dominant}"), basis_state_params(spec, dominant as u64)));
        Some(target)
    } else {
        if strategy.random_start || starts.is_empty() {
            let seed = derive_seed(strategy.seed, index as u64);
            starts.push(("random".into(), random_params(spec, strategy.init_scale, seed)));
        }
        for b in classical_configurations(mp, strategy.classical_seeds)? {
            starts.push((format!("classical:{b}"), basis_state_params(spec, b)));
        }
        None
    };

    let runs: Vec<Result<(String, OptimizeReport)>> = starts
        .into_par_iter()
        .map(|(label, start)| {
            let start = match &target {
                Some(t) => {
                    let overlap = OverlapCost::new(circuit.clone(), t.clone())?;
                    optimize(&overlap, &start, CostKind::NegativeOverlap, &strategy.bootstrap_schedule)?.final_params
                }
                None => start,
            };
            Ok((label, optimize(&energy, &start, CostKind::Energy, &strategy.schedule)?))
        })
        .collect();
    let mut best: Option<(String, OptimizeReport)> = None;
    let mut first_err = None;
    for r in runs {
        match r {
            Ok((label, rep)) => {
                if best.as_ref().is_none_or(|(_, b)| rep.final_cost < b.final_cost) {
                    best = Some((label, rep));
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    best.ok_or_else(|| first_err.unwrap_or(Error::InvalidArgument("no starting point".into())))
}

/// Optimize every grid point in order, seeding each from its predecessor.
pub fn scan_optimize(grid: &[ModelParams], spec: &AnsatzSpec, strategy: &ScanStrategy) -> Result<Vec<ScanPoint>> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty grid".into()));
    }
    spec.validate()?;
    let mut out: Vec<ScanPoint> = Vec::with_capacity(grid.len());
    let mut warm: Option<Vec<f64>> = None;
    for (i, mp) in grid.iter().enumerate() {
        if mp.num_sites != spec.num_qubits {
            return Err(Error::SizeMismatch { expected: spec.num_qubits, got: mp.num_sites });
        }
        let point = match optimize_point(mp, spec, strategy, i, warm.as_deref()) {
            Ok((start, report)) => {
                warm = Some(report.final_params.clone());
                ScanPoint { model: *mp, start, report: Ok(report) }
            }
            Err(e) => ScanPoint { model: *mp, start: String::new(), report: Err(e.to_string()) },
        };
        out.push(point);
    }
    Ok(out)
}

/// Persisted optimum for one scan point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsFile {
    pub model: ModelParams,
    pub ansatz: AnsatzSpec,
    pub angles: Vec<f64>,
    pub final_cost: f64,
    pub seed: u64,
    pub converged: bool,
    pub start: String,
}

impl ParamsFile {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let p: ParamsFile = serde_json::from_str(text)?;
        if p.angles.len() != p.ansatz.num_params() {
            return Err(Error::ParamCount { expected: p.ansatz.num_params(), got: p.angles.len() });
        }
        Ok(p)
    }
}
