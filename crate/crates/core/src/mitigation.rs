//! Readout twirling (TREX), Pauli-twirled ensembles, CNOT folding and
//! exponential zero-noise extrapolation.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{Circuit, Gate};
use crate::error::{Error, Result};
use crate::noise::{self, derive_seed, Basis, Executor, Job, MeasurementRecord, RecordMeta};
use crate::pauli::{self, Estimate, PauliSum, PauliTerm};

/// Attenuations below this are refused rather than inverted.
pub const MIN_ATTENUATION: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrexCalibration {
    /// Per-qubit Z-readout attenuation `c_i`.
    pub factors: Vec<f64>,
    pub stderr: Vec<f64>,
    pub shots: u64,
    pub tag: String,
    /// Set when some `c_i` has standard error above 0.1.
    pub low_confidence: bool,
}

impl TrexCalibration {
    pub fn ideal(num_qubits: usize) -> Self {
        Self {
            factors: vec![1.0; num_qubits],
            stderr: vec![0.0; num_qubits],
            shots: 0,
            tag: "ideal".into(),
            low_confidence: false,
        }
    }

    pub fn num_qubits(&self) -> usize {
        self.factors.len()
    }

    pub(crate) fn check(&self, n: usize) -> Result<()> {
        if self.factors.len() != n {
            return Err(Error::SizeMismatch { expected: n, got: self.factors.len() });
        }
        for (qubit, &factor) in self.factors.iter().enumerate() {
            if !(factor >= MIN_ATTENUATION) {
                return Err(Error::AttenuationTooSmall { qubit, factor });
            }
        }
        Ok(())
    }

    fn product(&self, term: &PauliTerm) -> f64 {
        term.support().iter().map(|&q| self.factors[q]).product()
    }
}

/// X-frame masks for readout twirling.
///
/// When `count` is a power of two larger than `n`, qubit `i` flips on frame `r`
/// iff `parity(r & v_i) ⊕ o_i` for distinct random nonzero `v_i` and random
/// offsets `o_i`; every qubit pair then sees all four flip combinations equally
/// often. Otherwise frames are drawn independently and uniformly.
pub fn readout_frames(n: usize, count: usize, rng: &mut impl Rng) -> Vec<u64> {
    let balanced = count >= 2 && count.is_power_of_two() && n < count;
    if !balanced {
        let full = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
        return (0..count).map(|_| rng.gen::<u64>() & full).collect();
    }
    let mut pool: Vec<u64> = (1..count as u64).collect();
    pool.shuffle(rng);
    let vectors = &pool[..n];
    let offsets: Vec<bool> = (0..n).map(|_| rng.gen()).collect();
    (0..count as u64)
        .map(|r| {
            (0..n).fold(0u64, |mask, i| {
                let bit = ((r & vectors[i]).count_ones() % 2 == 1) ^ offsets[i];
                mask | (u64::from(bit) << i)
            })
        })
        .collect()
}

/// Shots per instance: even split, remainder to the earliest instances.
pub fn split_shots(shots: u64, parts: usize) -> Vec<u64> {
    let parts = parts.max(1) as u64;
    (0..parts).map(|i| shots / parts + u64::from(i < shots % parts)).collect()
}

/// Tag carried by calibration records.
pub const CALIBRATION_ID: &str = "trex-calibration";

/// Measure `|0…0⟩` under twirled X frames.
pub fn trex_calibration_records(
    executor: &dyn Executor,
    num_qubits: usize,
    shots: u64,
    num_twirls: usize,
    seed: u64,
) -> Result<Vec<MeasurementRecord>> {
    if shots == 0 || num_twirls == 0 {
        return Err(Error::InvalidArgument("calibration needs shots and twirls".into()));
    }
    let circuit = Circuit::new(num_qubits)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let masks = readout_frames(num_qubits, num_twirls, &mut rng);
    let mut out = Vec::with_capacity(num_twirls);
    for (r, (&mask, &s)) in masks.iter().zip(&split_shots(shots, num_twirls)).enumerate() {
        if s == 0 {
            continue;
        }
        let mut job = Job::new(&circuit, &[], Basis::Z, s, derive_seed(seed, r as u64));
        job.readout_mask = mask;
        job.meta = RecordMeta { circuit_id: CALIBRATION_ID.into(), frame_id: Some(r as u32), noise_scale: 1, seed: 0 };
        out.push(executor.execute(&job)?);
    }
    Ok(out)
}

/// `c_i` is the frame-corrected mean of `Z_i` over calibration records.
pub fn calibration_from_records(records: &[MeasurementRecord], num_qubits: usize) -> Result<TrexCalibration> {
    let mut sums = vec![0i64; num_qubits];
    let mut total = 0u64;
    for rec in records.iter().filter(|r| r.basis == Basis::Z) {
        for (b, c) in rec.corrected_counts() {
            for (q, sum) in sums.iter_mut().enumerate() {
                *sum += if b >> q & 1 == 0 { c as i64 } else { -(c as i64) };
            }
        }
        total += rec.shots;
    }
    if total == 0 {
        return Err(Error::EmptyCounts);
    }
    let factors: Vec<f64> = sums.iter().map(|&s| s as f64 / total as f64).collect();
    let stderr: Vec<f64> = factors.iter().map(|c| ((1.0 - c * c).max(0.0) / total as f64).sqrt()).collect();
    let seed = records.first().map_or(0, |r| r.meta.seed);
    Ok(TrexCalibration {
        low_confidence: stderr.iter().any(|&s| s > 0.1),
        factors,
        stderr,
        shots: total,
        tag: format!("seed:{seed}"),
    })
}

/// Estimate `c_i` from `|0…0⟩` measured under twirled X frames.
pub fn trex_calibrate(
    executor: &dyn Executor,
    num_qubits: usize,
    shots: u64,
    num_twirls: usize,
    seed: u64,
) -> Result<TrexCalibration> {
    let records = trex_calibration_records(executor, num_qubits, shots, num_twirls, seed)?;
    calibration_from_records(&records, num_qubits)
}

/// Which randomizations an ensemble applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub instances: usize,
    /// Random Pauli frames around every CNOT.
    pub pauli_twirl: bool,
    /// Random X frames before measurement.
    pub readout_twirl: bool,
    /// CNOT folding factor.
    pub lambda: u32,
}

impl Default for EnsembleSpec {
    fn default() -> Self {
        Self { instances: 16, pauli_twirl: true, readout_twirl: true, lambda: 1 }
    }
}

/// Run `instances` randomized copies of `circuit`, splitting `shots` among them.
#[allow(clippy::too_many_arguments)]
pub fn execute_ensemble(
    circuit: &Circuit,
    params: &[f64],
    executor: &dyn Executor,
    basis: Basis,
    shots: u64,
    spec: &EnsembleSpec,
    seed: u64,
    circuit_id: &str,
) -> Result<Vec<MeasurementRecord>> {
    if spec.instances == 0 {
        return Err(Error::InvalidArgument("ensemble needs at least one instance".into()));
    }
    let folded = fold_cnots(circuit, spec.lambda)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let masks = if spec.readout_twirl {
        readout_frames(circuit.num_qubits(), spec.instances, &mut rng)
    } else {
        vec![0; spec.instances]
    };
    let plan: Vec<(usize, u64, u64)> = masks
        .into_iter()
        .zip(split_shots(shots, spec.instances))
        .enumerate()
        .filter(|(_, (_, s))| *s > 0)
        .map(|(r, (m, s))| (r, m, s))
        .collect();
    plan.into_par_iter()
        .map(|(r, mask, s)| {
            let instance = if spec.pauli_twirl {
                let mut frame_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed ^ 0xF4A3, r as u64));
                noise::apply_pauli_frame(&folded, &noise::random_frames(&folded, &mut frame_rng))?
            } else {
                folded.clone()
            };
            let mut job = Job::new(&instance, params, basis, s, derive_seed(seed, r as u64));
            job.readout_mask = mask;
            job.meta = RecordMeta {
                circuit_id: circuit_id.to_string(),
                frame_id: Some(r as u32),
                noise_scale: spec.lambda,
                seed: 0,
            };
            executor.execute(&job)
        })
        .collect()
}

/// Readout-twirled execution with frames recorded and undone in post-processing.
#[allow(clippy::too_many_arguments)]
pub fn trex_execute(
    circuit: &Circuit,
    params: &[f64],
    executor: &dyn Executor,
    basis: Basis,
    shots: u64,
    num_twirls: usize,
    seed: u64,
) -> Result<Vec<MeasurementRecord>> {
    let spec = EnsembleSpec { instances: num_twirls, pauli_twirl: false, readout_twirl: true, lambda: 1 };
    execute_ensemble(circuit, params, executor, basis, shots, &spec, seed, "trex")
}

/// Each term's parity divided by `Π c_i` over its support. The stderr adds the
/// calibration uncertainty to the shot noise to first order.
pub fn trex_correct(obs: &PauliSum, records: &[MeasurementRecord], cal: &TrexCalibration) -> Result<Estimate> {
    cal.check(obs.num_qubits())?;
    let shot = pauli::scaled_estimate(obs, records, |t| Ok(cal.product(t)))?;
    let mut sensitivity = vec![0.0; cal.num_qubits()];
    for t in obs.terms().iter().filter(|t| !t.is_identity()) {
        let single = PauliSum::new(obs.num_qubits(), [t.clone()])?;
        let v = pauli::scaled_estimate(&single, records, |t| Ok(cal.product(t)))?.value;
        for q in t.support() {
            sensitivity[q] += v / cal.factors[q];
        }
    }
    let cal_var: f64 = sensitivity.iter().zip(&cal.stderr).map(|(d, s)| d * d * s * s).sum();
    Ok(Estimate::new(shot.value, (shot.stderr * shot.stderr + cal_var).sqrt()))
}

/// Replace every CNOT by `lambda` copies.
pub fn fold_cnots(circuit: &Circuit, lambda: u32) -> Result<Circuit> {
    if lambda == 0 || lambda.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!("folding factor must be odd and positive, got {lambda}")));
    }
    let mut gates = Vec::with_capacity(circuit.gates().len() + (lambda as usize - 1) * circuit.cnot_count());
    for g in circuit.gates() {
        let reps = if matches!(g, Gate::Cnot { .. }) { lambda } else { 1 };
        gates.extend(std::iter::repeat_n(*g, reps as usize));
    }
    Ok(circuit.with_gates(gates))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitKind {
    Exponential,
    /// Estimates changed sign or hit zero; the linear fit is reported instead.
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZneFit {
    pub lambdas: Vec<u32>,
    pub estimates: Vec<Estimate>,
    /// Extrapolated `E(0)` from the reported fit.
    pub e0: f64,
    pub e0_stderr: f64,
    /// Exponential rate, or the slope for a linear fallback.
    pub a: f64,
    /// Covariance of `(log|E0|, a)` or `(E0, slope)`.
    pub covariance: [[f64; 2]; 2],
    pub kind: FitKind,
    pub linear_e0: f64,
    pub linear_e0_stderr: f64,
    pub linear_slope: f64,
}

/// Weighted least squares `y = b0 + b1 x`. Without usable weights the
/// covariance is scaled by the residual variance.
fn line_fit(x: &[f64], y: &[f64], sigma: &[f64]) -> ([f64; 2], [[f64; 2]; 2]) {
    let weighted = sigma.iter().all(|&s| s > 0.0 && s.is_finite());
    let w: Vec<f64> = if weighted { sigma.iter().map(|s| 1.0 / (s * s)).collect() } else { vec![1.0; x.len()] };
    let (mut s0, mut s1, mut s2, mut t0, mut t1) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..x.len() {
        s0 += w[i];
        s1 += w[i] * x[i];
        s2 += w[i] * x[i] * x[i];
        t0 += w[i] * y[i];
        t1 += w[i] * x[i] * y[i];
    }
    let det = s0 * s2 - s1 * s1;
    let b1 = (s0 * t1 - s1 * t0) / det;
    let b0 = (t0 - b1 * s1) / s0;
    let mut cov = [[s2 / det, -s1 / det], [-s1 / det, s0 / det]];
    if !weighted {
        let dof = x.len().saturating_sub(2);
        let rss: f64 = (0..x.len()).map(|i| (y[i] - b0 - b1 * x[i]).powi(2)).sum();
        let s2 = if dof > 0 { rss / dof as f64 } else { 0.0 };
        for row in cov.iter_mut() {
            for v in row.iter_mut() {
                *v *= s2;
            }
        }
    }
    ([b0, b1], cov)
}

/// Fit `E(λ) = E0·exp(aλ)` in the log domain and extrapolate to `λ = 0`.
pub fn zne_fit(points: &[(u32, Estimate)]) -> Result<ZneFit> {
    let distinct: std::collections::BTreeSet<u32> = points.iter().map(|p| p.0).collect();
    if distinct.len() < 2 || distinct.len() != points.len() {
        return Err(Error::InvalidArgument("ZNE needs at least two distinct noise factors".into()));
    }
    if let Some(&(l, _)) = points.iter().find(|(l, _)| l % 2 == 0) {
        return Err(Error::InvalidArgument(format!("noise factor {l} is not odd")));
    }
    let mut sorted = points.to_vec();
    sorted.sort_by_key(|p| p.0);
    let x: Vec<f64> = sorted.iter().map(|p| p.0 as f64).collect();
    let e: Vec<f64> = sorted.iter().map(|p| p.1.value).collect();
    let s: Vec<f64> = sorted.iter().map(|p| p.1.stderr).collect();
    if e.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite ZNE estimate".into()));
    }

    let ([l0, slope], lcov) = line_fit(&x, &e, &s);
    let linear_e0_stderr = lcov[0][0].max(0.0).sqrt();

    let sign = e[0].signum();
    let consistent = e.iter().all(|v| *v != 0.0 && v.signum() == sign);
    let (e0, e0_stderr, a, covariance, kind) = if consistent {
        let y: Vec<f64> = e.iter().map(|v| v.abs().ln()).collect();
        let sy: Vec<f64> = s.iter().zip(&e).map(|(s, v)| s / v.abs()).collect();
        let ([b0, b1], cov) = line_fit(&x, &y, &sy);
        let e0 = sign * b0.exp();
        (e0, e0.abs() * cov[0][0].max(0.0).sqrt(), b1, cov, FitKind::Exponential)
    } else {
        (l0, linear_e0_stderr, slope, lcov, FitKind::Linear)
    };
    Ok(ZneFit {
        lambdas: sorted.iter().map(|p| p.0).collect(),
        estimates: sorted.iter().map(|p| p.1).collect(),
        e0,
        e0_stderr,
        a,
        covariance,
        kind,
        linear_e0: l0,
        linear_e0_stderr,
        linear_slope: slope,
    })
}

/// Per-λ estimates of `obs` from an ensemble run at each folding factor.
pub fn estimates_by_lambda(
    obs: &PauliSum,
    records: &[MeasurementRecord],
    cal: Option<&TrexCalibration>,
) -> Result<Vec<(u32, Estimate)>> {
    let mut groups: BTreeMap<u32, Vec<MeasurementRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(r.meta.noise_scale).or_default().push(r.clone());
    }
    groups
        .into_iter()
        .map(|(l, recs)| {
            let est = match cal {
                Some(c) => trex_correct(obs, &recs, c)?,
                None => pauli::expectation_from_counts(obs, &recs)?,
            };
            Ok((l, est))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine;
    use crate::noise::{IdealExecutor, NoiseModel, NoisyExecutor};

    #[test]
    fn exact_exponential_recovered() {
        let pts: Vec<_> = [1u32, 3, 5].iter().map(|&l| (l, Estimate::new(-10.0 * (-0.1 * l as f64).exp(), 0.0))).collect();
        let fit = zne_fit(&pts).unwrap();
        assert_eq!(fit.kind, FitKind::Exponential);
        assert!((fit.e0 + 10.0).abs() < 1e-9);
        assert!((fit.a + 0.1).abs() < 1e-9);
    }

    #[test]
    fn constant_data_gives_zero_rate() {
        let pts: Vec<_> = [1u32, 3, 5].iter().map(|&l| (l, Estimate::new(-2.5, 0.01))).collect();
        let fit = zne_fit(&pts).unwrap();
        assert!(fit.a.abs() < 1e-12);
        assert!((fit.e0 + 2.5).abs() < 1e-12);
    }

    #[test]
    fn sign_flip_falls_back_to_linear() {
        let pts = [(1, Estimate::new(-0.2, 0.01)), (3, Estimate::new(0.1, 0.01)), (5, Estimate::new(0.3, 0.01))];
        let fit = zne_fit(&pts).unwrap();
        assert_eq!(fit.kind, FitKind::Linear);
        assert_eq!(fit.e0, fit.linear_e0);
    }

    #[test]
    fn invalid_lambda_sets() {
        assert!(zne_fit(&[(1, Estimate::new(1.0, 0.1))]).is_err());
        assert!(zne_fit(&[(1, Estimate::new(1.0, 0.1)), (2, Estimate::new(1.0, 0.1))]).is_err());
        assert!(zne_fit(&[(1, Estimate::new(1.0, 0.1)), (1, Estimate::new(1.0, 0.1))]).is_err());
    }

    #[test]
    fn folding_preserves_unitary() {
        let mut c = Circuit::new(3).unwrap();
        c.push_param_ry(0).unwrap();
        c.push(Gate::Cnot { control: 0, target: 2 }).unwrap();
        c.push_param_ry(1).unwrap();
        c.push(Gate::Cnot { control: 1, target: 0 }).unwrap();
        assert_eq!(fold_cnots(&c, 1).unwrap(), c);
        assert!(fold_cnots(&c, 2).is_err());
        let f3 = fold_cnots(&c, 3).unwrap();
        assert_eq!(f3.cnot_count(), 6);
        let p = [0.4, -1.1];
        let (u, v) = (engine::circuit_unitary(&c, &p).unwrap(), engine::circuit_unitary(&f3, &p).unwrap());
        for (r, s) in u.iter().zip(&v) {
            for (a, b) in r.iter().zip(s) {
                assert!((a - b).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn balanced_frames() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let masks = readout_frames(8, 16, &mut rng);
        for i in 0..8 {
            for j in i + 1..8 {
                let mut seen = [0; 4];
                for m in &masks {
                    seen[((m >> i & 1) * 2 + (m >> j & 1)) as usize] += 1;
                }
                assert_eq!(seen, [4, 4, 4, 4]);
            }
        }
        assert_eq!(split_shots(10, 4), vec![3, 3, 2, 2]);
    }

    #[test]
    fn calibration_tracks_confusion() {
        let ideal = trex_calibrate(&IdealExecutor, 3, 10_000, 16, 1).unwrap();
        assert!(ideal.factors.iter().all(|&c| c == 1.0));
        let noisy = NoisyExecutor::new(NoiseModel::readout_only(0.05, 0.05)).unwrap();
        let cal = trex_calibrate(&noisy, 2, 100_000, 16, 2).unwrap();
        for (c, s) in cal.factors.iter().zip(&cal.stderr) {
            assert!((c - 0.9).abs() < 3.0 * s + 1e-12, "{c} ± {s}");
        }
    }

    #[test]
    fn correction_refuses_tiny_attenuation() {
        let obs = PauliSum::parse("1.0 Z").unwrap();
        let mut cal = TrexCalibration::ideal(1);
        cal.factors[0] = 0.05;
        assert!(matches!(trex_correct(&obs, &[], &cal), Err(Error::AttenuationTooSmall { .. })));
    }

    #[test]
    fn frames_are_undone() {
        let c = Circuit::new(3).unwrap();
        let recs = trex_execute(&c, &[], &IdealExecutor, Basis::Z, 1600, 16, 9).unwrap();
        assert_eq!(recs.len(), 16);
        assert!(recs.iter().all(|r| r.corrected_counts().all(|(b, _)| b == 0)));
        assert!(recs.iter().any(|r| r.readout_mask != 0));
    }
}
