//! Quick invariant suite run by the `selftest` subcommand.

use num_complex::Complex64;

use crate::analysis::{self, SymmetryGroup};
use crate::engine::{self, Circuit, Gate, Statevector};
use crate::error::Result;
use crate::mitigation;
use crate::model::{self, Boundary, ModelParams};
use crate::noise::{self, Basis, FramePair, IdealExecutor};
use crate::pauli::{self, Estimate, Pauli, PauliTerm};
use crate::vqe::{self, AnsatzSpec, CostFunction, EnergyCost};

pub struct Check {
    pub name: &'static str,
    pub outcome: std::result::Result<(), String>,
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn cnot_involution() -> Result<std::result::Result<(), String>> {
    for a in Pauli::ALL {
        for b in Pauli::ALL {
            let t = PauliTerm::new(vec![a, b], 1.0)?;
            let twice = pauli::conjugate_by_cnot(&pauli::conjugate_by_cnot(&t, 0, 1)?, 0, 1)?;
            if twice != t {
                return Ok(Err(format!("{} not restored", t.label())));
            }
        }
    }
    Ok(Ok(()))
}

fn frames_preserve_unitary() -> Result<std::result::Result<(), String>> {
    let mut c = Circuit::new(2)?;
    c.push(Gate::Cnot { control: 0, target: 1 })?;
    let u = engine::circuit_unitary(&c, &[])?;
    for f in FramePair::all() {
        let v = engine::circuit_unitary(&noise::apply_pauli_frame(&c, &[f])?, &[])?;
        // Equal up to a global phase.
        let phase = (0..4).flat_map(|i| (0..4).map(move |j| (i, j))).find(|&(i, j)| u[i][j].norm() > 0.5).map(|(i, j)| v[i][j] / u[i][j]);
        let phase = phase.unwrap_or(Complex64::new(1.0, 0.0));
        let err: f64 = (0..4).flat_map(|i| (0..4).map(move |j| (i, j))).map(|(i, j)| (v[i][j] - phase * u[i][j]).norm()).sum();
        if err > 1e-10 {
            return Ok(Err(format!("frame {f:?} changes the gate")));
        }
    }
    Ok(Ok(()))
}

fn shift_rule_gradient() -> Result<std::result::Result<(), String>> {
    let mp = ModelParams::new(4, 0.4, 0.3, Boundary::Open)?;
    let spec = AnsatzSpec::for_model(&mp);
    let cost = EnergyCost::new(vqe::build_ansatz(&spec)?, model::build_hamiltonian(&mp)?)?;
    let p = vqe::random_params(&spec, 1.0, 7);
    let g = cost.gradient(&p)?;
    let h = 1e-5;
    for k in 0..p.len() {
        let (mut a, mut b) = (p.clone(), p.clone());
        a[k] += h;
        b[k] -= h;
        let fd = (cost.value(&a)? - cost.value(&b)?) / (2.0 * h);
        if (fd - g[k]).abs() > 1e-6 {
            return Ok(Err(format!("slot {k}: shift {} vs difference {fd}", g[k])));
        }
    }
    Ok(Ok(()))
}

fn hellmann_feynman() -> Result<std::result::Result<(), String>> {
    let mp = ModelParams::new(6, 0.3, 0.2, Boundary::Open)?;
    let spec = model::exact_diagonalize(&mp, None, None)?;
    let hf = spec.matrix_elements_from_ground(&model::build_ha(&mp)?)?[0];
    let h = 1e-4;
    let e = |j2: f64| -> Result<f64> { Ok(model::exact_diagonalize(&mp.with_j2(j2), Some(1), None)?.ground_energy()) };
    let fd = (e(mp.j2 + h)? - e(mp.j2 - h)?) / (2.0 * h);
    Ok(ensure((hf - fd).abs() < 1e-4, || format!("⟨H_A⟩ = {hf}, difference = {fd}")))
}

fn ideal_calibration() -> Result<std::result::Result<(), String>> {
    let cal = mitigation::trex_calibrate(&IdealExecutor, 3, 3000, 8, 5)?;
    Ok(ensure(cal.factors.iter().all(|&c| c == 1.0), || format!("factors {:?}", cal.factors)))
}

fn zne_exact_model() -> Result<std::result::Result<(), String>> {
    let pts: Vec<_> = [1u32, 3, 5].iter().map(|&l| (l, Estimate::new(-4.0 * (-0.05 * l as f64).exp(), 0.0))).collect();
    let fit = mitigation::zne_fit(&pts)?;
    Ok(ensure((fit.e0 + 4.0).abs() < 1e-9 && (fit.a + 0.05).abs() < 1e-9, || format!("E0 {} a {}", fit.e0, fit.a)))
}

fn flip_alignment() -> Result<std::result::Result<(), String>> {
    let up = Statevector::zero(4)?;
    let down = Statevector::basis_state(4, 0b1111)?;
    let (chi, g) = analysis::statevector_fs(&up, &down, &SymmetryGroup::flip_only(4))?;
    Ok(ensure(chi.abs() < 1e-12 && g == "flip", || format!("chi {chi} via {g}")))
}

fn sampling_determinism() -> Result<std::result::Result<(), String>> {
    let mut c = Circuit::new(3)?;
    c.push(Gate::Ry { qubit: 0, angle: engine::Angle::Fixed(0.7) })?;
    c.push(Gate::Cnot { control: 0, target: 2 })?;
    let s = engine::run(&c, &[])?;
    let a = engine::sample_counts(&s, Basis::Z, 5000, 11)?;
    let b = engine::sample_counts(&s, Basis::Z, 5000, 11)?;
    Ok(ensure(a == b && a.is_consistent(), || "repeated sampling differs".into()))
}

/// Run every check; failures carry a message.
pub fn run() -> Vec<Check> {
    type CheckFn = fn() -> Result<std::result::Result<(), String>>;
    let checks: [(&'static str, CheckFn); 8] = [
        ("cnot-conjugation-involution", cnot_involution),
        ("twirl-frames-preserve-cnot", frames_preserve_unitary),
        ("parameter-shift-gradient", shift_rule_gradient),
        ("hellmann-feynman", hellmann_feynman),
        ("ideal-readout-calibration", ideal_calibration),
        ("zne-exact-model", zne_exact_model),
        ("flip-generator-alignment", flip_alignment),
        ("sampling-determinism", sampling_determinism),
    ];
    checks
        .iter()
        .map(|(name, f)| Check { name, outcome: f().unwrap_or_else(|e| Err(e.to_string())) })
        .collect()
}
