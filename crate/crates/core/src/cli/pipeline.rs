//! Batch pipeline behind the subcommands.
//!
//! Layout of a run directory:
//!
//! ```text
//! <output_dir>/<hash>/
//!   manifest.json
//!   params/point_000.json ...
//!   records/point_000.jsonl ...
//!   points/point_000.json ...      per-point ScanRecord sidecars
//!   results.csv
//!   report.json
//!   ed/summary.csv, ed/spectrum_000.csv ...
//! ```

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ScanConfig;
use crate::analysis::{
    self, CorrelationBasis, CorrelationMatrix, DetectionPolicy, ReliabilityNote, ScanRecord, SymmetryGroup,
    TransitionInterval,
};
use crate::engine::{self, Circuit};
use crate::error::{Error, Result};
use crate::mitigation::{self, EnsembleSpec, FitKind, CALIBRATION_ID};
use crate::model::{self, ModelParams};
use crate::noise::{self, Basis, Executor, IdealExecutor, MeasurementRecord, NoisyExecutor};
use crate::pauli;
use crate::vqe::{self, ParamsFile, ScanPoint};

pub const RESULTS_SCHEMA: &str = "# phase-scope results schema=1";
pub const MANIFEST_SCHEMA: &str = "phase-scope manifest v1";

/// Flags that mark a point as failed rather than merely annotated.
pub const FAILURE_FLAGS: [&str; 3] = ["missing-params", "optimize-failed", "execution-failed"];

/// Largest chain for which scans attach exact-diagonalization references.
pub const ED_REFERENCE_MAX_SITES: usize = 10;

const FD_STEP: f64 = 1e-4;

pub fn is_failure(flag: &str) -> bool {
    FAILURE_FLAGS.iter().any(|f| flag == *f || flag.starts_with(&format!("{f}:")))
}

#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn for_config(cfg: &ScanConfig) -> Result<Self> {
        Ok(Self { root: cfg.run_dir()? })
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.json")
    }

    pub fn params(&self, i: usize) -> PathBuf {
        self.root.join("params").join(format!("point_{i:03}.json"))
    }

    pub fn records(&self, i: usize) -> PathBuf {
        self.root.join("records").join(format!("point_{i:03}.jsonl"))
    }

    pub fn point(&self, i: usize) -> PathBuf {
        self.root.join("points").join(format!("point_{i:03}.json"))
    }

    pub fn results(&self) -> PathBuf {
        self.root.join("results.csv")
    }

    pub fn report(&self) -> PathBuf {
        self.root.join("report.json")
    }

    pub fn ed_dir(&self) -> PathBuf {
        self.root.join("ed")
    }

    fn create(&self) -> Result<()> {
        for d in ["params", "records", "points"] {
            fs::create_dir_all(self.root.join(d))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestPoint {
    pub index: usize,
    pub j2: f64,
    pub params: Option<String>,
    pub converged: bool,
    pub final_cost: Option<f64>,
    pub start: String,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: String,
    pub config_hash: String,
    pub config: serde_json::Value,
    pub points: Vec<ManifestPoint>,
}

fn pool(cfg: &ScanConfig) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("worker pool: {e}")))
}

fn write_atomic(path: &Path, body: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, body)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub struct OptimizeOutcome {
    pub run_dir: PathBuf,
    pub points: Vec<ScanPoint>,
}

impl OptimizeOutcome {
    pub fn total_failure(&self) -> bool {
        !self.points.is_empty() && self.points.iter().all(|p| p.report.is_err())
    }
}

/// Optimize every grid point and archive the parameters.
pub fn cmd_optimize(cfg: &ScanConfig) -> Result<OptimizeOutcome> {
    let layout = Layout::for_config(cfg)?;
    layout.create()?;
    let grid = cfg.grid()?;
    let spec = cfg.ansatz();
    let strategy = cfg.strategy();
    let points = if grid.is_empty() {
        Vec::new()
    } else {
        pool(cfg)?.install(|| vqe::scan_optimize(&grid, &spec, &strategy))?
    };

    let files = params_from_points(&points, &spec, strategy.seed);
    let mut entries = Vec::with_capacity(points.len());
    for (i, (p, file)) in points.iter().zip(&files).enumerate() {
        let path = layout.params(i);
        match file {
            Some(f) => write_atomic(&path, f.to_json()?.as_bytes())?,
            None if path.exists() => fs::remove_file(&path)?,
            None => {}
        }
        entries.push(ManifestPoint {
            index: i,
            j2: p.model.j2,
            params: file.as_ref().map(|_| format!("params/point_{i:03}.json")),
            converged: file.as_ref().is_some_and(|f| f.converged),
            final_cost: file.as_ref().map(|f| f.final_cost),
            start: p.start.clone(),
            error: p.report.as_ref().err().cloned(),
        });
    }
    let manifest = Manifest {
        schema: MANIFEST_SCHEMA.into(),
        config_hash: cfg.content_hash()?,
        config: serde_json::from_str(&cfg.canonical_json()?)?,
        points: entries,
    };
    write_atomic(&layout.manifest(), (serde_json::to_string_pretty(&manifest)? + "\n").as_bytes())?;
    Ok(OptimizeOutcome { run_dir: layout.root, points })
}

fn load_params(layout: &Layout, i: usize, mp: &ModelParams, spec: &vqe::AnsatzSpec) -> Option<ParamsFile> {
    let text = fs::read_to_string(layout.params(i)).ok()?;
    let p = ParamsFile::from_json(&text).ok()?;
    (p.model == *mp && p.ansatz == *spec).then_some(p)
}

fn executor(cfg: &ScanConfig) -> Result<Box<dyn Executor>> {
    Ok(match cfg.noise.model()? {
        None => Box::new(IdealExecutor),
        Some(m) => Box::new(NoisyExecutor::new(m)?),
    })
}

pub fn energy_id(basis: Basis) -> String {
    format!("energy:{basis:?}")
}

/// Every record one scan point needs: calibration, the energy ensembles at each
/// folding factor and basis, and the overlap circuits toward the next point.
#[allow(clippy::too_many_arguments)]
pub fn measure_point(
    cfg: &ScanConfig,
    executor: &dyn Executor,
    circuit: &Circuit,
    params: &[f64],
    next: Option<&[f64]>,
    group: &SymmetryGroup,
    seed: u64,
) -> Result<Vec<MeasurementRecord>> {
    let m = &cfg.mitigation;
    let n = circuit.num_qubits();
    let mut out = Vec::new();
    if m.trex {
        out.extend(mitigation::trex_calibration_records(
            executor,
            n,
            m.calibration_shots,
            m.instances,
            noise::derive_seed(seed, 1),
        )?);
    }
    let lambdas = if m.zne { m.lambdas.clone() } else { vec![1] };
    for (li, &lambda) in lambdas.iter().enumerate() {
        for (bi, basis) in [Basis::Z, Basis::X].into_iter().enumerate() {
            let spec = EnsembleSpec { instances: m.instances, pauli_twirl: m.twirl, readout_twirl: m.trex, lambda };
            let s = noise::derive_seed(seed, 16 + 2 * li as u64 + bi as u64);
            out.extend(mitigation::execute_ensemble(
                circuit,
                params,
                executor,
                basis,
                cfg.shots,
                &spec,
                s,
                &energy_id(basis),
            )?);
        }
    }
    if let Some(next) = next {
        let recs = analysis::fs_records(
            (circuit, params),
            (circuit, next),
            group,
            executor,
            cfg.fs_shots,
            noise::derive_seed(seed, 2),
        )?;
        out.extend(recs.into_iter().map(|(_, r)| r));
    }
    Ok(out)
}

fn keep<T>(flags: &mut Vec<String>, what: &str, r: Result<T>) -> Option<T> {
    match r {
        Ok(v) => Some(v),
        Err(e) => {
            flags.push(format!("{what}: {e}"));
            None
        }
    }
}

/// Derive every measured quantity of a point from its records alone.
///
/// TREX is applied when calibration records are present and ZNE when energy
/// records span more than one folding factor.
pub fn summarize(mp: &ModelParams, records: &[MeasurementRecord]) -> Result<ScanRecord> {
    let n = mp.num_sites;
    let mut rec = ScanRecord::new(*mp);
    let flags = &mut rec.flags;
    let cal_recs: Vec<_> = records.iter().filter(|r| r.meta.circuit_id == CALIBRATION_ID).cloned().collect();
    let energy: Vec<_> = records.iter().filter(|r| r.meta.circuit_id.starts_with("energy:")).cloned().collect();
    let overlaps: Vec<_> = records
        .iter()
        .filter_map(|r| r.meta.circuit_id.strip_prefix("overlap:").map(|l| (l.to_string(), r.clone())))
        .collect();
    let base: Vec<_> = energy.iter().filter(|r| r.meta.noise_scale == 1).cloned().collect();

    let cal = if cal_recs.is_empty() {
        None
    } else {
        keep(flags, "trex-calibration", mitigation::calibration_from_records(&cal_recs, n))
    };
    if cal.as_ref().is_some_and(|c| c.low_confidence) {
        flags.push("trex-low-confidence".into());
    }

    if !base.is_empty() {
        let h = model::build_hamiltonian(mp)?;
        rec.energy_raw = keep(flags, "energy-raw", pauli::expectation_from_counts(&h, &base));
        if let Some(c) = &cal {
            rec.energy_trex = keep(flags, "energy-trex", mitigation::trex_correct(&h, &base, c));
        }
        let scales: BTreeSet<u32> = energy.iter().map(|r| r.meta.noise_scale).collect();
        if scales.len() >= 2 {
            let fit = mitigation::estimates_by_lambda(&h, &energy, cal.as_ref()).and_then(|e| mitigation::zne_fit(&e));
            rec.zne = keep(flags, "zne", fit);
            if rec.zne.as_ref().is_some_and(|z| z.kind == FitKind::Linear) {
                flags.push("zne-linear-fallback".into());
            }
        }
        rec.derivative_raw = keep(flags, "derivative-raw", analysis::energy_derivative_from_records(&base, mp, None));
        rec.derivative = match &cal {
            Some(c) => keep(flags, "derivative", analysis::energy_derivative_from_records(&base, mp, Some(c))),
            None => rec.derivative_raw,
        };
        rec.zz = keep(flags, "zz", CorrelationMatrix::from_records(&base, CorrelationBasis::ZZ, n, cal.as_ref()));
        rec.xx = keep(flags, "xx", CorrelationMatrix::from_records(&base, CorrelationBasis::XX, n, cal.as_ref()));
    }
    if !overlaps.is_empty() {
        rec.chi_next = keep(flags, "fs", analysis::fs_from_records(&overlaps));
    }
    Ok(rec)
}

/// Noise-free and exact references for a point.
pub fn add_references(rec: &mut ScanRecord, circuit: &Circuit, params: &[f64], with_ed: bool) -> Result<()> {
    let mp = rec.model;
    let state = engine::run(circuit, params)?;
    rec.energy_ideal = Some(engine::expectation(&state, &model::build_hamiltonian(&mp)?)?);
    rec.derivative_ideal = Some(analysis::energy_derivative_from_state(&state, &mp)?);
    if with_ed && mp.num_sites <= ED_REFERENCE_MAX_SITES {
        let e0 = |j2: f64| -> Result<f64> { Ok(model::exact_diagonalize(&mp.with_j2(j2), Some(1), None)?.ground_energy()) };
        rec.energy_ed = Some(e0(mp.j2)?);
        rec.derivative_ed = Some((e0(mp.j2 + FD_STEP)? - e0(mp.j2 - FD_STEP)?) / (2.0 * FD_STEP));
    }
    Ok(())
}

pub struct ScanOutcome {
    pub run_dir: PathBuf,
    pub scan: Vec<ScanRecord>,
}

impl ScanOutcome {
    pub fn failed_points(&self) -> usize {
        self.scan.iter().filter(|r| r.flags.iter().any(|f| is_failure(f))).count()
    }
}

/// Archived parameters for each grid point, `None` where optimization failed.
pub fn params_from_points(points: &[ScanPoint], spec: &vqe::AnsatzSpec, seed: u64) -> Vec<Option<ParamsFile>> {
    points
        .iter()
        .map(|p| {
            p.report.as_ref().ok().map(|rep| ParamsFile {
                model: p.model,
                ansatz: *spec,
                angles: rep.final_params.clone(),
                final_cost: rep.final_cost,
                seed,
                converged: rep.converged,
                start: p.start.clone(),
            })
        })
        .collect()
}

/// Execute and summarize every point. With a layout, records and sidecars are
/// written as each point finishes.
pub fn execute_points(cfg: &ScanConfig, params: &[Option<ParamsFile>], layout: Option<&Layout>) -> Result<Vec<ScanRecord>> {
    let grid = cfg.grid()?;
    if params.len() != grid.len() {
        return Err(Error::SizeMismatch { expected: grid.len(), got: params.len() });
    }
    if grid.is_empty() {
        return Ok(Vec::new());
    }
    let spec = cfg.ansatz();
    let circuit = vqe::build_ansatz(&spec)?;
    let group = SymmetryGroup::for_model(&grid[0])?;
    let exec = executor(cfg)?;

    let run_point = |i: usize| -> Result<ScanRecord> {
        let mp = grid[i];
        let Some(p) = &params[i] else {
            let mut rec = ScanRecord::new(mp);
            rec.flags.push("missing-params".into());
            return Ok(rec);
        };
        let next = params.get(i + 1).and_then(|p| p.as_ref()).map(|p| p.angles.as_slice());
        let seed = noise::derive_seed(cfg.seed, 0x1000 + i as u64);
        let mut rec = match measure_point(cfg, exec.as_ref(), &circuit, &p.angles, next, &group, seed) {
            Ok(records) => {
                if let Some(layout) = layout {
                    let mut body = String::new();
                    for r in &records {
                        body.push_str(&r.to_json_line()?);
                        body.push('\n');
                    }
                    write_atomic(&layout.records(i), body.as_bytes())?;
                }
                summarize(&mp, &records)?
            }
            Err(e) => {
                let mut rec = ScanRecord::new(mp);
                rec.flags.push(format!("execution-failed: {e}"));
                rec
            }
        };
        if !p.converged {
            rec.flags.push("not-converged".into());
        }
        add_references(&mut rec, &circuit, &p.angles, cfg.reference.ed)?;
        if let Some(layout) = layout {
            write_atomic(&layout.point(i), serde_json::to_string_pretty(&rec)?.as_bytes())?;
        }
        Ok(rec)
    };
    pool(cfg)?.install(|| (0..grid.len()).into_par_iter().map(run_point).collect())
}

/// Execute, archive and summarize every point, then write `results.csv`.
/// Optimizes first when the run directory has no parameter archive yet.
pub fn cmd_scan(cfg: &ScanConfig) -> Result<ScanOutcome> {
    let layout = Layout::for_config(cfg)?;
    if !layout.manifest().exists() {
        cmd_optimize(cfg)?;
    }
    layout.create()?;
    let spec = cfg.ansatz();
    let params: Vec<Option<ParamsFile>> =
        cfg.grid()?.iter().enumerate().map(|(i, mp)| load_params(&layout, i, mp, &spec)).collect();
    let scan = execute_points(cfg, &params, Some(&layout))?;
    let lambdas = if cfg.mitigation.zne { cfg.mitigation.lambdas.clone() } else { Vec::new() };
    write_results(&scan, &lambdas, fs::File::create(layout.results())?)?;
    Ok(ScanOutcome { run_dir: layout.root, scan })
}

fn num(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x}"))
}

/// Results table with one row per point, preceded by a schema comment line.
pub fn write_results<W: Write>(scan: &[ScanRecord], lambdas: &[u32], mut out: W) -> Result<()> {
    writeln!(out, "{RESULTS_SCHEMA}")?;
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = ["index", "j2", "num_sites", "boundary", "bx", "E_raw", "E_raw_err", "E_trex", "E_trex_err"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for l in lambdas {
        header.push(format!("E_lambda{l}"));
        header.push(format!("err{l}"));
    }
    header.extend(
        [
            "E0", "E0_err", "a", "fit_kind", "E0_linear", "E0_linear_err", "E_ideal", "E_ed", "dE", "dE_err", "dE_raw",
            "dE_raw_err", "dE_ideal", "dE_ed", "chi_next", "chi_err", "chi_generator", "j2_mid", "flags",
        ]
        .iter()
        .map(|s| s.to_string()),
    );
    w.write_record(&header)?;
    for (i, r) in scan.iter().enumerate() {
        let m = &r.model;
        let mut row = vec![
            i.to_string(),
            format!("{}", m.j2),
            m.num_sites.to_string(),
            format!("{:?}", m.boundary).to_lowercase(),
            format!("{}", m.bx),
            num(r.energy_raw.map(|e| e.value)),
            num(r.energy_raw.map(|e| e.stderr)),
            num(r.energy_trex.map(|e| e.value)),
            num(r.energy_trex.map(|e| e.stderr)),
        ];
        for l in lambdas {
            let est = r.zne.as_ref().and_then(|z| z.lambdas.iter().position(|x| x == l).map(|k| z.estimates[k]));
            row.push(num(est.map(|e| e.value)));
            row.push(num(est.map(|e| e.stderr)));
        }
        let z = r.zne.as_ref();
        row.extend([
            num(z.map(|z| z.e0)),
            num(z.map(|z| z.e0_stderr)),
            num(z.map(|z| z.a)),
            z.map_or_else(String::new, |z| format!("{:?}", z.kind).to_lowercase()),
            num(z.map(|z| z.linear_e0)),
            num(z.map(|z| z.linear_e0_stderr)),
            num(r.energy_ideal),
            num(r.energy_ed),
            num(r.derivative.map(|e| e.value)),
            num(r.derivative.map(|e| e.stderr)),
            num(r.derivative_raw.map(|e| e.value)),
            num(r.derivative_raw.map(|e| e.stderr)),
            num(r.derivative_ideal),
            num(r.derivative_ed),
            num(r.chi_next.as_ref().map(|c| c.chi)),
            num(r.chi_next.as_ref().map(|c| c.stderr)),
            r.chi_next.as_ref().map_or_else(String::new, |c| c.generator.clone()),
            num(scan.get(i + 1).filter(|_| r.chi_next.is_some()).map(|n| 0.5 * (m.j2 + n.model.j2))),
            r.flags.join(";"),
        ]);
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub intervals: Vec<TransitionInterval>,
    pub notes: Vec<ReliabilityNote>,
    /// Cyclic shift undone at each point to align it with its predecessor.
    pub shifts: Vec<usize>,
}

/// Align the correlation chain and run detection.
pub fn analyze_scan(scan: &mut [ScanRecord], policy: &DetectionPolicy) -> Result<AnalysisReport> {
    let shifts = analysis::align_chain(scan)?;
    let det = analysis::detect_transitions(scan, policy);
    Ok(AnalysisReport { intervals: det.intervals, notes: det.notes, shifts })
}

/// Rebuild a point from its archived records, keeping references and
/// pipeline flags from the sidecar.
pub fn reload_point(layout: &Layout, i: usize) -> Result<Option<ScanRecord>> {
    let side = match fs::read_to_string(layout.point(i)) {
        Ok(t) => serde_json::from_str::<ScanRecord>(&t)?,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(e.into()),
    };
    let records = match fs::read_to_string(layout.records(i)) {
        Ok(t) => noise::read_records(&t)?,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Some(side)),
        Err(e) => return Err(e.into()),
    };
    let mut rec = summarize(&side.model, &records)?;
    rec.energy_ideal = side.energy_ideal;
    rec.energy_ed = side.energy_ed;
    rec.derivative_ideal = side.derivative_ideal;
    rec.derivative_ed = side.derivative_ed;
    let mut flags: Vec<String> =
        side.flags.into_iter().filter(|f| is_failure(f) || f == "not-converged").collect();
    flags.append(&mut rec.flags);
    rec.flags = flags;
    Ok(Some(rec))
}

pub struct AnalyzeOutcome {
    pub run_dir: PathBuf,
    pub report: AnalysisReport,
}

/// Re-derive every point from the record archive, then detect and write `report.json`.
pub fn cmd_analyze(cfg: &ScanConfig) -> Result<AnalyzeOutcome> {
    let layout = Layout::for_config(cfg)?;
    let mut scan = Vec::new();
    for i in 0..cfg.model.j2.len() {
        if let Some(rec) = reload_point(&layout, i)? {
            scan.push(rec);
        }
    }
    let report = analyze_scan(&mut scan, &cfg.detection)?;
    fs::create_dir_all(&layout.root)?;
    write_atomic(&layout.report(), (serde_json::to_string_pretty(&report)? + "\n").as_bytes())?;
    Ok(AnalyzeOutcome { run_dir: layout.root, report })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdRow {
    pub j2: f64,
    pub e0: f64,
    pub e1: Option<f64>,
    pub ground_degeneracy: usize,
    pub sector: String,
    /// `⟨H_A⟩` in the returned ground state.
    pub derivative: f64,
    pub chi: Option<f64>,
    pub curvature: Option<f64>,
}

pub struct EdOutcome {
    pub run_dir: PathBuf,
    pub rows: Vec<EdRow>,
}

/// Exact spectra, ground states and perturbative quantities for every grid point.
pub fn cmd_ed(cfg: &ScanConfig) -> Result<EdOutcome> {
    let layout = Layout::for_config(cfg)?;
    let dir = layout.ed_dir();
    fs::create_dir_all(&dir)?;
    let grid = cfg.grid()?;
    let rows: Vec<EdRow> = pool(cfg)?.install(|| {
        grid.par_iter()
            .enumerate()
            .map(|(i, mp)| {
                let spec = model::exact_diagonalize(mp, None, None)?;
                let ha = model::build_ha(mp)?;
                model::write_spectrum_csv(&spec, fs::File::create(dir.join(format!("spectrum_{i:03}.csv")))?)?;
                model::write_amplitudes(&spec.state(0), fs::File::create(dir.join(format!("ground_{i:03}.bin")))?)?;
                let full = !spec.is_truncated();
                Ok(EdRow {
                    j2: mp.j2,
                    e0: spec.ground_energy(),
                    e1: spec.energies().get(1).copied(),
                    ground_degeneracy: spec.ground_degeneracy(),
                    sector: format!("{:?}", spec.sector(0)).to_lowercase(),
                    derivative: spec.matrix_elements_from_ground(&ha)?[0],
                    chi: full.then(|| model::perturbative_chi(&spec, &ha).ok()).flatten(),
                    curvature: full.then(|| model::second_derivative(&spec, &ha).ok()).flatten(),
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let mut w = csv::Writer::from_path(dir.join("summary.csv"))?;
    w.write_record(["j2", "E0", "E1", "ground_degeneracy", "sector", "dE_dJ2", "chi", "d2E_dJ2"])?;
    for r in &rows {
        w.write_record([
            format!("{}", r.j2),
            format!("{}", r.e0),
            num(r.e1),
            r.ground_degeneracy.to_string(),
            r.sector.clone(),
            format!("{}", r.derivative),
            num(r.chi),
            num(r.curvature),
        ])?;
    }
    w.flush()?;
    Ok(EdOutcome { run_dir: layout.root, rows })
}
