//! Scan configuration: one JSON document plus dotted command-line overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::analysis::DetectionPolicy;
use crate::error::{Error, Result};
use crate::model::{Boundary, ModelParams};
use crate::noise::{ConfusionModel, NoiseModel};
use crate::vqe::{AnsatzSpec, ScanStrategy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub num_sites: usize,
    pub boundary: Boundary,
    pub bx: f64,
    /// Strictly increasing J2 values.
    pub j2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnsatzConfig {
    #[serde(default = "default_layers")]
    pub layers: usize,
}

fn default_layers() -> usize {
    1
}

impl Default for AnsatzConfig {
    fn default() -> Self {
        Self { layers: 1 }
    }
}

/// Device noise parameters; missing fields take the default device values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    pub p2: f64,
    pub coherent_angle: f64,
    pub p01: f64,
    pub p10: f64,
    /// Per-qubit readout overriding `p01`/`p10`.
    pub readout: Option<Vec<ConfusionModel>>,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        let d = NoiseModel::default_device();
        Self {
            p2: d.cnot_pauli_error,
            coherent_angle: d.cnot_coherent_angle,
            p01: d.readout[0].p01,
            p10: d.readout[0].p10,
            readout: None,
        }
    }
}

impl NoiseConfig {
    pub fn model(&self) -> NoiseModel {
        let mut m = NoiseModel::uniform(self.p2, self.coherent_angle, self.p01, self.p10);
        if let Some(r) = &self.readout {
            m.readout = r.clone();
        }
        m
    }
}

/// `"ideal"` or a noise parameter object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NoiseSetting {
    Named(String),
    Model(NoiseConfig),
}

impl NoiseSetting {
    pub fn model(&self) -> Result<Option<NoiseModel>> {
        match self {
            NoiseSetting::Named(s) if s == "ideal" => Ok(None),
            NoiseSetting::Named(s) if s == "default" => Ok(Some(NoiseModel::default_device())),
            NoiseSetting::Named(s) => Err(Error::Parse(format!("unknown noise setting `{s}`"))),
            NoiseSetting::Model(c) => {
                let m = c.model();
                m.validate()?;
                Ok(Some(m))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MitigationConfig {
    pub trex: bool,
    pub twirl: bool,
    pub zne: bool,
    /// Randomized instances per (basis, λ).
    pub instances: usize,
    pub lambdas: Vec<u32>,
    pub calibration_shots: u64,
}

impl Default for MitigationConfig {
    fn default() -> Self {
        Self { trex: true, twirl: true, zne: true, instances: 16, lambdas: vec![1, 3, 5], calibration_shots: 100_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReferenceConfig {
    /// Exact-diagonalization columns (chains up to 12 sites).
    pub ed: bool,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        Self { ed: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    pub model: GridConfig,
    #[serde(default)]
    pub ansatz: AnsatzConfig,
    #[serde(default)]
    pub optimizer: ScanStrategy,
    #[serde(default = "ideal")]
    pub noise: NoiseSetting,
    #[serde(default)]
    pub mitigation: MitigationConfig,
    /// Shots per (basis, λ), split across instances.
    #[serde(default = "default_shots")]
    pub shots: u64,
    /// Shots per overlap circuit.
    #[serde(default = "default_fs_shots")]
    pub fs_shots: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub reference: ReferenceConfig,
    #[serde(default)]
    pub detection: DetectionPolicy,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    /// Worker threads for scan points; 0 uses all cores.
    #[serde(default)]
    pub workers: usize,
}

fn ideal() -> NoiseSetting {
    NoiseSetting::Named("ideal".into())
}

fn default_shots() -> u64 {
    100_000
}

fn default_fs_shots() -> u64 {
    20_000
}

fn default_output() -> PathBuf {
    PathBuf::from("runs")
}

impl ScanConfig {
    pub fn from_json(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut doc: Value = serde_json::from_str(text).map_err(|e| Error::Parse(format!("config: {e}")))?;
        for (path, raw) in overrides {
            set_path(&mut doc, path, raw)?;
        }
        let cfg: ScanConfig = serde_json::from_value(doc).map_err(|e| Error::Parse(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?, overrides)
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.model;
        if g.j2.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("J2 list must be strictly increasing".into()));
        }
        for mp in self.grid()? {
            mp.validate()?;
        }
        AnsatzSpec::new(g.num_sites, self.ansatz.layers, g.boundary)?;
        self.noise.model()?;
        let m = &self.mitigation;
        if m.instances == 0 {
            return Err(Error::InvalidArgument("mitigation.instances must be positive".into()));
        }
        if m.lambdas.iter().any(|l| l % 2 == 0) || !m.lambdas.contains(&1) {
            return Err(Error::InvalidArgument("lambdas must be odd and include 1".into()));
        }
        if m.zne && m.lambdas.len() < 2 {
            return Err(Error::InvalidArgument("ZNE needs at least two lambdas".into()));
        }
        if self.shots == 0 || self.fs_shots == 0 || (m.trex && m.calibration_shots == 0) {
            return Err(Error::InvalidArgument("shot counts must be positive".into()));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Vec<ModelParams>> {
        let g = &self.model;
        Ok(g.j2
            .iter()
            .map(|&j2| ModelParams { num_sites: g.num_sites, j1: 1.0, j2, bx: g.bx, boundary: g.boundary })
            .collect())
    }

    pub fn ansatz(&self) -> AnsatzSpec {
        AnsatzSpec { num_qubits: self.model.num_sites, layers: self.ansatz.layers, boundary: self.model.boundary }
    }

    /// Optimizer strategy with its seed tied to the master seed.
    pub fn strategy(&self) -> ScanStrategy {
        ScanStrategy { seed: crate::noise::derive_seed(self.seed, self.optimizer.seed), ..self.optimizer.clone() }
    }

    /// Canonical JSON of the fields that affect results.
    pub fn canonical_json(&self) -> Result<String> {
        let mut c = self.clone();
        c.workers = 0;
        c.output_dir = PathBuf::new();
        Ok(serde_json::to_string(&c)?)
    }

    /// Git blob hash (SHA-256 object format) of the canonical JSON.
    pub fn content_hash(&self) -> Result<String> {
        let body = self.canonical_json()?;
        let mut h = Sha256::new();
        h.update(format!("blob {}\0", body.len()).as_bytes());
        h.update(body.as_bytes());
        Ok(hex::encode(h.finalize()))
    }

    pub fn run_dir(&self) -> Result<PathBuf> {
        Ok(self.output_dir.join(&self.content_hash()?[..16]))
    }
}

/// Turn `--a.b value` pairs into overrides.
pub fn parse_overrides(args: &[String]) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut it = args.iter();
    while let Some(flag) = it.next() {
        let key = flag
            .strip_prefix("--")
            .filter(|k| !k.is_empty())
            .ok_or_else(|| Error::Parse(format!("expected `--<path> <value>`, got `{flag}`")))?;
        let (key, value) = match key.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => {
                let v = it.next().ok_or_else(|| Error::Parse(format!("missing value for `--{key}`")))?;
                (key.to_string(), v.clone())
            }
        };
        out.push((key, value));
    }
    Ok(out)
}

/// Set a dotted path, creating objects along the way. Values parse as JSON when
/// possible and fall back to strings.
pub fn set_path(doc: &mut Value, path: &str, raw: &str) -> Result<()> {
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut cur = doc;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(Error::Parse(format!("bad override path `{path}`")));
        }
        if !cur.is_object() {
            *cur = Value::Object(Default::default());
        }
        let obj = cur.as_object_mut().expect("object");
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        cur = obj.entry(part.to_string()).or_insert(Value::Object(Default::default()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{"model": {"num_sites": 4, "boundary": "open", "bx": 0.1, "j2": [0.2, 0.3]}}"#;

    #[test]
    fn defaults_and_overrides() {
        let cfg = ScanConfig::from_json(BASE, &[]).unwrap();
        assert_eq!(cfg.noise, NoiseSetting::Named("ideal".into()));
        assert_eq!(cfg.mitigation.lambdas, vec![1, 3, 5]);
        let ov = parse_overrides(&["--noise.p2".into(), "0.05".into(), "--seed=9".into()]).unwrap();
        let cfg = ScanConfig::from_json(BASE, &ov).unwrap();
        let m = cfg.noise.model().unwrap().unwrap();
        assert_eq!(m.cnot_pauli_error, 0.05);
        assert_eq!(m.readout[0].p10, 0.04);
        assert_eq!(cfg.seed, 9);
    }

    #[test]
    fn invalid_configs() {
        let bad = r#"{"model": {"num_sites": 4, "boundary": "open", "bx": 0.1, "j2": [0.3, 0.2]}}"#;
        assert!(ScanConfig::from_json(bad, &[]).is_err());
        assert!(ScanConfig::from_json(BASE, &[("mitigation.lambdas".into(), "[1, 2]".into())]).is_err());
        assert!(ScanConfig::from_json(BASE, &[("bogus".into(), "1".into())]).is_err());
        assert!(ScanConfig::from_json(BASE, &[("noise".into(), "loud".into())]).is_err());
        assert!(parse_overrides(&["seed".into()]).is_err());
        assert!(parse_overrides(&["--seed".into()]).is_err());
    }

    #[test]
    fn hash_ignores_workers_and_output() {
        let a = ScanConfig::from_json(BASE, &[]).unwrap();
        let b = ScanConfig::from_json(BASE, &[("workers".into(), "3".into()), ("output_dir".into(), "elsewhere".into())]).unwrap();
        assert_eq!(a.content_hash().unwrap(), b.content_hash().unwrap());
        let c = ScanConfig::from_json(BASE, &[("seed".into(), "1".into())]).unwrap();
        assert_ne!(a.content_hash().unwrap(), c.content_hash().unwrap());
        assert_eq!(a.content_hash().unwrap().len(), 64);
    }
}
