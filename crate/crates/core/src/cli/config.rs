//! Run configuration (JSON, unknown keys rejected).
//!
//! ```json
//! {
//!   "model":    { "N": 4, "k": 3, "m": 1, "layers": 2, "seed": 0 },
//!   "training": { "epochs": 300, "lr": 0.01,
//!                 "kernels": [{ "kind": "gaussian", "sigma": "median", "ell_max": 2, "n_ops": 200 }],
//!                 "resample": true, "exact": false },
//!   "data":     { "train": "train.txt", "test": "test.txt" },
//!   "output":   { "dir": "run", "checkpoint_every": 10 }
//! }
//! ```
//!
//! Relative data and output paths resolve against the configuration file's
//! directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::datagen::BitDataset;
use crate::error::{invalid, Result};
use crate::loss::{median_heuristic, KernelKind, KernelSpec};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    pub training: TrainingSection,
    pub data: DataSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(rename = "N")]
    pub registers: usize,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default = "default_layers")]
    pub layers: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_k() -> usize {
    3
}

fn default_m() -> usize {
    1
}

fn default_layers() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Sigma {
    Value(f64),
    /// Must be the string `"median"`.
    Heuristic(String),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelEntry {
    pub kind: KernelKind,
    #[serde(default)]
    pub sigma: Option<Sigma>,
    #[serde(default = "default_ell_max")]
    pub ell_max: usize,
    #[serde(default = "default_n_ops")]
    pub n_ops: usize,
}

fn default_ell_max() -> usize {
    2
}

fn default_n_ops() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
    pub epochs: usize,
    pub lr: f64,
    pub kernels: Vec<KernelEntry>,
    #[serde(default = "default_resample")]
    pub resample: bool,
    /// Enumerate all strings up to `ell_max` instead of sampling `n_ops`.
    #[serde(default)]
    pub exact: bool,
    /// Rows used by the median heuristic.
    #[serde(default = "default_subsample")]
    pub median_subsample: usize,
}

fn default_resample() -> bool {
    true
}

fn default_subsample() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub train: PathBuf,
    #[serde(default)]
    pub test: Option<PathBuf>,
    /// When set and no test file is given, this fraction of the rows trains
    /// and the rest is held out.
    #[serde(default)]
    pub split: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default)]
    pub checkpoint_every: usize,
}

fn default_dir() -> PathBuf {
    PathBuf::from("fermiborn-out")
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: default_dir(),
            checkpoint_every: 0,
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads and validates; relative data and output paths are rebased onto the
    /// file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut cfg = Self::parse(&fs::read_to_string(path)?)?;
        if let Some(base) = path.parent() {
            let rebase = |p: &mut PathBuf| {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            };
            rebase(&mut cfg.data.train);
            if let Some(t) = cfg.data.test.as_mut() {
                rebase(t);
            }
            rebase(&mut cfg.output.dir);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        if m.registers == 0 {
            return Err(invalid("model.N must be at least 1"));
        }
        if m.k + m.m != crate::magic::REGISTER_MODES || m.k == 0 {
            return Err(invalid(format!(
                "model.k + model.m must equal 4 with k ≥ 1, got {} + {}",
                m.k, m.m
            )));
        }
        if m.layers == 0 {
            return Err(invalid("model.layers must be at least 1"));
        }
        let t = &self.training;
        if t.epochs == 0 {
            return Err(invalid("training.epochs must be at least 1"));
        }
        if !(t.lr > 0.0 && t.lr.is_finite()) {
            return Err(invalid("training.lr must be positive"));
        }
        if t.kernels.is_empty() {
            return Err(invalid("training.kernels must not be empty"));
        }
        for k in &t.kernels {
            match (&k.kind, &k.sigma) {
                (KernelKind::Gaussian, None) => return Err(invalid("gaussian kernels need a sigma")),
                (_, Some(Sigma::Heuristic(s))) if s != "median" => {
                    return Err(invalid(format!("sigma must be a number or \"median\", got \"{s}\"")))
                }
                (_, Some(Sigma::Value(v))) if !(*v > 0.0) => {
                    return Err(invalid(format!("sigma must be positive, got {v}")))
                }
                _ => {}
            }
        }
        if let Some(s) = self.data.split {
            if !(s > 0.0 && s < 1.0) {
                return Err(invalid(format!(
                    "data.split must lie strictly between 0 and 1, got {s}"
                )));
            }
        }
        Ok(())
    }

    /// Number of measured variables.
    pub fn variables(&self) -> usize {
        self.model.registers * self.model.k
    }

    /// Concrete kernels; a `"median"` bandwidth expands to the pair `(m/2, m)`.
    /// Returns the resolved pair when the heuristic was used.
    pub fn resolve_kernels(&self, data: &BitDataset) -> Result<(Vec<KernelSpec>, Option<(f64, f64)>)> {
        let mut out = Vec::new();
        let mut resolved = None;
        for k in &self.training.kernels {
            match (&k.kind, &k.sigma) {
                (KernelKind::Linear, _) => out.push(KernelSpec::linear()),
                (KernelKind::Gaussian, Some(Sigma::Value(s))) => out.push(KernelSpec::gaussian(*s, k.ell_max, k.n_ops)),
                (KernelKind::Gaussian, _) => {
                    let pair = match resolved {
                        Some(p) => p,
                        None => median_heuristic(data, self.training.median_subsample, self.model.seed)?,
                    };
                    resolved = Some(pair);
                    out.push(KernelSpec::gaussian(pair.0, k.ell_max, k.n_ops));
                    out.push(KernelSpec::gaussian(pair.1, k.ell_max, k.n_ops));
                }
            }
        }
        Ok((out, resolved))
    }
}
