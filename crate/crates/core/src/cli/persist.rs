//! Model checkpoints and history files.
//!
//! A checkpoint is a JSON object
//! `{version, N, k, m, layers, alpha[], theta[][], seed, epoch}` with angles
//! written using 17 significant digits, so doubles round-trip exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Deserialize;

use crate::engine::FbmModel;
use crate::error::{invalid, Result};
use crate::flo::FloAnsatz;
use crate::magic::MagicAngles;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub version: u32,
    #[serde(rename = "N")]
    pub registers: usize,
    pub k: usize,
    pub m: usize,
    pub layers: usize,
    pub alpha: Vec<f64>,
    pub theta: Vec<Vec<f64>>,
    pub seed: u64,
    pub epoch: usize,
}

impl ModelFile {
    pub fn from_model(model: &FbmModel, seed: u64, epoch: usize) -> Self {
        let a = model.ansatz();
        Self {
            version: FORMAT_VERSION,
            registers: model.registers(),
            k: model.measured_per_register(),
            m: model.hidden_per_register(),
            layers: a.layers(),
            alpha: model.magic().alpha().to_vec(),
            theta: (0..a.layers()).map(|l| a.layer(l).to_vec()).collect(),
            seed,
            epoch,
        }
    }

    pub fn to_model(&self) -> Result<FbmModel> {
        if self.version != FORMAT_VERSION {
            return Err(invalid(format!("unsupported model file version {}", self.version)));
        }
        if self.alpha.len() != self.registers {
            return Err(invalid(format!(
                "expected {} alpha values, got {}",
                self.registers,
                self.alpha.len()
            )));
        }
        if self.theta.len() != self.layers {
            return Err(invalid(format!(
                "expected {} theta layers, got {}",
                self.layers,
                self.theta.len()
            )));
        }
        let modes = crate::magic::REGISTER_MODES * self.registers;
        let angles: Vec<f64> = self.theta.iter().flatten().copied().collect();
        let ansatz = FloAnsatz::new(modes, self.layers, angles)?;
        FbmModel::new(MagicAngles::new(self.alpha.clone())?, ansatz, self.k, self.m)
    }

    pub fn to_json(&self) -> String {
        let num = |x: f64| format!("{x:.16e}");
        let list = |xs: &[f64]| xs.iter().map(|&x| num(x)).collect::<Vec<_>>().join(", ");
        let mut out = String::from("{\n");
        let _ = writeln!(out, "  \"version\": {},", self.version);
        let _ = writeln!(out, "  \"N\": {},", self.registers);
        let _ = writeln!(out, "  \"k\": {},", self.k);
        let _ = writeln!(out, "  \"m\": {},", self.m);
        let _ = writeln!(out, "  \"layers\": {},", self.layers);
        let _ = writeln!(out, "  \"alpha\": [{}],", list(&self.alpha));
        out.push_str("  \"theta\": [");
        for (i, layer) in self.theta.iter().enumerate() {
            out.push_str(if i == 0 { "\n    [" } else { ",\n    [" });
            out.push_str(&list(layer));
            out.push(']');
        }
        out.push_str(if self.theta.is_empty() { "],\n" } else { "\n  ],\n" });
        let _ = writeln!(out, "  \"seed\": {},", self.seed);
        let _ = writeln!(out, "  \"epoch\": {}", self.epoch);
        out.push_str("}\n");
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Writes `contents` to a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| invalid(format!("not a file path: {}", path.display())))?;
    let mut tmp_name = name.to_os_string();
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn save_model(model: &FbmModel, seed: u64, epoch: usize, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &ModelFile::from_model(model, seed, epoch).to_json())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<(FbmModel, ModelFile)> {
    let file = ModelFile::parse(&fs::read_to_string(path)?)?;
    Ok((file.to_model()?, file))
}
