//! JSON checkpoint container: a flat list of named, shape-tagged 64-bit
//! matrices plus free-form metadata.
//!
//! ```json
//! {
//!   "format": "edgeforge-checkpoint",
//!   "version": 1,
//!   "model": "gcn",
//!   "meta": { ... },
//!   "tensors": [ { "name": "w1", "rows": 8, "cols": 16, "data": [ ... ] } ]
//! }
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::detectors::{Detector, DetectorKind, GcnParams, SageParams, SgcParams};
use crate::error::{Error, Result};
use crate::num::{Matrix, Parameterized};

pub const FORMAT: &str = "edgeforge-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl NamedTensor {
    pub fn new(name: &str, m: &Matrix) -> Self {
        NamedTensor { name: name.to_string(), rows: m.rows(), cols: m.cols(), data: m.as_slice().to_vec() }
    }

    pub fn to_matrix(&self) -> Result<Matrix> {
        Matrix::from_vec(self.rows, self.cols, self.data.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub model: String,
    #[serde(default)]
    pub meta: serde_json::Value,
    pub tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn new(model: &str, meta: serde_json::Value, tensors: Vec<NamedTensor>) -> Self {
        Checkpoint { format: FORMAT.into(), version: VERSION, model: model.into(), meta, tensors }
    }

    pub fn tensor(&self, name: &str) -> Result<Matrix> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::Config(format!("checkpoint has no tensor `{name}`")))?
            .to_matrix()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                fs::create_dir_all(dir)?;
            }
        }
        fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let c: Checkpoint = serde_json::from_str(&fs::read_to_string(path)?)?;
        if c.format != FORMAT || c.version != VERSION {
            return Err(Error::Config(format!(
                "unsupported checkpoint {} v{} (expected {FORMAT} v{VERSION})",
                c.format, c.version
            )));
        }
        Ok(c)
    }
}

impl Detector {
    pub fn to_checkpoint(&self) -> Checkpoint {
        let tensors = self
            .param_names()
            .into_iter()
            .zip(self.params())
            .map(|(n, m)| NamedTensor::new(n, m))
            .collect();
        let meta = serde_json::json!({
            "kind": self.kind(),
            "eval_seed": match self { Detector::SageMean(p) => p.eval_seed, _ => 0 },
        });
        Checkpoint::new(self.kind().name(), meta, tensors)
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Detector> {
        let kind: DetectorKind = serde_json::from_value(c.meta["kind"].clone())?;
        Ok(match kind {
            DetectorKind::Gcn => Detector::Gcn(GcnParams { w1: c.tensor("w1")?, w2: c.tensor("w2")? }),
            DetectorKind::Sgc { hops } => Detector::Sgc(SgcParams { w: c.tensor("w")?, hops }),
            DetectorKind::SageMean { sample } => Detector::SageMean(SageParams {
                w1: c.tensor("w1")?,
                w2: c.tensor("w2")?,
                sample,
                eval_seed: c.meta["eval_seed"].as_u64().unwrap_or(0),
            }),
        })
    }
}
