//! Binary checkpoint format.
//!
//! ```text
//! "MBSL" | u32 LE version | u32 LE header length | UTF-8 JSON header
//!        | f32 LE arrays, row-major, in manifest order
//! ```
//!
//! The header carries the model and training configs, the provenance of the
//! run and the ordered `(name, shape)` manifest of the stored tensors. Only
//! tensors that are active under the model config are stored.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Selection, TrainConfig};
use crate::data::{
    apply_instance_norm, apply_normalizer, Normalization, NormalizationStats, TimeSeriesDataset,
};
use crate::model::{ModelConfig, ModelParams};
use crate::tensor::TensorSpec;
use crate::{Error, Result};

pub const CKPT_MAGIC: &[u8; 4] = b"MBSL";
pub const CKPT_VERSION: u32 = 1;

/// How the stored parameters came about.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub dataset: String,
    pub normalization: Normalization,
    /// Train-split statistics under `zscore`; `None` otherwise.
    pub stats: Option<NormalizationStats>,
    pub selection: Selection,
    /// Epoch (0-based) the parameters were taken from; `None` means the
    /// initialization.
    pub selected_epoch: Option<usize>,
    /// Input convolution width, recorded because it depends on the dataset's
    /// maximum length.
    pub kernel: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model_cfg: ModelConfig,
    pub train_cfg: TrainConfig,
    pub provenance: Provenance,
    pub params: ModelParams<f32>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    provenance: Provenance,
    params: Vec<TensorSpec>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            model_cfg: self.model_cfg.clone(),
            train_cfg: self.train_cfg.clone(),
            provenance: self.provenance.clone(),
            params: self.params.manifest(&self.model_cfg),
        };
        let json = serde_json::to_vec(&header)?;
        let n_values = self.params.num_active(&self.model_cfg);
        let mut out = Vec::with_capacity(12 + json.len() + 4 * n_values);
        out.extend_from_slice(CKPT_MAGIC);
        out.extend_from_slice(&CKPT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, t) in self.params.active(&self.model_cfg) {
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: String| Error::Checkpoint(m);
        if bytes.len() < 4 {
            return Err(bad("truncated before magic".into()));
        }
        if &bytes[..4] != CKPT_MAGIC {
            return Err(bad("bad magic, not an MBSL file".into()));
        }
        if bytes.len() < 12 {
            return Err(bad("truncated header".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != CKPT_VERSION {
            return Err(bad(format!("unsupported version {version} (expected {CKPT_VERSION})")));
        }
        let json_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let body = &bytes[12..];
        if body.len() < json_len {
            return Err(bad("truncated header".into()));
        }
        let header: Header = serde_json::from_slice(&body[..json_len])
            .map_err(|e| bad(format!("corrupt header: {e}")))?;
        header
            .model_cfg
            .validate()
            .map_err(|e| bad(format!("embedded model config: {e}")))?;
        let mut params = ModelParams::<f32>::zeros(&header.model_cfg);
        let expected = params.manifest(&header.model_cfg);
        if expected != header.params {
            return Err(bad("parameter manifest does not match the embedded config".into()));
        }
        let mut data = &body[json_len..];
        for (name, t) in params.active_mut(&header.model_cfg) {
            let need = 4 * t.len();
            if data.len() < need {
                return Err(bad(format!("truncated in tensor {name}")));
            }
            for (v, chunk) in t.data.iter_mut().zip(data[..need].chunks_exact(4)) {
                *v = f32::from_le_bytes(chunk.try_into().unwrap());
            }
            data = &data[need..];
        }
        if !data.is_empty() {
            return Err(bad(format!("{} trailing bytes", data.len())));
        }
        Ok(Self {
            model_cfg: header.model_cfg,
            train_cfg: header.train_cfg,
            provenance: header.provenance,
            params,
        })
    }

    /// Applies the preprocessing recorded at training time.
    pub fn preprocess(&self, ds: &TimeSeriesDataset) -> Result<TimeSeriesDataset> {
        match self.provenance.normalization {
            Normalization::Zscore => {
                let stats = self
                    .provenance
                    .stats
                    .as_ref()
                    .ok_or_else(|| Error::Checkpoint("zscore run without stored statistics".into()))?;
                apply_normalizer(ds, stats)
            }
            Normalization::Instance => Ok(apply_instance_norm(ds)),
            Normalization::None => Ok(ds.clone()),
        }
    }

    /// Accuracy on a raw (unnormalized) dataset.
    pub fn evaluate(&self, ds: &TimeSeriesDataset) -> Result<f64> {
        super::evaluate(&self.preprocess(ds)?, &self.params, &self.model_cfg)
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, ckpt.to_bytes()?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}
