//! `SOLSTEP1` model files: the 8-byte magic, a little-endian `u64` header
//! length, a JSON header, then every weight as a little-endian `f64` in
//! parameter-layout order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use solstep_core::features::Normalizer;
use solstep_core::ingest::Activity;
use solstep_core::model::{ModelConfig, ModelWeights, ParamLayout, TrainedModel};
use solstep_core::pipeline::PipelineConfig;

use crate::error::{io_err, Error, Result};
use crate::TOOL_VERSION;

pub const MAGIC: &[u8; 8] = b"SOLSTEP1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelHeader {
    pub tool_version: String,
    /// Preprocessing and training settings the model was built with.
    pub pipeline: PipelineConfig,
    /// Resolved shape, including input width and class count.
    pub model: ModelConfig,
    pub classes: Vec<Activity>,
    pub normalizer: Normalizer,
    pub window_length: usize,
    pub best_epoch: usize,
    pub tensors: Vec<TensorEntry>,
}

/// A classifier with everything needed to preprocess its input.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub header: ModelHeader,
    pub weights: ModelWeights,
}

impl ModelFile {
    pub fn new(pipeline: &PipelineConfig, classes: &[Activity], window_length: usize, trained: &TrainedModel) -> Self {
        let header = ModelHeader {
            tool_version: TOOL_VERSION.to_string(),
            pipeline: pipeline.clone(),
            model: trained.weights.config,
            classes: classes.to_vec(),
            normalizer: trained.normalizer.clone(),
            window_length,
            best_epoch: trained.best_epoch,
            tensors: tensor_entries(&trained.weights.config),
        };
        Self {
            header,
            weights: trained.weights.clone(),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&self.header).map_err(|e| Error::Config(e.to_string()))?;
        let mut out = Vec::with_capacity(16 + header.len() + 8 * self.weights.data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for v in &self.weights.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err("not a SOLSTEP1 model file".into());
        }
        let len = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
        let end = usize::try_from(len)
            .ok()
            .and_then(|l| l.checked_add(16))
            .filter(|&e| e <= bytes.len())
            .ok_or("header length exceeds file size")?;
        let header: ModelHeader = serde_json::from_slice(&bytes[16..end]).map_err(|e| format!("header: {e}"))?;
        header.model.validate().map_err(|e| e.to_string())?;
        if header.tensors != tensor_entries(&header.model) {
            return Err("tensor list does not match the model configuration".into());
        }
        if header.classes.len() != header.model.n_classes {
            return Err(format!(
                "{} classes listed for a {}-class model",
                header.classes.len(),
                header.model.n_classes
            ));
        }
        if header.normalizer.dim() != header.model.d_in {
            return Err(format!(
                "normalizer width {} but model input width {}",
                header.normalizer.dim(),
                header.model.d_in
            ));
        }
        if header.normalizer.mean.iter().chain(&header.normalizer.std).any(|v| !v.is_finite()) {
            return Err("non-finite normalizer statistics".into());
        }
        let body = &bytes[end..];
        let expected = ParamLayout::new(&header.model).total;
        if body.len() != 8 * expected {
            return Err(format!("{} weight bytes, expected {}", body.len(), 8 * expected));
        }
        let data = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let weights = ModelWeights::from_data(&header.model, data).map_err(|e| e.to_string())?;
        Ok(Self { header, weights })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?).map_err(io_err(path))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(io_err(path))?;
        Self::from_bytes(&bytes).map_err(|message| Error::Format {
            path: path.into(),
            message,
        })
    }

    pub fn trained(&self) -> TrainedModel {
        TrainedModel {
            weights: self.weights.clone(),
            normalizer: self.header.normalizer.clone(),
            history: Vec::new(),
            best_epoch: self.header.best_epoch,
        }
    }
}

fn tensor_entries(cfg: &ModelConfig) -> Vec<TensorEntry> {
    ParamLayout::new(cfg)
        .entries()
        .into_iter()
        .map(|(name, s)| TensorEntry {
            name,
            rows: s.rows,
            cols: s.cols,
        })
        .collect()
}
