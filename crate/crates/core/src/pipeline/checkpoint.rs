use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::NormStats;
use crate::model::Model;
use crate::numerics::container::{decode, encode};
use crate::numerics::{AdamW, ParamStore, Tensor};
use crate::pipeline::config::RunConfig;

const FORMAT: &str = "landtime-checkpoint";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format: String,
    pub config: RunConfig,
    pub stats: NormStats,
    /// Completed epochs.
    pub epoch: usize,
    pub best_val_nll: Option<f64>,
    pub best_epoch: Option<usize>,
    /// Epochs since the last validation improvement.
    pub stale_epochs: usize,
    /// Optimizer step count, when optimizer state is included.
    pub adam_step: Option<u64>,
}

/// Model, statistics and training state in one file.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub model: Model<f32>,
    pub optimizer: Option<AdamW<f32>>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let meta = serde_json::to_string(&self.meta)?;
        let mut moments: Vec<(String, Tensor<f32>)> = Vec::new();
        if let Some(opt) = &self.optimizer {
            for (kind, bufs) in [("m", &opt.m), ("v", &opt.v)] {
                for (p, buf) in self.model.params.iter().zip(bufs) {
                    moments.push((
                        format!("adamw.{kind}/{}", p.name),
                        Tensor::new(p.value.shape().to_vec(), buf.clone())?,
                    ));
                }
            }
        }
        let mut tensors: Vec<(&str, &Tensor<f32>)> = self
            .model
            .params
            .iter()
            .map(|p| (p.name.as_str(), &p.value))
            .collect();
        tensors.extend(moments.iter().map(|(n, t)| (n.as_str(), t)));
        encode(&meta, &tensors)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let file = decode(bytes)?;
        let meta: CheckpointMeta = serde_json::from_str(&file.meta)?;
        if meta.format != FORMAT {
            return Err(Error::Checkpoint(format!("unknown format {:?}", meta.format)));
        }
        let mut params = ParamStore::new();
        let mut m = Vec::new();
        let mut v = Vec::new();
        for (name, t) in file.tensors {
            if let Some(rest) = name.strip_prefix("adamw.m/") {
                m.push((rest.to_string(), t));
            } else if let Some(rest) = name.strip_prefix("adamw.v/") {
                v.push((rest.to_string(), t));
            } else {
                params.add(name, t);
            }
        }
        let model = Model::from_params(meta.config.model.clone(), params)?;
        let optimizer = match meta.adam_step {
            Some(step) => {
                let names: Vec<&str> = model.params.iter().map(|p| p.name.as_str()).collect();
                let matches = |buf: &[(String, Tensor<f32>)]| {
                    buf.len() == names.len() && buf.iter().zip(&names).all(|((n, _), m)| n == m)
                };
                if !matches(&m) || !matches(&v) {
                    return Err(Error::Checkpoint("optimizer moments do not match parameters".into()));
                }
                Some(AdamW {
                    config: meta.config.optimizer,
                    step,
                    m: m.into_iter().map(|(_, t)| t.into_data()).collect(),
                    v: v.into_iter().map(|(_, t)| t.into_data()).collect(),
                })
            }
            None => None,
        };
        Ok(Checkpoint {
            meta,
            model,
            optimizer,
        })
    }

    /// Writes through a temporary file so a crash never leaves a torn checkpoint.
    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn new(config: RunConfig, stats: NormStats, model: Model<f32>) -> Self {
        Checkpoint {
            meta: CheckpointMeta {
                format: FORMAT.to_string(),
                config,
                stats,
                epoch: 0,
                best_val_nll: None,
                best_epoch: None,
                stale_epochs: 0,
                adam_step: None,
            },
            model,
            optimizer: None,
        }
    }
}
