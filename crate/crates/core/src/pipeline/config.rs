use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{LatLon, SceneParams, SplitConfig};
use crate::model::ModelConfig;
use crate::numerics::{AdamWConfig, LrSchedule};

/// Preprocessing and dataset options.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub arp: LatLon,
    pub radius_nm: f64,
    pub scene: SceneParams,
    pub split: SplitConfig,
    /// Keep every k-th scene of each split, in time order.
    pub scene_stride: usize,
    /// Train on this many scenes and validate on the same ones.
    pub overfit_scenes: Option<usize>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            arp: LatLon::new(37.4602, 126.4407),
            radius_nm: 70.0,
            scene: SceneParams::default(),
            split: SplitConfig::default(),
            scene_stride: 1,
            overfit_scenes: None,
        }
    }
}

/// Everything that determines a training run. Input and output paths are
/// given on the command line and are not part of the run identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub epochs: usize,
    pub batch_scenes: usize,
    /// Stop after this many epochs without a validation improvement.
    pub patience: Option<usize>,
    pub grad_clip: Option<f64>,
    pub model: ModelConfig,
    pub optimizer: AdamWConfig,
    pub schedule: LrSchedule,
    pub data: DataConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            epochs: 300,
            batch_scenes: 64,
            patience: None,
            grad_clip: None,
            model: ModelConfig::default(),
            optimizer: AdamWConfig::default(),
            schedule: LrSchedule::default(),
            data: DataConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("run config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.model.steps != self.data.scene.steps {
            return Err(Error::validation(format!(
                "model window {} differs from scene window {}",
                self.model.steps, self.data.scene.steps
            )));
        }
        if self.batch_scenes == 0 || self.data.scene_stride == 0 || self.data.scene.n_max == 0 {
            return Err(Error::validation("batch size, stride and n_max must be positive"));
        }
        if self.data.overfit_scenes == Some(0) {
            return Err(Error::validation("overfit_scenes must be positive"));
        }
        if self.patience == Some(0) {
            return Err(Error::validation("patience must be positive"));
        }
        if self.grad_clip.is_some_and(|c| !(c > 0.0)) {
            return Err(Error::validation("grad_clip must be positive"));
        }
        let s = &self.schedule;
        if !(s.lr_max > 0.0 && s.lr_min > 0.0 && s.lr_min <= s.lr_max) || s.cycle_epochs == 0 {
            return Err(Error::validation("schedule needs 0 < lr_min <= lr_max and a positive cycle"));
        }
        if !(self.data.radius_nm > 0.0) || !(self.data.scene.dt > 0.0) {
            return Err(Error::validation("radius and dt must be positive"));
        }
        Ok(())
    }
}

/// Independent random streams derived from the run seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Init = 1,
    Split = 2,
    Shuffle = 3,
    Dropout = 4,
}

/// Generator for `stream` at `epoch`; identical across runs and resumes.
pub fn stream_rng(seed: u64, stream: Stream, epoch: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ stream as u64);
    rng.set_stream(epoch);
    rng
}
