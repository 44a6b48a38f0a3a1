use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleShape {
    Cosine,
    Linear,
}

/// Cyclic decay from `lr_max` to `lr_min`, restarting every `cycle_epochs`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LrSchedule {
    pub lr_max: f64,
    pub lr_min: f64,
    pub cycle_epochs: usize,
    pub shape: ScheduleShape,
}

impl Default for LrSchedule {
    fn default() -> Self {
        LrSchedule {
            lr_max: 1e-4,
            lr_min: 1e-6,
            cycle_epochs: 100,
            shape: ScheduleShape::Cosine,
        }
    }
}

impl LrSchedule {
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let cycle = self.cycle_epochs.max(1);
        let frac = (epoch % cycle) as f64 / cycle as f64;
        let span = self.lr_max - self.lr_min;
        match self.shape {
            ScheduleShape::Cosine => {
                self.lr_min + 0.5 * span * (1.0 + (std::f64::consts::PI * frac).cos())
            }
            ScheduleShape::Linear => self.lr_max - span * frac,
        }
    }
}

pub fn lr_at(epoch: usize, sched: &LrSchedule) -> f64 {
    sched.lr_at(epoch)
}
