use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::error::{Error, Result};
use crate::geo::NormalizedScene;
use crate::model::{Model, SceneBatch};
use crate::numerics::{clip_grad_norm, AdamW, Tape};
use crate::pipeline::checkpoint::Checkpoint;
use crate::pipeline::config::{stream_rng, RunConfig, Stream};
use crate::pipeline::data::{batches_for_epoch, eval_batches, normalize_all, PreparedData};

pub const BEST_CKPT: &str = "best.ckpt";
pub const LAST_CKPT: &str = "last.ckpt";
pub const TRAIN_LOG: &str = "train_log.csv";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub train_nll: f64,
    pub val_nll: f64,
    pub wall_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    /// Epochs run by this call.
    pub log: Vec<EpochLog>,
    pub completed_epochs: usize,
    pub best_val_nll: Option<f64>,
    pub best_epoch: Option<usize>,
    pub stopped_early: bool,
    pub best_path: PathBuf,
    pub last_path: PathBuf,
}

fn batch_of(scenes: &[NormalizedScene], idx: &[usize]) -> Result<SceneBatch> {
    let refs: Vec<&NormalizedScene> = idx.iter().map(|&i| &scenes[i]).collect();
    SceneBatch::new(&refs, None)
}

/// Mean per-scene NLL in eval mode.
pub fn mean_nll(model: &Model<f32>, scenes: &[NormalizedScene], batch: usize) -> Result<f64> {
    let sizes: Vec<usize> = scenes.iter().map(|s| s.n_agents).collect();
    let mut total = 0.0;
    for idx in eval_batches(&sizes, batch) {
        let b = batch_of(scenes, &idx)?;
        let mut tape = Tape::new();
        let out = model.forward(&mut tape, &b, None)?;
        total += model.loss(&mut tape, &out, &b)?.total * idx.len() as f64;
    }
    Ok(total / scenes.len() as f64)
}

/// One pass over the training scenes; returns the mean batch loss.
pub fn train_epoch(
    model: &mut Model<f32>,
    opt: &mut AdamW<f32>,
    scenes: &[NormalizedScene],
    cfg: &RunConfig,
    epoch: usize,
) -> Result<f64> {
    let lr = cfg.schedule.lr_at(epoch);
    let sizes: Vec<usize> = scenes.iter().map(|s| s.n_agents).collect();
    let mut dropout_rng = stream_rng(cfg.seed, Stream::Dropout, epoch as u64);
    let mut total = 0.0;
    for idx in batches_for_epoch(&sizes, cfg, epoch) {
        let b = batch_of(scenes, &idx)?;
        model.params.zero_grad();
        let mut tape = Tape::new();
        let out = model.forward(&mut tape, &b, Some(&mut dropout_rng))?;
        let loss = model.loss(&mut tape, &out, &b)?;
        tape.backward_into(loss.var, &mut model.params)?;
        if let Some(c) = cfg.grad_clip {
            clip_grad_norm(&mut model.params, c);
        }
        opt.step(&mut model.params, lr)?;
        total += loss.total * idx.len() as f64;
    }
    Ok(total / scenes.len() as f64)
}

fn same_run(a: &RunConfig, b: &RunConfig) -> bool {
    let strip = |c: &RunConfig| RunConfig {
        epochs: 0,
        patience: None,
        ..c.clone()
    };
    strip(a) == strip(b)
}

/// Trains with per-epoch validation, keeping `best.ckpt` (lowest validation
/// NLL) and `last.ckpt` (with optimizer state, for `resume`) in `out_dir`.
///
/// A numerical failure aborts the run; checkpoints from the last completed
/// epoch stay in place.
pub fn train_model(
    cfg: &RunConfig,
    data: &PreparedData,
    out_dir: &Path,
    resume: bool,
) -> Result<TrainSummary> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let best_path = out_dir.join(BEST_CKPT);
    let last_path = out_dir.join(LAST_CKPT);
    let log_path = out_dir.join(TRAIN_LOG);
    let n_max = cfg.data.scene.n_max;
    let train = normalize_all(&data.train, &data.stats, n_max);
    let val = normalize_all(&data.val, &data.stats, n_max);

    let mut ckpt = if resume {
        let c = Checkpoint::load(&last_path)?;
        if !same_run(&c.meta.config, cfg) {
            return Err(Error::Checkpoint(
                "resume config differs from the checkpoint beyond epochs/patience".into(),
            ));
        }
        if c.meta.stats != data.stats {
            return Err(Error::Checkpoint("data statistics differ from the checkpoint".into()));
        }
        log::info!("resuming after epoch {}", c.meta.epoch);
        c
    } else {
        let model = Model::new(cfg.model.clone(), cfg.seed)?;
        let mut c = Checkpoint::new(cfg.clone(), data.stats, model);
        c.optimizer = Some(AdamW::new(cfg.optimizer, &c.model.params));
        let mut f = std::fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
        writeln!(f, "epoch,lr,train_nll,val_nll,wall_s").map_err(|e| Error::io(&log_path, e))?;
        c
    };
    ckpt.meta.config = cfg.clone();
    let mut opt = ckpt
        .optimizer
        .take()
        .ok_or_else(|| Error::Checkpoint("checkpoint has no optimizer state".into()))?;

    let mut log = Vec::new();
    let mut stopped_early = false;
    let start = Instant::now();
    for epoch in ckpt.meta.epoch..cfg.epochs {
        if cfg.patience.is_some_and(|p| ckpt.meta.stale_epochs >= p) {
            stopped_early = true;
            break;
        }
        let result = train_epoch(&mut ckpt.model, &mut opt, &train, cfg, epoch)
            .and_then(|t| Ok((t, mean_nll(&ckpt.model, &val, cfg.batch_scenes)?)));
        let (train_nll, val_nll) = match result {
            Ok(v) => v,
            Err(e) => {
                if e.is_numerical() {
                    log::error!("epoch {}: {e}; last good checkpoint kept", epoch + 1);
                }
                return Err(e);
            }
        };
        let row = EpochLog {
            epoch: epoch + 1,
            lr: cfg.schedule.lr_at(epoch),
            train_nll,
            val_nll,
            wall_s: start.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {} lr {:.3e} train {:.5} val {:.5}",
            row.epoch,
            row.lr,
            train_nll,
            val_nll
        );
        let mut f = std::fs::OpenOptions::new()
            .append(true)
            .open(&log_path)
            .map_err(|e| Error::io(&log_path, e))?;
        writeln!(
            f,
            "{},{:e},{},{},{:.3}",
            row.epoch, row.lr, row.train_nll, row.val_nll, row.wall_s
        )
        .map_err(|e| Error::io(&log_path, e))?;
        log.push(row);

        ckpt.meta.epoch = epoch + 1;
        if ckpt.meta.best_val_nll.is_none_or(|b| val_nll < b) {
            ckpt.meta.best_val_nll = Some(val_nll);
            ckpt.meta.best_epoch = Some(epoch + 1);
            ckpt.meta.stale_epochs = 0;
            ckpt.meta.adam_step = None;
            ckpt.save(&best_path)?;
        } else {
            ckpt.meta.stale_epochs += 1;
        }
        ckpt.meta.adam_step = Some(opt.step);
        ckpt.optimizer = Some(opt);
        ckpt.save(&last_path)?;
        opt = ckpt.optimizer.take().expect("just stored");
    }
    if cfg.patience.is_some_and(|p| ckpt.meta.stale_epochs >= p) && ckpt.meta.epoch < cfg.epochs {
        stopped_early = true;
    }
    Ok(TrainSummary {
        log,
        completed_epochs: ckpt.meta.epoch,
        best_val_nll: ckpt.meta.best_val_nll,
        best_epoch: ckpt.meta.best_epoch,
        stopped_early,
        best_path,
        last_path,
    })
}
