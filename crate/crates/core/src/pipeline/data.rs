use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::geo::{
    build_scenes, keep_closest, normalize_scene, preprocess_tracks, split_dataset, NormStats,
    NormalizedScene, PreprocessReport, Scene, TrajectoryTrack,
};
use crate::pipeline::config::{stream_rng, RunConfig, Stream};

/// Scenes of every split plus the statistics fitted on training data.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub train: Vec<Scene>,
    pub val: Vec<Scene>,
    pub test: Vec<Scene>,
    pub stats: NormStats,
    pub preprocess: PreprocessReport,
    pub scenes_built: usize,
    pub scenes_dropped: usize,
}

/// Tracks to scenes: truncation, resampling, windowing, split and fit.
pub fn prepare_scenes(tracks: &[TrajectoryTrack], cfg: &RunConfig) -> Result<PreparedData> {
    let d = &cfg.data;
    let (resampled, preprocess) = preprocess_tracks(tracks, d.arp, d.radius_nm, d.scene.dt)?;
    let (scenes, report) = build_scenes(&resampled, d.scene)?;
    if report.truncated > 0 {
        log::warn!(
            "{} scenes exceeded {} aircraft and kept the closest to landing",
            report.truncated,
            d.scene.n_max
        );
    }
    let scenes_built = scenes.len();
    let (train, val, test, dropped) = match d.overfit_scenes {
        Some(k) => {
            let picked: Vec<Scene> = stride(scenes, (scenes_built / k).max(1)).into_iter().take(k).collect();
            if picked.len() < k {
                return Err(Error::validation(format!(
                    "only {} scenes available for overfitting, {k} requested",
                    picked.len()
                )));
            }
            (picked.clone(), picked, Vec::new(), 0)
        }
        None => {
            let split = split_dataset(scenes, &d.split, cfg.seed)?;
            (
                stride(split.train, d.scene_stride),
                stride(split.val, d.scene_stride),
                stride(split.test, d.scene_stride),
                split.dropped,
            )
        }
    };
    if train.is_empty() || val.is_empty() {
        return Err(Error::validation("training or validation split is empty"));
    }
    let stats = NormStats::fit(&train)?;
    Ok(PreparedData {
        train,
        val,
        test,
        stats,
        preprocess,
        scenes_built,
        scenes_dropped: dropped,
    })
}

fn stride(scenes: Vec<Scene>, k: usize) -> Vec<Scene> {
    scenes.into_iter().step_by(k.max(1)).collect()
}

/// Applies the aircraft cap with a warning, then standardizes.
pub fn normalize_all(scenes: &[Scene], stats: &NormStats, n_max: usize) -> Vec<NormalizedScene> {
    scenes
        .iter()
        .map(|s| {
            if s.n_agents() > n_max {
                log::warn!(
                    "scene {} has {} aircraft; keeping the {n_max} closest to landing",
                    s.scene_id,
                    s.n_agents()
                );
                let mut cut = s.clone();
                cut.agents = keep_closest(cut.agents, n_max);
                normalize_scene(&cut, stats)
            } else {
                normalize_scene(s, stats)
            }
        })
        .collect()
}

/// Same-size scenes batched together, then batch order shuffled.
pub fn epoch_batches<R: Rng>(sizes: &[usize], batch: usize, rng: &mut R) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..sizes.len()).collect();
    idx.shuffle(rng);
    idx.sort_by_key(|&i| sizes[i]);
    let mut batches: Vec<Vec<usize>> = idx.chunks(batch.max(1)).map(|c| c.to_vec()).collect();
    batches.shuffle(rng);
    batches
}

/// Batches for a given epoch of a run.
pub fn batches_for_epoch(sizes: &[usize], cfg: &RunConfig, epoch: usize) -> Vec<Vec<usize>> {
    let mut rng = stream_rng(cfg.seed, Stream::Shuffle, epoch as u64);
    epoch_batches(sizes, cfg.batch_scenes, &mut rng)
}

/// Deterministic in-order batches for evaluation, grouped by size.
pub fn eval_batches(sizes: &[usize], batch: usize) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..sizes.len()).collect();
    idx.sort_by_key(|&i| sizes[i]);
    idx.chunks(batch.max(1)).map(|c| c.to_vec()).collect()
}
