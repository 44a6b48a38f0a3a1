use std::collections::BTreeMap;
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{NormStats, Scene};
use crate::metrics::{evaluate, EvalReport, MlrModel, ScenePredictions};
use crate::model::{AttentionRecord, Model, SceneBatch};
use crate::pipeline::data::{eval_batches, normalize_all};

/// One line of a prediction file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub scene_id: String,
    pub callsign: String,
    pub mu_s: f64,
    pub sigma_s: f64,
    /// `t_end + mu_s`.
    pub landing_t: f64,
    pub y_true_s: f64,
}

/// Scenes after the aircraft cap, in the order the model sees them.
fn capped(scenes: &[Scene], n_max: usize) -> Vec<Scene> {
    scenes
        .iter()
        .map(|s| {
            let mut s = s.clone();
            if s.agents.len() > n_max {
                s.agents = crate::geo::keep_closest(s.agents, n_max);
            }
            s
        })
        .collect()
}

/// Eval-mode predictions for every aircraft, in scene and agent order.
pub fn predict_scenes(
    model: &Model<f32>,
    stats: &NormStats,
    scenes: &[Scene],
    n_max: usize,
    batch: usize,
) -> Result<Vec<PredictionRow>> {
    let norm = normalize_all(scenes, stats, n_max);
    let scenes = capped(scenes, n_max);
    let sizes: Vec<usize> = norm.iter().map(|s| s.n_agents).collect();
    let mut per_scene = vec![Vec::new(); scenes.len()];
    for idx in eval_batches(&sizes, batch) {
        let refs: Vec<_> = idx.iter().map(|&i| &norm[i]).collect();
        let b = SceneBatch::new(&refs, None)?;
        for (k, preds) in model.predict(&b, stats)?.into_iter().enumerate() {
            per_scene[idx[k]] = preds;
        }
    }
    let mut rows = Vec::new();
    for (s, preds) in scenes.iter().zip(per_scene) {
        for (a, p) in s.agents.iter().zip(preds) {
            rows.push(PredictionRow {
                scene_id: s.scene_id.clone(),
                callsign: a.callsign.clone(),
                mu_s: p.mu_s,
                sigma_s: p.sigma_s,
                landing_t: s.t_end + p.mu_s,
                y_true_s: a.remaining_s,
            });
        }
    }
    Ok(rows)
}

/// Head-averaged agent attention per scene and layer.
pub fn attention_records(
    model: &Model<f32>,
    stats: &NormStats,
    scenes: &[Scene],
    n_max: usize,
    batch: usize,
) -> Result<Vec<AttentionRecord>> {
    let norm = normalize_all(scenes, stats, n_max);
    let scenes = capped(scenes, n_max);
    let mut out = Vec::new();
    for chunk in (0..scenes.len()).collect::<Vec<_>>().chunks(batch.max(1)) {
        let refs: Vec<_> = chunk.iter().map(|&i| &norm[i]).collect();
        let b = SceneBatch::new(&refs, None)?;
        let (_, scores) = model.predict_with_attention(&b, stats)?;
        for (&i, layers) in chunk.iter().zip(scores) {
            let callsigns: Vec<String> = scenes[i].agents.iter().map(|a| a.callsign.clone()).collect();
            for (l, m) in layers.into_iter().enumerate() {
                out.push(AttentionRecord {
                    scene_id: scenes[i].scene_id.clone(),
                    layer: l + 1,
                    callsigns: callsigns.clone(),
                    scores: m,
                });
            }
        }
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    for r in rows {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for line in std::io::BufReader::new(f).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

/// Linear baseline bundled with the statistics it was fitted under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlrBaseline {
    pub model: MlrModel,
    pub stats: NormStats,
}

impl MlrBaseline {
    pub fn fit(train: &[Scene], stats: &NormStats, n_max: usize) -> Result<Self> {
        let norm = normalize_all(train, stats, n_max);
        Ok(MlrBaseline {
            model: MlrModel::fit(&norm)?,
            stats: *stats,
        })
    }

    pub fn predict(&self, scenes: &[Scene], n_max: usize) -> Vec<PredictionRow> {
        let norm = normalize_all(scenes, &self.stats, n_max);
        let scenes = capped(scenes, n_max);
        let mut rows = Vec::new();
        for (s, ns) in scenes.iter().zip(&norm) {
            for (a, mu) in s.agents.iter().zip(self.model.predict_scene(ns, &self.stats)) {
                rows.push(PredictionRow {
                    scene_id: s.scene_id.clone(),
                    callsign: a.callsign.clone(),
                    mu_s: mu,
                    sigma_s: f64::NAN,
                    landing_t: s.t_end + mu,
                    y_true_s: a.remaining_s,
                });
            }
        }
        rows
    }
}

/// Joins predictions to label scenes by `(scene_id, callsign)`.
///
/// Any prediction without a label, or label without a prediction, is an
/// error listing the first ten mismatches.
pub fn align(rows: &[PredictionRow], labels: &[Scene], probabilistic: bool) -> Result<Vec<ScenePredictions>> {
    let mut by_key: BTreeMap<(&str, &str), &PredictionRow> = BTreeMap::new();
    for r in rows {
        by_key.insert((r.scene_id.as_str(), r.callsign.as_str()), r);
    }
    let mut mismatches = Vec::new();
    let mut out = Vec::with_capacity(labels.len());
    for s in labels {
        let mut sp = ScenePredictions {
            scene_id: s.scene_id.clone(),
            callsigns: Vec::new(),
            y: Vec::new(),
            mu: Vec::new(),
            sigma: probabilistic.then(Vec::new),
        };
        for a in &s.agents {
            match by_key.remove(&(s.scene_id.as_str(), a.callsign.as_str())) {
                Some(r) => {
                    sp.callsigns.push(a.callsign.clone());
                    sp.y.push(a.remaining_s);
                    sp.mu.push(r.mu_s);
                    if let Some(sg) = sp.sigma.as_mut() {
                        sg.push(r.sigma_s);
                    }
                }
                None => mismatches.push(format!("missing prediction {}/{}", s.scene_id, a.callsign)),
            }
        }
        if !sp.y.is_empty() {
            out.push(sp);
        }
    }
    for (scene, cs) in by_key.keys() {
        mismatches.push(format!("unlabelled prediction {scene}/{cs}"));
    }
    if !mismatches.is_empty() {
        let shown: Vec<_> = mismatches.iter().take(10).cloned().collect();
        return Err(Error::validation(format!(
            "{} misaligned rows; first: {}",
            mismatches.len(),
            shown.join(", ")
        )));
    }
    Ok(out)
}

/// Report for model predictions, plus the baseline's when given.
pub fn evaluate_predictions(
    rows: &[PredictionRow],
    labels: &[Scene],
    baseline: Option<(&MlrBaseline, usize)>,
) -> Result<(EvalReport, Option<EvalReport>)> {
    let ours = evaluate("model", &align(rows, labels, true)?)?;
    let base = match baseline {
        Some((b, n_max)) => {
            let capped_labels = capped(labels, n_max);
            let brows = b.predict(&capped_labels, n_max);
            Some(evaluate("MLR", &align(&brows, &capped_labels, false)?)?)
        }
        None => None,
    };
    Ok((ours, base))
}
