use std::collections::BTreeSet;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::pchip::GRID_TOL;
use crate::geo::{TrajectoryTrack, Wtc};

/// Observation window length in samples.
pub const WINDOW_STEPS: usize = 20;
/// Resampling interval in seconds.
pub const STEP_S: f64 = 6.0;

/// One aircraft inside a scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneAgent {
    pub callsign: String,
    pub wtc: Wtc,
    /// `T` rows of `[lat, lon, alt]`, oldest first, last row at `t_end`.
    pub window: Vec<[f64; 3]>,
    pub remaining_s: f64,
}

/// All qualifying aircraft over one observation window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub scene_id: String,
    pub t_end: f64,
    pub dt: f64,
    pub agents: Vec<SceneAgent>,
}

impl Scene {
    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn validate(&self, n_max: usize) -> Result<()> {
        let id = &self.scene_id;
        if self.agents.is_empty() || self.agents.len() > n_max {
            return Err(Error::validation(format!(
                "scene {id} has {} agents (allowed 1..={n_max})",
                self.agents.len()
            )));
        }
        if self.dt != STEP_S {
            return Err(Error::validation(format!("scene {id} has dt {} != {STEP_S}", self.dt)));
        }
        for a in &self.agents {
            if a.window.len() != WINDOW_STEPS {
                return Err(Error::validation(format!(
                    "scene {id} agent {} has {} samples, expected {WINDOW_STEPS}",
                    a.callsign,
                    a.window.len()
                )));
            }
            if !(a.remaining_s > 0.0) || !a.remaining_s.is_finite() {
                return Err(Error::validation(format!(
                    "scene {id} agent {} has remaining_s {}",
                    a.callsign, a.remaining_s
                )));
            }
            if a.window.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::validation(format!(
                    "scene {id} agent {} has non-finite samples",
                    a.callsign
                )));
            }
        }
        Ok(())
    }
}

/// Parameters of the sliding-window scene builder.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SceneParams {
    pub dt: f64,
    pub steps: usize,
    pub n_max: usize,
}

impl Default for SceneParams {
    fn default() -> Self {
        SceneParams {
            dt: STEP_S,
            steps: WINDOW_STEPS,
            n_max: 16,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SceneBuildReport {
    pub scenes: usize,
    /// Scenes that held more than `n_max` aircraft and were cut down.
    pub truncated: usize,
}

/// Grid index span `[first, last]` of a resampled track. Only the final
/// point (the landing) may fall between grid times.
pub(crate) fn grid_span(track: &TrajectoryTrack, dt: f64) -> Result<(i64, i64)> {
    let k0 = (track.first_t() / dt).round() as i64;
    let n = track.points.len();
    for (i, p) in track.points.iter().enumerate() {
        let expected = (k0 + i as i64) as f64 * dt;
        let last_between = i + 1 == n && p.t > expected - dt && p.t < expected;
        if (p.t - expected).abs() > GRID_TOL && !last_between {
            return Err(Error::validation(format!(
                "track {} is not on the {dt} s grid at point {i}",
                track.callsign
            )));
        }
    }
    let on_grid_last = if (track.last_t() - (k0 + n as i64 - 1) as f64 * dt).abs() <= GRID_TOL {
        n - 1
    } else {
        n - 2
    };
    Ok((k0, k0 + on_grid_last as i64))
}

/// Sliding-window scenes over tracks already resampled onto the common grid.
///
/// An aircraft joins the scene ending at grid time `t_end` when it has a full
/// `steps`-sample history ending at `t_end` and lands strictly later.
pub fn build_scenes(
    tracks: &[TrajectoryTrack],
    params: SceneParams,
) -> Result<(Vec<Scene>, SceneBuildReport)> {
    let SceneParams { dt, steps, n_max } = params;
    if steps == 0 || n_max == 0 {
        return Err(Error::validation("steps and n_max must be positive"));
    }
    // eligible t_end indices per track: [k0 + steps - 1, k_last - 1]
    let mut spans = Vec::with_capacity(tracks.len());
    for (i, tr) in tracks.iter().enumerate() {
        let (k0, k1) = grid_span(tr, dt)?;
        let first = k0 + steps as i64 - 1;
        // the last window must end strictly before landing
        let last = if k1 as f64 * dt < tr.last_t() - GRID_TOL { k1 } else { k1 - 1 };
        if first <= last {
            spans.push((first, last, i));
        }
    }
    spans.sort();
    let mut scenes = Vec::new();
    let mut report = SceneBuildReport::default();
    let Some(&(k_start, _, _)) = spans.first() else {
        return Ok((scenes, report));
    };
    let k_stop = spans.iter().map(|s| s.1).max().unwrap();

    let mut active: BTreeSet<(usize, i64)> = BTreeSet::new();
    let mut next = 0usize;
    for k in k_start..=k_stop {
        while next < spans.len() && spans[next].0 == k {
            active.insert((spans[next].2, spans[next].1));
            next += 1;
        }
        active.retain(|&(_, last)| last >= k);
        if active.is_empty() {
            continue;
        }
        let t_end = k as f64 * dt;
        let mut agents: Vec<SceneAgent> = active
            .iter()
            .map(|&(i, _)| {
                let tr = &tracks[i];
                let (k0, _) = grid_span(tr, dt).expect("validated above");
                let end = (k - k0) as usize;
                let window = tr.points[end + 1 - steps..=end]
                    .iter()
                    .map(|p| p.channels())
                    .collect();
                SceneAgent {
                    callsign: tr.callsign.clone(),
                    wtc: tr.wtc,
                    window,
                    remaining_s: tr.last_t() - t_end,
                }
            })
            .collect();
        if agents.len() > n_max {
            log::warn!(
                "scene at t={t_end} has {} aircraft; keeping the {n_max} closest to landing",
                agents.len()
            );
            agents = keep_closest(agents, n_max);
            report.truncated += 1;
        }
        scenes.push(Scene {
            scene_id: format!("{t_end:.0}"),
            t_end,
            dt,
            agents,
        });
    }
    report.scenes = scenes.len();
    Ok((scenes, report))
}

/// The `n_max` agents with the smallest remaining time, original order kept.
pub fn keep_closest(agents: Vec<SceneAgent>, n_max: usize) -> Vec<SceneAgent> {
    if agents.len() <= n_max {
        return agents;
    }
    let mut order: Vec<usize> = (0..agents.len()).collect();
    order.sort_by(|&a, &b| {
        agents[a]
            .remaining_s
            .total_cmp(&agents[b].remaining_s)
            .then(a.cmp(&b))
    });
    let mut keep = vec![false; agents.len()];
    for &i in &order[..n_max] {
        keep[i] = true;
    }
    agents
        .into_iter()
        .zip(keep)
        .filter_map(|(a, k)| k.then_some(a))
        .collect()
}

pub fn read_scenes_jsonl<R: BufRead>(reader: R) -> Result<Vec<Scene>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(format!("<scenes line {}>", i + 1), e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

pub fn write_scenes_jsonl<W: Write>(mut writer: W, scenes: &[Scene]) -> Result<()> {
    for s in scenes {
        serde_json::to_writer(&mut writer, s)?;
        writer.write_all(b"\n").map_err(|e| Error::io("<scenes>", e))?;
    }
    Ok(())
}

pub fn read_scenes(path: &Path) -> Result<Vec<Scene>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_scenes_jsonl(std::io::BufReader::new(f))
}

pub fn write_scenes(path: &Path, scenes: &[Scene]) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(f);
    write_scenes_jsonl(&mut w, scenes)?;
    w.flush().map_err(|e| Error::io(path, e))
}
