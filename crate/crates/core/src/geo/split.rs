use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geo::Scene;

/// Train/validation/test partition of scenes.
#[derive(Debug, Clone, Default)]
pub struct DatasetSplit {
    pub train: Vec<Scene>,
    pub val: Vec<Scene>,
    pub test: Vec<Scene>,
    /// Scenes whose aircraft belong to groups assigned to different splits.
    pub dropped: usize,
    pub groups: [usize; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    pub ratios: [f64; 3],
    /// Width of the landing-time blocks that form split groups, seconds.
    pub block_s: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            ratios: [8.0, 1.0, 1.0],
            block_s: 3600.0,
        }
    }
}

/// Number of groups per split for `n` groups, each split getting at least one.
pub fn split_counts(n: usize, ratios: [f64; 3]) -> Result<[usize; 3]> {
    if ratios.iter().any(|r| !(*r > 0.0) || !r.is_finite()) {
        return Err(Error::validation(format!("split ratios {ratios:?} must be positive")));
    }
    if n < 3 {
        return Err(Error::validation(format!(
            "{n} groups cannot be split three ways"
        )));
    }
    let total: f64 = ratios.iter().sum();
    let share = |r: f64| ((n as f64 * r / total).round() as usize).max(1);
    let val = share(ratios[1]);
    let test = share(ratios[2]);
    if val + test >= n {
        return Err(Error::validation(format!(
            "{n} groups leave nothing for training at ratios {ratios:?}"
        )));
    }
    Ok([n - val - test, val, test])
}

fn landing_group(scene: &Scene, remaining_s: f64, block_s: f64) -> i64 {
    ((scene.t_end + remaining_s) / block_s + 1e-9).floor() as i64
}

/// Splits scenes by groups of flights so no aircraft appears in two splits.
///
/// Each flight is grouped by the block its landing time falls in; blocks are
/// shuffled with `seed` and dealt out by `ratios`. A scene is kept only when
/// all its aircraft belong to the same split.
pub fn split_dataset(scenes: Vec<Scene>, cfg: &SplitConfig, seed: u64) -> Result<DatasetSplit> {
    if !(cfg.block_s > 0.0) {
        return Err(Error::validation("split block size must be positive"));
    }
    let mut flight_group: BTreeMap<&str, i64> = BTreeMap::new();
    for s in &scenes {
        for a in &s.agents {
            flight_group
                .entry(a.callsign.as_str())
                .or_insert_with(|| landing_group(s, a.remaining_s, cfg.block_s));
        }
    }
    let mut groups: Vec<i64> = flight_group
        .values()
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let counts = split_counts(groups.len(), cfg.ratios)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    groups.shuffle(&mut rng);
    let mut assign: BTreeMap<i64, usize> = BTreeMap::new();
    for (i, g) in groups.iter().enumerate() {
        let which = if i < counts[0] {
            0
        } else if i < counts[0] + counts[1] {
            1
        } else {
            2
        };
        assign.insert(*g, which);
    }
    let flight_split: BTreeMap<String, usize> = flight_group
        .iter()
        .map(|(cs, g)| (cs.to_string(), assign[g]))
        .collect();

    let mut out = DatasetSplit {
        groups: counts,
        ..Default::default()
    };
    for s in scenes {
        let mut splits = s.agents.iter().map(|a| flight_split[&a.callsign]);
        let first = splits.next();
        match first {
            Some(k) if splits.all(|x| x == k) => match k {
                0 => out.train.push(s),
                1 => out.val.push(s),
                _ => out.test.push(s),
            },
            _ => out.dropped += 1,
        }
    }
    Ok(out)
}
