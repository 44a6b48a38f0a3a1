//! Trajectory ingest and preprocessing: 70 nm truncation, PCHIP resampling
//! onto a 6 s grid, sliding-window scenes, normalization and splitting.

mod boundary;
mod norm;
mod pchip;
mod scene;
mod split;
mod track;

pub use boundary::{
    bearing_deg, destination, great_circle_nm, truncate_at_boundary, LatLon, EARTH_RADIUS_KM, KM_PER_NM};
pub use norm::{denormalize_window, normalize_scene, NormStats, NormalizedScene};
pub use pchip::{aligned_grid, pchip_resample, pchip_slopes, Pchip};
pub use scene::{
    build_scenes, keep_closest, read_scenes, read_scenes_jsonl, write_scenes, write_scenes_jsonl,
    Scene, SceneAgent, SceneBuildReport, SceneParams, STEP_S, WINDOW_STEPS,
};
pub use split::{split_counts, split_dataset, DatasetSplit, SplitConfig};
pub use track::{
    read_tracks, read_tracks_csv, read_tracks_jsonl, write_tracks, write_tracks_csv,
    write_tracks_jsonl, TrackPoint, TrajectoryTrack, Wtc,
};

/// Counts from [`preprocess_tracks`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize)]
pub struct PreprocessReport {
    pub input_tracks: usize,
    pub kept: usize,
    /// Tracks that never finish inside the boundary circle.
    pub outside_boundary: usize,
    /// Tracks too short to resample.
    pub too_short: usize,
}

/// Truncation then resampling for every track; excluded tracks are counted.
pub fn preprocess_tracks(
    tracks: &[TrajectoryTrack],
    arp: LatLon,
    radius_nm: f64,
    dt: f64,
) -> crate::Result<(Vec<TrajectoryTrack>, PreprocessReport)> {
    let mut report = PreprocessReport {
        input_tracks: tracks.len(),
        ..Default::default()
    };
    let mut out = Vec::with_capacity(tracks.len());
    for tr in tracks {
        let Some(cut) = truncate_at_boundary(tr, arp, radius_nm) else {
            report.outside_boundary += 1;
            continue;
        };
        if cut.points.len() < 2 {
            report.too_short += 1;
            continue;
        }
        match pchip_resample(&cut, dt) {
            Ok(r) => out.push(r),
            Err(crate::Error::Validation(msg)) if msg.contains("less than one") => {
                report.too_short += 1;
            }
            Err(e) => return Err(e),
        }
    }
    report.kept = out.len();
    Ok((out, report))
}
