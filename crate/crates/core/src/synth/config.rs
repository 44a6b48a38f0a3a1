use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{great_circle_nm, LatLon, Wtc};

const BUNDLED: &str = include_str!("default_airspace.toml");

/// One value per wake category.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerWtc {
    #[serde(rename = "L")]
    pub light: f64,
    #[serde(rename = "M")]
    pub medium: f64,
    #[serde(rename = "H")]
    pub heavy: f64,
    #[serde(rename = "J")]
    pub super_: f64,
}

impl PerWtc {
    pub fn get(&self, w: Wtc) -> f64 {
        self.as_array()[w.index()]
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.light, self.medium, self.heavy, self.super_]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryFix {
    pub name: String,
    /// Bearing from the airport at which the fix sits on the ring.
    pub bearing_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeFix {
    pub name: String,
    pub lat: f64,
    pub lon: f64,
}

impl MergeFix {
    pub fn position(&self) -> LatLon {
        LatLon::new(self.lat, self.lon)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Noise {
    /// Relative std-dev of per-flight ground speed.
    pub speed_frac: f64,
    /// Std-dev of the per-flight entry bearing offset.
    pub bearing_deg: f64,
    /// Std-dev of per-sample position noise.
    pub position_nm: f64,
    /// Std-dev of per-sample altitude noise.
    pub alt_ft: f64,
}

/// Required time separation, seconds, indexed `[leader][follower]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeparationMatrix {
    pub matrix_s: [[f64; 4]; 4],
}

impl SeparationMatrix {
    pub fn required(&self, leader: Wtc, follower: Wtc) -> f64 {
        self.matrix_s[leader.index()][follower.index()]
    }
}

impl Default for SeparationMatrix {
    fn default() -> Self {
        let mut m = [[90.0; 4]; 4];
        m[Wtc::Heavy.index()][Wtc::Medium.index()] = 120.0;
        m[Wtc::Super.index()][Wtc::Light.index()] = 180.0;
        SeparationMatrix { matrix_s: m }
    }
}

/// Terminal-area layout and traffic parameters for the generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AirspaceConfig {
    pub arp: LatLon,
    pub ring_nm: f64,
    /// Distance from the airport at which tracks start, outside the ring.
    pub pre_entry_nm: f64,
    pub ring_alt_ft: f64,
    pub entry_fixes: Vec<EntryFix>,
    pub merge_fix: MergeFix,
    pub speeds_kt: PerWtc,
    pub wtc_mix: PerWtc,
    pub separation: SeparationMatrix,
    pub noise: Noise,
    pub vector_prob: f64,
    /// Upper bound of the extra delay given to a randomly vectored flight.
    pub vector_max_s: f64,
    /// Range of the gap between consecutive surveillance reports.
    pub sample_interval_s: [f64; 2],
}

impl Default for AirspaceConfig {
    fn default() -> Self {
        Self::bundled()
    }
}

impl AirspaceConfig {
    /// The configuration shipped with the crate.
    pub fn bundled() -> Self {
        toml::from_str(BUNDLED).expect("bundled airspace config parses")
    }

    pub fn bundled_toml() -> &'static str {
        BUNDLED
    }

    /// Reads a `.toml` or `.json` file and validates it.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: AirspaceConfig = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => serde_json::from_str(&text)?,
            _ => toml::from_str(&text)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn merge_distance_nm(&self) -> f64 {
        great_circle_nm(self.arp, self.merge_fix.position()).unwrap_or(f64::NAN)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::validation(m));
        great_circle_nm(self.arp, self.merge_fix.position())?;
        if !(self.ring_nm > 0.0) || !(self.pre_entry_nm >= self.ring_nm) {
            return bad(format!(
                "need 0 < ring ({}) <= pre-entry start ({})",
                self.ring_nm, self.pre_entry_nm
            ));
        }
        if self.merge_distance_nm() >= self.ring_nm {
            return bad("merge fix must lie inside the ring".into());
        }
        if self.entry_fixes.len() < 2 {
            return bad("at least two entry fixes are required".into());
        }
        let names: BTreeSet<_> = self.entry_fixes.iter().map(|f| f.name.as_str()).collect();
        if names.len() != self.entry_fixes.len() {
            return bad("entry fix names must be distinct".into());
        }
        let mut bearings: Vec<f64> = self
            .entry_fixes
            .iter()
            .map(|f| f.bearing_deg.rem_euclid(360.0))
            .collect();
        bearings.sort_by(f64::total_cmp);
        if bearings.windows(2).any(|w| w[1] - w[0] < 1e-6)
            || bearings.iter().any(|b| !b.is_finite())
        {
            return bad("entry fixes must sit at distinct bearings".into());
        }
        if self.speeds_kt.as_array().iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return bad("speeds must be positive".into());
        }
        let mix = self.wtc_mix.as_array();
        if mix.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) || !(mix.iter().sum::<f64>() > 0.0) {
            return bad("wtc mix weights must be non-negative with a positive sum".into());
        }
        if self
            .separation
            .matrix_s
            .iter()
            .flatten()
            .any(|s| !(*s > 0.0) || !s.is_finite())
        {
            return bad("all separations must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.vector_prob) {
            return bad(format!("vector_prob {} outside [0, 1]", self.vector_prob));
        }
        if !(self.vector_max_s >= 0.0) {
            return bad("vector_max_s must be non-negative".into());
        }
        let n = self.noise;
        if [n.speed_frac, n.bearing_deg, n.position_nm, n.alt_ft]
            .iter()
            .any(|v| !(*v >= 0.0) || !v.is_finite())
            || n.speed_frac >= 0.5
        {
            return bad("noise std-devs must be non-negative (speed_frac < 0.5)".into());
        }
        let [lo, hi] = self.sample_interval_s;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return bad(format!("sample interval [{lo}, {hi}] is invalid"));
        }
        if !(self.ring_alt_ft > 0.0) {
            return bad("ring altitude must be positive".into());
        }
        Ok(())
    }

    /// Mix-weighted mean separation over leader/follower pairs.
    pub fn mean_separation_s(&self) -> f64 {
        let mix = self.wtc_mix.as_array();
        let total: f64 = mix.iter().sum();
        let mut acc = 0.0;
        for (i, pi) in mix.iter().enumerate() {
            for (j, pj) in mix.iter().enumerate() {
                acc += pi * pj * self.separation.matrix_s[i][j];
            }
        }
        acc / (total * total)
    }
}
