use std::fmt;
use std::io::{BufRead, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Wake turbulence category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Wtc {
    Light,
    Medium,
    Heavy,
    Super,
}

impl Wtc {
    pub const ALL: [Wtc; 4] = [Wtc::Light, Wtc::Medium, Wtc::Heavy, Wtc::Super];

    pub fn index(self) -> usize {
        self as usize
    }

    /// ICAO letter: L, M, H, J.
    pub fn code(self) -> &'static str {
        match self {
            Wtc::Light => "L",
            Wtc::Medium => "M",
            Wtc::Heavy => "H",
            Wtc::Super => "J",
        }
    }
}

impl fmt::Display for Wtc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Wtc {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "l" | "light" => Ok(Wtc::Light),
            "m" | "medium" => Ok(Wtc::Medium),
            "h" | "heavy" => Ok(Wtc::Heavy),
            "j" | "s" | "super" => Ok(Wtc::Super),
            other => Err(Error::validation(format!("unknown WTC code `{other}`"))),
        }
    }
}

impl Serialize for Wtc {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.code())
    }
}

impl<'de> Deserialize<'de> for Wtc {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One surveillance sample: UNIX seconds, degrees, degrees, feet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackPoint {
    pub t: f64,
    pub lat: f64,
    pub lon: f64,
    pub alt: f64,
}

impl TrackPoint {
    pub fn new(t: f64, lat: f64, lon: f64, alt: f64) -> Self {
        TrackPoint { t, lat, lon, alt }
    }

    pub fn channels(&self) -> [f64; 3] {
        [self.lat, self.lon, self.alt]
    }
}

/// One aircraft's timestamped 3-D path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryTrack {
    pub callsign: String,
    pub wtc: Wtc,
    pub points: Vec<TrackPoint>,
}

impl TrajectoryTrack {
    /// Builds a track and checks every invariant.
    pub fn new(callsign: impl Into<String>, wtc: Wtc, points: Vec<TrackPoint>) -> Result<Self> {
        let track = TrajectoryTrack {
            callsign: callsign.into(),
            wtc,
            points,
        };
        track.validate()?;
        Ok(track)
    }

    pub fn validate(&self) -> Result<()> {
        let cs = &self.callsign;
        if self.points.len() < 2 {
            return Err(Error::validation(format!("track {cs} has fewer than 2 points")));
        }
        for (i, p) in self.points.iter().enumerate() {
            if !(p.t.is_finite() && p.lat.is_finite() && p.lon.is_finite() && p.alt.is_finite()) {
                return Err(Error::validation(format!("track {cs} point {i} is not finite")));
            }
            if !(-90.0..=90.0).contains(&p.lat) || !(-180.0..=180.0).contains(&p.lon) {
                return Err(Error::validation(format!(
                    "track {cs} point {i} has out-of-range coordinates ({}, {})",
                    p.lat, p.lon
                )));
            }
            if p.alt < 0.0 {
                return Err(Error::validation(format!("track {cs} point {i} has negative altitude")));
            }
            if i > 0 && p.t <= self.points[i - 1].t {
                return Err(Error::validation(format!(
                    "track {cs} timestamps not strictly increasing at point {i}"
                )));
            }
        }
        Ok(())
    }

    pub fn first_t(&self) -> f64 {
        self.points[0].t
    }

    /// Final timestamp, taken as the landing time.
    pub fn last_t(&self) -> f64 {
        self.points[self.points.len() - 1].t
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    callsign: String,
    wtc: Wtc,
    t: f64,
    lat: f64,
    lon: f64,
    alt: f64,
}

/// Reads `callsign,wtc,t,lat,lon,alt` rows; consecutive rows with the same
/// callsign form one track.
pub fn read_tracks_csv<R: Read>(reader: R) -> Result<Vec<TrajectoryTrack>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let expected = ["callsign", "wtc", "t", "lat", "lon", "alt"];
    if headers.len() != expected.len() || headers.iter().zip(expected).any(|(h, e)| h != e) {
        return Err(Error::validation(format!(
            "expected header `{}`, got `{}`",
            expected.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut tracks: Vec<TrajectoryTrack> = Vec::new();
    for row in rdr.deserialize::<CsvRow>() {
        let row = row?;
        let point = TrackPoint::new(row.t, row.lat, row.lon, row.alt);
        match tracks.last_mut() {
            Some(tr) if tr.callsign == row.callsign => {
                if tr.wtc != row.wtc {
                    return Err(Error::validation(format!(
                        "track {} changes WTC mid-track",
                        row.callsign
                    )));
                }
                tr.points.push(point);
            }
            _ => tracks.push(TrajectoryTrack {
                callsign: row.callsign,
                wtc: row.wtc,
                points: vec![point],
            }),
        }
    }
    for tr in &tracks {
        tr.validate()?;
    }
    Ok(tracks)
}

pub fn write_tracks_csv<W: Write>(writer: W, tracks: &[TrajectoryTrack]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for tr in tracks {
        for p in &tr.points {
            w.serialize(CsvRow {
                callsign: tr.callsign.clone(),
                wtc: tr.wtc,
                t: p.t,
                lat: p.lat,
                lon: p.lon,
                alt: p.alt,
            })?;
        }
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// One JSON track object per line.
pub fn read_tracks_jsonl<R: BufRead>(reader: R) -> Result<Vec<TrajectoryTrack>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(format!("<jsonl line {}>", i + 1), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let tr: TrajectoryTrack = serde_json::from_str(&line)?;
        tr.validate()?;
        out.push(tr);
    }
    Ok(out)
}

pub fn write_tracks_jsonl<W: Write>(mut writer: W, tracks: &[TrajectoryTrack]) -> Result<()> {
    for tr in tracks {
        serde_json::to_writer(&mut writer, tr)?;
        writer
            .write_all(b"\n")
            .map_err(|e| Error::io("<jsonl>", e))?;
    }
    Ok(())
}

fn is_jsonl(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()),
        Some("jsonl") | Some("json") | Some("ndjson")
    )
}

/// Reads a track file, choosing CSV or JSON-lines by extension.
pub fn read_tracks(path: &Path) -> Result<Vec<TrajectoryTrack>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = std::io::BufReader::new(file);
    if is_jsonl(path) {
        read_tracks_jsonl(reader)
    } else {
        read_tracks_csv(reader)
    }
}

pub fn write_tracks(path: &Path, tracks: &[TrajectoryTrack]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    if is_jsonl(path) {
        write_tracks_jsonl(&mut w, tracks)?;
    } else {
        write_tracks_csv(&mut w, tracks)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
