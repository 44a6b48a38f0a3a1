use crate::error::{Error, Result};
use crate::geo::{TrackPoint, TrajectoryTrack};

pub const EARTH_RADIUS_KM: f64 = 6371.0;
pub const KM_PER_NM: f64 = 1.852;

/// Latitude/longitude in degrees.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LatLon {
    pub lat: f64,
    pub lon: f64,
}

impl LatLon {
    pub fn new(lat: f64, lon: f64) -> Self {
        LatLon { lat, lon }
    }

    fn check(&self) -> Result<()> {
        if !(-90.0..=90.0).contains(&self.lat) || !(-180.0..=180.0).contains(&self.lon) {
            return Err(Error::validation(format!(
                "coordinate ({}, {}) out of range",
                self.lat, self.lon
            )));
        }
        Ok(())
    }
}

/// Haversine distance in nautical miles.
pub fn great_circle_nm(p1: LatLon, p2: LatLon) -> Result<f64> {
    p1.check()?;
    p2.check()?;
    Ok(haversine_nm(p1, p2))
}

pub(crate) fn haversine_nm(p1: LatLon, p2: LatLon) -> f64 {
    let (phi1, phi2) = (p1.lat.to_radians(), p2.lat.to_radians());
    let dphi = phi2 - phi1;
    let dlambda = (p2.lon - p1.lon).to_radians();
    let a = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    let c = 2.0 * a.sqrt().min(1.0).asin();
    EARTH_RADIUS_KM * c / KM_PER_NM
}

/// Point reached from `p` after `dist_nm` along the great circle at `bearing_deg`.
pub fn destination(p: LatLon, bearing_deg: f64, dist_nm: f64) -> LatLon {
    let delta = dist_nm * KM_PER_NM / EARTH_RADIUS_KM;
    let theta = bearing_deg.to_radians();
    let (phi1, l1) = (p.lat.to_radians(), p.lon.to_radians());
    let phi2 = (phi1.sin() * delta.cos() + phi1.cos() * delta.sin() * theta.cos()).asin();
    let l2 = l1
        + (theta.sin() * delta.sin() * phi1.cos()).atan2(delta.cos() - phi1.sin() * phi2.sin());
    let lon = (l2.to_degrees() + 540.0).rem_euclid(360.0) - 180.0;
    LatLon::new(phi2.to_degrees(), lon)
}

/// Initial great-circle bearing from `p1` to `p2`, degrees in `[0, 360)`.
pub fn bearing_deg(p1: LatLon, p2: LatLon) -> f64 {
    let (phi1, phi2) = (p1.lat.to_radians(), p2.lat.to_radians());
    let dl = (p2.lon - p1.lon).to_radians();
    let y = dl.sin() * phi2.cos();
    let x = phi1.cos() * phi2.sin() - phi1.sin() * phi2.cos() * dl.cos();
    y.atan2(x).to_degrees().rem_euclid(360.0)
}

fn dist_to(p: &TrackPoint, arp: LatLon) -> f64 {
    haversine_nm(LatLon::new(p.lat, p.lon), arp)
}

fn lerp_point(a: &TrackPoint, b: &TrackPoint, f: f64) -> TrackPoint {
    TrackPoint {
        t: a.t + f * (b.t - a.t),
        lat: a.lat + f * (b.lat - a.lat),
        lon: a.lon + f * (b.lon - a.lon),
        alt: a.alt + f * (b.alt - a.alt),
    }
}

/// Cuts the track so it begins where it last enters the `radius_nm` circle.
///
/// The entry point is interpolated between the bracketing samples. Returns
/// `None` when the track does not finish inside the circle.
pub fn truncate_at_boundary(
    track: &TrajectoryTrack,
    arp: LatLon,
    radius_nm: f64,
) -> Option<TrajectoryTrack> {
    let pts = &track.points;
    let last = pts.last()?;
    if dist_to(last, arp) > radius_nm {
        return None;
    }
    // first index of the trailing run of inside points
    let mut start = pts.len() - 1;
    while start > 0 && dist_to(&pts[start - 1], arp) <= radius_nm {
        start -= 1;
    }
    if start == 0 {
        return Some(track.clone());
    }
    let (outside, inside) = (&pts[start - 1], &pts[start]);
    // distance is continuous along the segment: bisect for the crossing
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if dist_to(&lerp_point(outside, inside, mid), arp) > radius_nm {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let crossing = lerp_point(outside, inside, hi);
    let mut points = Vec::with_capacity(pts.len() - start + 1);
    if crossing.t < inside.t - 1e-9 {
        points.push(crossing);
    }
    points.extend_from_slice(&pts[start..]);
    Some(TrajectoryTrack {
        callsign: track.callsign.clone(),
        wtc: track.wtc,
        points,
    })
}
