//! Monotone piecewise cubic Hermite interpolation (Fritsch–Carlson).

use crate::error::{Error, Result};
use crate::geo::{TrackPoint, TrajectoryTrack};

fn same_sign(a: f64, b: f64) -> bool {
    (a > 0.0 && b > 0.0) || (a < 0.0 && b < 0.0)
}

/// Knot derivatives: weighted harmonic mean of neighbouring secants in the
/// interior, shape-preserving three-point formula at the ends.
pub fn pchip_slopes(x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    let n = x.len();
    if n != y.len() {
        return Err(Error::Dimension {
            op: "pchip_slopes",
            lhs: vec![n],
            rhs: vec![y.len()],
        });
    }
    if n < 2 {
        return Err(Error::validation("PCHIP needs at least 2 knots"));
    }
    let mut h = Vec::with_capacity(n - 1);
    let mut delta = Vec::with_capacity(n - 1);
    for i in 0..n - 1 {
        let hi = x[i + 1] - x[i];
        if !(hi > 0.0) {
            return Err(Error::validation(format!(
                "knots must be strictly increasing (x[{}]={} , x[{}]={})",
                i,
                x[i],
                i + 1,
                x[i + 1]
            )));
        }
        h.push(hi);
        delta.push((y[i + 1] - y[i]) / hi);
    }
    if n == 2 {
        return Ok(vec![delta[0], delta[0]]);
    }
    let mut d = vec![0.0; n];
    for k in 1..n - 1 {
        if same_sign(delta[k - 1], delta[k]) {
            let w1 = 2.0 * h[k] + h[k - 1];
            let w2 = h[k] + 2.0 * h[k - 1];
            d[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
        }
    }
    d[0] = end_slope(h[0], h[1], delta[0], delta[1]);
    d[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    Ok(d)
}

fn end_slope(h0: f64, h1: f64, del0: f64, del1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * del0 - h0 * del1) / (h0 + h1);
    if !same_sign(d, del0) {
        0.0
    } else if !same_sign(del0, del1) && d.abs() > 3.0 * del0.abs() {
        3.0 * del0
    } else {
        d
    }
}

/// A fitted interpolant over one channel.
#[derive(Debug, Clone)]
pub struct Pchip {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl Pchip {
    pub fn new(x: &[f64], y: &[f64]) -> Result<Self> {
        let d = pchip_slopes(x, y)?;
        Ok(Pchip {
            x: x.to_vec(),
            y: y.to_vec(),
            d,
        })
    }

    pub fn slopes(&self) -> &[f64] {
        &self.d
    }

    /// Evaluates at `t`, clamping to the end knots outside the domain.
    pub fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        if t <= self.x[0] {
            return self.y[0];
        }
        if t >= self.x[n - 1] {
            return self.y[n - 1];
        }
        // interval k with x[k] <= t < x[k+1]
        let k = self.x.partition_point(|&xi| xi <= t) - 1;
        if t == self.x[k] {
            return self.y[k];
        }
        let h = self.x[k + 1] - self.x[k];
        let s = (t - self.x[k]) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        h00 * self.y[k] + h10 * h * self.d[k] + h01 * self.y[k + 1] + h11 * h * self.d[k + 1]
    }
}

/// Slack when deciding whether a timestamp sits on the grid.
pub(crate) const GRID_TOL: f64 = 1e-6;

/// Grid times `k·dt` inside `[t_first, t_last]`.
pub fn aligned_grid(t_first: f64, t_last: f64, dt: f64) -> Vec<f64> {
    let k0 = (t_first / dt - 1e-9).ceil() as i64;
    let k1 = (t_last / dt + 1e-9).floor() as i64;
    (k0..=k1).map(|k| k as f64 * dt).collect()
}

/// Resamples every channel onto the shared `dt` grid (multiples of `dt`
/// since the epoch) covering the track's time span. When the final report
/// is off the grid it is kept as the last point, so the landing time is
/// preserved exactly.
pub fn pchip_resample(track: &TrajectoryTrack, dt: f64) -> Result<TrajectoryTrack> {
    if !(dt > 0.0) {
        return Err(Error::validation(format!("resampling interval {dt} must be > 0")));
    }
    let t: Vec<f64> = track.points.iter().map(|p| p.t).collect();
    let chan = |f: fn(&TrackPoint) -> f64| -> Vec<f64> { track.points.iter().map(f).collect() };
    let lat = Pchip::new(&t, &chan(|p| p.lat))?;
    let lon = Pchip::new(&t, &chan(|p| p.lon))?;
    let alt = Pchip::new(&t, &chan(|p| p.alt))?;
    let grid = aligned_grid(t[0], t[t.len() - 1], dt);
    if grid.len() < 2 {
        return Err(Error::validation(format!(
            "track {} spans less than one {dt} s interval",
            track.callsign
        )));
    }
    let t_last = t[t.len() - 1];
    let on_grid = (grid[grid.len() - 1] - t_last).abs() <= GRID_TOL;
    let mut points: Vec<TrackPoint> = grid
        .into_iter()
        .map(|g| TrackPoint {
            t: g,
            lat: lat.eval(g),
            lon: lon.eval(g),
            alt: alt.eval(g).max(0.0),
        })
        .collect();
    if !on_grid {
        points.push(track.points[track.points.len() - 1]);
    }
    Ok(TrajectoryTrack {
        callsign: track.callsign.clone(),
        wtc: track.wtc,
        points,
    })
}
