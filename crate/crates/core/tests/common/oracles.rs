use landtime_core::geo::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const ARP: LatLon = LatLon {
    lat: 37.4602,
    lon: 126.4407,
};

pub fn track(cs: &str, pts: &[(f64, f64, f64, f64)]) -> TrajectoryTrack {
    TrajectoryTrack::new(
        cs,
        Wtc::Medium,
        pts.iter()
            .map(|&(t, la, lo, al)| TrackPoint::new(t, la, lo, al))
            .collect(),
    )
    .unwrap()
}

/// Straight inbound track from `start_nm` on bearing `brg` to the airport.
pub fn inbound(brg: f64, start_nm: f64, n: usize) -> TrajectoryTrack {
    let pts: Vec<_> = (0..n)
        .map(|i| {
            let f = i as f64 / (n - 1) as f64;
            let p = destination(ARP, brg, start_nm * (1.0 - f));
            (i as f64 * 7.0, p.lat, p.lon, 20000.0 * (1.0 - f))
        })
        .collect();
    track("IN", &pts)
}

/// Last entry into the circle found by scanning a fine linear interpolation.
pub fn fine_grid_entry(tr: &TrajectoryTrack, radius: f64) -> TrackPoint {
    let mut last_entry = tr.points[0];
    let mut prev_in = great_circle_nm(LatLon::new(tr.points[0].lat, tr.points[0].lon), ARP).unwrap() <= radius;
    for w in tr.points.windows(2) {
        for s in 1..=2000 {
            let f = s as f64 / 2000.0;
            let p = TrackPoint::new(
                w[0].t + f * (w[1].t - w[0].t),
                w[0].lat + f * (w[1].lat - w[0].lat),
                w[0].lon + f * (w[1].lon - w[0].lon),
                w[0].alt + f * (w[1].alt - w[0].alt),
            );
            let inside = great_circle_nm(LatLon::new(p.lat, p.lon), ARP).unwrap() <= radius;
            if inside && !prev_in {
                last_entry = p;
            }
            prev_in = inside;
        }
    }
    last_entry
}

/// Reference monotone cubic: harmonic-mean interior slopes (Fritsch-Carlson
/// family with Brodlie weights), shape-preserving three-point end slopes,
/// evaluated in monomial form on each interval.
pub fn reference_pchip(x: &[f64], y: &[f64], q: f64) -> f64 {
    let n = x.len();
    let h: Vec<f64> = (0..n - 1).map(|i| x[i + 1] - x[i]).collect();
    let del: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
    let mut d = vec![0.0; n];
    if n == 2 {
        d = vec![del[0], del[0]];
    } else {
        for k in 1..n - 1 {
            if del[k - 1] * del[k] > 0.0 {
                let w1 = 2.0 * h[k] + h[k - 1];
                let w2 = h[k] + 2.0 * h[k - 1];
                d[k] = (w1 + w2) / (w1 / del[k - 1] + w2 / del[k]);
            }
        }
        let end = |h0: f64, h1: f64, m0: f64, m1: f64| {
            let mut s = ((2.0 * h0 + h1) * m0 - h0 * m1) / (h0 + h1);
            if s.signum() != m0.signum() {
                s = 0.0;
            } else if m0.signum() != m1.signum() && s.abs() > 3.0 * m0.abs() {
                s = 3.0 * m0;
            }
            s
        };
        d[0] = end(h[0], h[1], del[0], del[1]);
        d[n - 1] = end(h[n - 2], h[n - 3], del[n - 2], del[n - 3]);
    }
    let k = match x.iter().rposition(|&v| v <= q) {
        Some(k) if k < n - 1 => k,
        Some(_) => n - 2,
        None => 0,
    };
    let s = q - x[k];
    let c2 = (3.0 * del[k] - 2.0 * d[k] - d[k + 1]) / h[k];
    let c3 = (d[k] - 2.0 * del[k] + d[k + 1]) / (h[k] * h[k]);
    y[k] + s * (d[k] + s * (c2 + s * c3))
}

pub fn random_knots(rng: &mut ChaCha8Rng, n: usize, monotone: bool) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![rng.random_range(-5.0..5.0)];
    let mut y = vec![rng.random_range(-5.0..5.0)];
    for _ in 1..n {
        x.push(x.last().unwrap() + rng.random_range(0.05..3.0));
        let step = if monotone {
            rng.random_range(0.0..4.0)
        } else {
            rng.random_range(-4.0..4.0)
        };
        y.push(y.last().unwrap() + step);
    }
    (x, y)
}

/// Spearman from two landing orders (item ids, first to land first).
pub fn spearman_oracle(order_a: &[usize], order_b: &[usize]) -> f64 {
    let n = order_a.len();
    let pos = |order: &[usize], item: usize| order.iter().position(|&x| x == item).unwrap() as i64;
    let d: i64 = (0..n)
        .map(|item| (pos(order_a, item) - pos(order_b, item)).pow(2))
        .sum();
    1.0 - 6.0 * d as f64 / (n * (n * n - 1)) as f64
}

pub fn kendall_oracle(order_a: &[usize], order_b: &[usize]) -> f64 {
    let n = order_a.len();
    let before =
        |order: &[usize], x: usize, y: usize| order.iter().position(|&v| v == x) < order.iter().position(|&v| v == y);
    let (mut c, mut d) = (0i64, 0i64);
    for x in 0..n {
        for y in x + 1..n {
            if before(order_a, x, y) == before(order_b, x, y) {
                c += 1;
            } else {
                d += 1;
            }
        }
    }
    (c - d) as f64 / (n * (n - 1) / 2) as f64
}

pub fn ranks_of(order: &[usize]) -> Vec<usize> {
    let mut r = vec![0; order.len()];
    for (p, &item) in order.iter().enumerate() {
        r[item] = p + 1;
    }
    r
}
