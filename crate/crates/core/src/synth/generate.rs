use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{bearing_deg, destination, great_circle_nm, LatLon, TrackPoint, TrajectoryTrack, Wtc};
use crate::synth::{AirspaceConfig, SeparationMatrix};

/// Clock value of the first entry; keeps all timestamps positive.
const CLOCK_START_S: f64 = 900.0;

/// A synthetic arrival with its ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedFlight {
    pub track: TrajectoryTrack,
    pub entry_fix: String,
    /// Time the flight crosses the ring.
    pub entry_t: f64,
    pub landing_t: f64,
    /// Extra flight time from sequencing and vectoring.
    pub delay_s: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct GenerationReport {
    pub flights: usize,
    pub landings_per_hr: f64,
    /// Offered load: mean required separation times arrival rate.
    pub utilization: f64,
    pub queued: usize,
    pub vectored: usize,
    pub mean_delay_s: f64,
    pub max_delay_s: f64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Corpus {
    /// In entry order.
    pub flights: Vec<GeneratedFlight>,
    pub report: GenerationReport,
}

/// Local azimuthal-equidistant frame around the airport, nm east/north.
#[derive(Debug, Clone, Copy)]
struct Frame {
    arp: LatLon,
}

impl Frame {
    fn to_xy(&self, p: LatLon) -> [f64; 2] {
        let r = great_circle_nm(self.arp, p).unwrap_or(0.0);
        let b = bearing_deg(self.arp, p).to_radians();
        [r * b.sin(), r * b.cos()]
    }

    fn to_latlon(&self, xy: [f64; 2]) -> LatLon {
        let r = xy[0].hypot(xy[1]);
        if r == 0.0 {
            return self.arp;
        }
        destination(self.arp, xy[0].atan2(xy[1]).to_degrees(), r)
    }
}

fn polar(r: f64, bearing: f64) -> [f64; 2] {
    let b = bearing.to_radians();
    [r * b.sin(), r * b.cos()]
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Apex of a triangular detour on `a -> b` that lengthens it by `extra_nm`,
/// placed on the side facing the origin.
pub fn dogleg_apex(a: [f64; 2], b: [f64; 2], extra_nm: f64) -> [f64; 2] {
    let d = dist(a, b);
    let h = (((d + extra_nm) / 2.0).powi(2) - (d / 2.0).powi(2)).max(0.0).sqrt();
    let mid = [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];
    let mut nrm = [-(b[1] - a[1]) / d, (b[0] - a[0]) / d];
    if nrm[0] * mid[0] + nrm[1] * mid[1] > 0.0 {
        nrm = [-nrm[0], -nrm[1]];
    }
    [mid[0] + h * nrm[0], mid[1] + h * nrm[1]]
}

/// Straight route length from an entry bearing to the airport via the merge fix.
pub fn nominal_route_nm(cfg: &AirspaceConfig, bearing: f64) -> f64 {
    let frame = Frame { arp: cfg.arp };
    let m = frame.to_xy(cfg.merge_fix.position());
    dist(polar(cfg.ring_nm, bearing), m) + dist(m, [0.0, 0.0])
}

/// Delay needed for a follower to keep separation behind its leader, both at
/// the merge fix and at landing. Times are the follower's unconstrained ones.
pub fn sequencing_delay(
    leader: Option<(Wtc, f64, f64)>,
    follower_wtc: Wtc,
    merge_t: f64,
    landing_t: f64,
    sep: &SeparationMatrix,
) -> f64 {
    let Some((lw, l_merge, l_land)) = leader else {
        return 0.0;
    };
    let req = sep.required(lw, follower_wtc);
    (l_merge + req - merge_t).max(l_land + req - landing_t).max(0.0)
}

struct Plan {
    wtc: Wtc,
    fix: usize,
    bearing: f64,
    speed_kt: f64,
    entry_t: f64,
    leg1: f64,
    leg2: f64,
    delay: f64,
    vectored: bool,
}

impl Plan {
    fn merge_t(&self) -> f64 {
        self.entry_t + (self.leg1 + self.delay_nm()) / self.speed_kt * 3600.0
    }

    fn landing_t(&self) -> f64 {
        self.merge_t() + self.leg2 / self.speed_kt * 3600.0
    }

    fn delay_nm(&self) -> f64 {
        self.delay * self.speed_kt / 3600.0
    }
}

fn pick_weighted<R: Rng>(rng: &mut R, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

/// Generates `n_flights` arrivals entering as a Poisson stream.
///
/// Flights are sequenced first come, first served on their unconstrained
/// landing time; any shortfall in separation is absorbed by a dog-leg on the
/// entry-to-merge leg.
pub fn generate_corpus(
    cfg: &AirspaceConfig,
    n_flights: usize,
    arrivals_per_hr: f64,
    seed: u64,
) -> Result<Corpus> {
    cfg.validate()?;
    if n_flights == 0 {
        return Err(Error::validation("n_flights must be positive"));
    }
    if !(arrivals_per_hr > 0.0) || !arrivals_per_hr.is_finite() {
        return Err(Error::validation("arrival rate must be positive"));
    }
    let mut report = GenerationReport {
        flights: n_flights,
        utilization: cfg.mean_separation_s() * arrivals_per_hr / 3600.0,
        ..Default::default()
    };
    if report.utilization > 1.0 {
        let msg = format!(
            "arrival rate {arrivals_per_hr}/hr exceeds runway capacity (utilization {:.2}); expect growing queues",
            report.utilization
        );
        log::warn!("{msg}");
        report.warnings.push(msg);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let frame = Frame { arp: cfg.arp };
    let merge = frame.to_xy(cfg.merge_fix.position());
    let leg2 = dist(merge, [0.0, 0.0]);
    let gaps = Exp::new(arrivals_per_hr / 3600.0).map_err(|e| Error::validation(e.to_string()))?;
    let std = |s: f64| Normal::new(0.0, s).map_err(|e| Error::validation(e.to_string()));
    let speed_noise = std(cfg.noise.speed_frac)?;
    let bearing_noise = std(cfg.noise.bearing_deg)?;
    let mix = cfg.wtc_mix.as_array();
    let fix_weights = vec![1.0; cfg.entry_fixes.len()];

    let mut plans = Vec::with_capacity(n_flights);
    let mut t = CLOCK_START_S;
    for i in 0..n_flights {
        if i > 0 {
            t += gaps.sample(&mut rng);
        }
        let wtc = Wtc::ALL[pick_weighted(&mut rng, &mix)];
        let fix = pick_weighted(&mut rng, &fix_weights);
        let bearing = cfg.entry_fixes[fix].bearing_deg + bearing_noise.sample(&mut rng);
        let nominal = cfg.speeds_kt.get(wtc);
        let speed_kt = (nominal * (1.0 + speed_noise.sample(&mut rng))).max(0.5 * nominal);
        let leg1 = dist(polar(cfg.ring_nm, bearing), merge);
        plans.push(Plan {
            wtc,
            fix,
            bearing,
            speed_kt,
            entry_t: t,
            leg1,
            leg2,
            delay: 0.0,
            vectored: false,
        });
    }

    let mut order: Vec<usize> = (0..n_flights).collect();
    order.sort_by(|&a, &b| plans[a].landing_t().total_cmp(&plans[b].landing_t()).then(a.cmp(&b)));
    let mut leader: Option<(Wtc, f64, f64)> = None;
    for &i in &order {
        let p = &plans[i];
        let mut delay = sequencing_delay(leader, p.wtc, p.merge_t(), p.landing_t(), &cfg.separation);
        let queued = delay > 0.0;
        let vectored = rng.random::<f64>() < cfg.vector_prob;
        if vectored {
            delay += rng.random::<f64>() * cfg.vector_max_s;
        }
        let p = &mut plans[i];
        p.delay = delay;
        p.vectored = vectored;
        report.queued += queued as usize;
        report.vectored += vectored as usize;
        leader = Some((p.wtc, p.merge_t(), p.landing_t()));
    }

    let mut flights = Vec::with_capacity(n_flights);
    for (i, p) in plans.iter().enumerate() {
        let track = fly(cfg, &frame, merge, p, &format!("SYN{i:05}"), &mut rng)?;
        flights.push(GeneratedFlight {
            landing_t: track.last_t(),
            track,
            entry_fix: cfg.entry_fixes[p.fix].name.clone(),
            entry_t: p.entry_t,
            delay_s: p.delay,
        });
    }
    let delays: Vec<f64> = flights.iter().map(|f| f.delay_s).collect();
    report.mean_delay_s = delays.iter().sum::<f64>() / n_flights as f64;
    report.max_delay_s = delays.iter().cloned().fold(0.0, f64::max);
    let (lo, hi) = flights.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), f| {
        (lo.min(f.landing_t), hi.max(f.landing_t))
    });
    report.landings_per_hr = if hi > lo {
        (n_flights - 1) as f64 / (hi - lo) * 3600.0
    } else {
        0.0
    };
    Ok(Corpus { flights, report })
}

/// Samples one flight along its planned path at irregular report intervals.
fn fly(
    cfg: &AirspaceConfig,
    frame: &Frame,
    merge: [f64; 2],
    p: &Plan,
    callsign: &str,
    rng: &mut ChaCha8Rng,
) -> Result<TrajectoryTrack> {
    let start = polar(cfg.pre_entry_nm, p.bearing);
    let entry = polar(cfg.ring_nm, p.bearing);
    let mut path = vec![start, entry];
    if p.delay > 0.0 {
        path.push(dogleg_apex(entry, merge, p.delay_nm()));
    }
    path.push(merge);
    path.push([0.0, 0.0]);
    let mut cum = vec![0.0];
    for w in path.windows(2) {
        cum.push(cum.last().unwrap() + dist(w[0], w[1]));
    }
    let total = *cum.last().unwrap();
    let pre = cfg.pre_entry_nm - cfg.ring_nm;
    let inside_len = total - pre;
    let t_start = p.entry_t - pre / p.speed_kt * 3600.0;
    let t_land = p.landing_t();

    let [lo, hi] = cfg.sample_interval_s;
    let interval = Uniform::new_inclusive(lo, hi).map_err(|e| Error::validation(e.to_string()))?;
    let pos_noise = Normal::new(0.0, cfg.noise.position_nm).map_err(|e| Error::validation(e.to_string()))?;
    let alt_noise = Normal::new(0.0, cfg.noise.alt_ft).map_err(|e| Error::validation(e.to_string()))?;

    let mut points = Vec::new();
    let mut t = t_start;
    let mut seg = 0;
    while t < t_land - 0.5 {
        let s = ((t - t_start) * p.speed_kt / 3600.0).min(total);
        while seg + 2 < cum.len() && cum[seg + 1] < s {
            seg += 1;
        }
        let len = cum[seg + 1] - cum[seg];
        let f = if len > 0.0 { (s - cum[seg]) / len } else { 0.0 };
        let (a, b) = (path[seg], path[seg + 1]);
        let xy = [
            a[0] + f * (b[0] - a[0]) + pos_noise.sample(rng),
            a[1] + f * (b[1] - a[1]) + pos_noise.sample(rng),
        ];
        let ll = frame.to_latlon(xy);
        let alt = (cfg.ring_alt_ft * (total - s) / inside_len + alt_noise.sample(rng)).max(0.0);
        points.push(TrackPoint::new(t, ll.lat, ll.lon, alt));
        t += interval.sample(rng);
    }
    points.push(TrackPoint::new(t_land, cfg.arp.lat, cfg.arp.lon, 0.0));
    let wtc = p.wtc;
    TrajectoryTrack::new(callsign, wtc, points)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeparationViolation {
    pub leader: String,
    pub follower: String,
    pub gap_s: f64,
    pub required_s: f64,
}

/// Consecutive landings whose gap falls short of the required separation by
/// more than one second.
pub fn check_separation(
    flights: &[GeneratedFlight],
    sep: &SeparationMatrix,
) -> Vec<SeparationViolation> {
    let mut by_landing: Vec<&GeneratedFlight> = flights.iter().collect();
    by_landing.sort_by(|a, b| a.landing_t.total_cmp(&b.landing_t));
    by_landing
        .windows(2)
        .filter_map(|w| {
            let (l, f) = (w[0], w[1]);
            let gap = f.landing_t - l.landing_t;
            let req = sep.required(l.track.wtc, f.track.wtc);
            (gap < req - 1.0).then(|| SeparationViolation {
                leader: l.track.callsign.clone(),
                follower: f.track.callsign.clone(),
                gap_s: gap,
                required_s: req,
            })
        })
        .collect()
}

/// Fraction of adjacent landings that land in the opposite order to entry.
pub fn inversion_rate(flights: &[GeneratedFlight]) -> f64 {
    if flights.len() < 2 {
        return 0.0;
    }
    let mut by_landing: Vec<&GeneratedFlight> = flights.iter().collect();
    by_landing.sort_by(|a, b| a.landing_t.total_cmp(&b.landing_t));
    let inverted = by_landing.windows(2).filter(|w| w[1].entry_t < w[0].entry_t).count();
    inverted as f64 / (flights.len() - 1) as f64
}
