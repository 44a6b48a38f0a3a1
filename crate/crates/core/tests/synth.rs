use landtime_core::geo::{destination, great_circle_nm, LatLon, TrackPoint, TrajectoryTrack, Wtc};
use landtime_core::synth::*;

fn quiet_config() -> AirspaceConfig {
    let mut cfg = AirspaceConfig::bundled();
    cfg.noise = Noise { speed_frac: 0.0, bearing_deg: 0.0, position_nm: 0.0, alt_ft: 0.0 };
    cfg.vector_prob = 0.0;
    cfg
}

/// Entry fixes straight out from the merge fix, so the route is a radial.
fn radial_config() -> AirspaceConfig {
    let mut cfg = quiet_config();
    let m = destination(cfg.arp, 20.0, 15.0);
    cfg.merge_fix = MergeFix { name: "M".into(), lat: m.lat, lon: m.lon };
    cfg.entry_fixes = vec![
        EntryFix { name: "A".into(), bearing_deg: 20.0 },
        EntryFix { name: "B".into(), bearing_deg: 20.0 + 1e-3 },
    ];
    cfg.wtc_mix = PerWtc { light: 0.0, medium: 1.0, heavy: 0.0, super_: 0.0 };
    cfg
}

#[test]
fn seventy_miles_at_240_knots_takes_1050_seconds() {
    let cfg = radial_config();
    let c = generate_corpus(&cfg, 1, 10.0, 3).unwrap();
    let f = &c.flights[0];
    assert_eq!(f.delay_s, 0.0);
    assert!((f.landing_t - f.entry_t - 70.0 / 240.0 * 3600.0).abs() < 1e-3, "{}", f.landing_t - f.entry_t);
    assert!((nominal_route_nm(&cfg, 20.0) - 70.0).abs() < 1e-6);
}

#[test]
fn follower_thirty_seconds_behind_is_delayed_sixty() {
    let sep = SeparationMatrix::default();
    let d = sequencing_delay(Some((Wtc::Medium, 1000.0, 1300.0)), Wtc::Medium, 1030.0, 1330.0, &sep);
    assert_eq!(d, 60.0);
    assert_eq!(sequencing_delay(None, Wtc::Medium, 1030.0, 1330.0, &sep), 0.0);
    // landing gap can bind even when the merge gap is fine
    let d = sequencing_delay(Some((Wtc::Heavy, 1000.0, 1300.0)), Wtc::Medium, 1200.0, 1350.0, &sep);
    assert_eq!(d, 70.0);
}

#[test]
fn generated_followers_are_delayed_to_restore_the_gap() {
    // replay: every queued flight ends up exactly one requirement behind its leader
    let cfg = quiet_config();
    let c = generate_corpus(&cfg, 300, 30.0, 17).unwrap();
    let mut by_landing: Vec<&GeneratedFlight> = c.flights.iter().collect();
    by_landing.sort_by(|a, b| a.landing_t.total_cmp(&b.landing_t));
    let mut queued = 0;
    for w in by_landing.windows(2) {
        let req = cfg.separation.required(w[0].track.wtc, w[1].track.wtc);
        assert!(w[1].landing_t - w[0].landing_t >= req - 1.0);
        if w[1].delay_s > 0.0 {
            queued += 1;
            assert!(w[1].delay_s >= 0.0);
        }
    }
    assert!(queued > 0);
    assert_eq!(c.report.queued, c.flights.iter().filter(|f| f.delay_s > 0.0).count());
}

#[test]
fn same_seed_gives_identical_corpus() {
    let cfg = AirspaceConfig::bundled();
    let a = generate_corpus(&cfg, 80, 20.0, 5).unwrap();
    let b = generate_corpus(&cfg, 80, 20.0, 5).unwrap();
    assert_eq!(serde_json::to_string(&a.flights).unwrap(), serde_json::to_string(&b.flights).unwrap());
    let c = generate_corpus(&cfg, 80, 20.0, 6).unwrap();
    assert_ne!(a.flights, c.flights);
}

#[test]
fn bundled_corpus_is_compliant_and_valid() {
    let cfg = AirspaceConfig::bundled();
    let c = generate_corpus(&cfg, 250, 20.0, 42).unwrap();
    assert!(check_separation(&c.flights, &cfg.separation).is_empty());
    for f in &c.flights {
        f.track.validate().unwrap();
        assert_eq!(f.landing_t, f.track.last_t());
        assert!(f.delay_s >= 0.0);
        assert!(f.track.callsign.starts_with("SYN"));
        for w in f.track.points.windows(2) {
            assert!(w[1].alt - w[0].alt <= 200.0, "{} climbs", f.track.callsign);
        }
        let first = f.track.points[0];
        let r = great_circle_nm(cfg.arp, LatLon::new(first.lat, first.lon)).unwrap();
        assert!(r > cfg.ring_nm, "starts inside the ring at {r} nm");
    }
    assert!(c.report.warnings.is_empty());
    assert!(c.report.landings_per_hr > 10.0 && c.report.landings_per_hr < 30.0);
}

#[test]
fn dense_traffic_produces_overtakes() {
    let cfg = AirspaceConfig::bundled();
    for seed in [1, 2, 3] {
        let c = generate_corpus(&cfg, 200, 20.0, seed).unwrap();
        assert!(inversion_rate(&c.flights) >= 0.01, "seed {seed}");
    }
}

#[test]
fn empty_corpus_has_no_violations() {
    assert!(check_separation(&[], &SeparationMatrix::default()).is_empty());
    assert_eq!(inversion_rate(&[]), 0.0);
}

fn flight(cs: &str, wtc: Wtc, land: f64) -> GeneratedFlight {
    let track = TrajectoryTrack::new(
        cs,
        wtc,
        vec![TrackPoint::new(land - 60.0, 37.0, 126.0, 1000.0), TrackPoint::new(land, 37.46, 126.44, 0.0)],
    )
    .unwrap();
    GeneratedFlight { track, entry_fix: "X".into(), entry_t: land - 100.0, landing_t: land, delay_s: 0.0 }
}

#[test]
fn hand_built_violation_is_reported_once() {
    let sep = SeparationMatrix::default();
    let f = [flight("A", Wtc::Medium, 1000.0), flight("B", Wtc::Medium, 1010.0), flight("C", Wtc::Medium, 1200.0)];
    let v = check_separation(&f, &sep);
    assert_eq!(v.len(), 1);
    assert_eq!((v[0].leader.as_str(), v[0].follower.as_str(), v[0].gap_s, v[0].required_s), ("A", "B", 10.0, 90.0));
    // within the one-second tolerance
    let ok = [flight("A", Wtc::Medium, 1000.0), flight("B", Wtc::Medium, 1089.5)];
    assert!(check_separation(&ok, &sep).is_empty());
}

#[test]
fn default_separation_matrix_reads_leader_then_follower() {
    let sep = SeparationMatrix::default();
    assert_eq!(sep.required(Wtc::Heavy, Wtc::Medium), 120.0);
    assert_eq!(sep.required(Wtc::Medium, Wtc::Heavy), 90.0);
    assert_eq!(sep.required(Wtc::Super, Wtc::Light), 180.0);
    assert_eq!(sep.required(Wtc::Light, Wtc::Super), 90.0);
    assert_eq!(AirspaceConfig::bundled().separation, sep);
}

#[test]
fn oversubscribed_rate_warns_but_completes() {
    let cfg = AirspaceConfig::bundled();
    let c = generate_corpus(&cfg, 60, 80.0, 1).unwrap();
    assert_eq!(c.report.warnings.len(), 1);
    assert!(c.report.utilization > 1.0);
    assert!(c.report.max_delay_s > 300.0);
    assert!(check_separation(&c.flights, &cfg.separation).is_empty());
}

#[test]
fn invalid_configs_and_arguments_are_rejected() {
    let base = AirspaceConfig::bundled();
    let mut bad = vec![];
    let mut c = base.clone();
    c.separation.matrix_s[1][2] = 0.0;
    bad.push(c);
    let mut c = base.clone();
    c.speeds_kt.heavy = -1.0;
    bad.push(c);
    let mut c = base.clone();
    c.entry_fixes[1].name = c.entry_fixes[0].name.clone();
    bad.push(c);
    let mut c = base.clone();
    c.vector_prob = 1.5;
    bad.push(c);
    let mut c = base.clone();
    c.entry_fixes.truncate(1);
    bad.push(c);
    for c in &bad {
        assert!(c.validate().is_err());
    }
    assert!(generate_corpus(&base, 0, 20.0, 1).is_err());
    assert!(generate_corpus(&base, 10, 0.0, 1).is_err());
}

#[test]
fn config_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("air.toml");
    std::fs::write(&p, AirspaceConfig::bundled_toml()).unwrap();
    assert_eq!(AirspaceConfig::from_path(&p).unwrap(), AirspaceConfig::bundled());
    let j = dir.path().join("air.json");
    std::fs::write(&j, serde_json::to_string(&AirspaceConfig::bundled()).unwrap()).unwrap();
    assert_eq!(AirspaceConfig::from_path(&j).unwrap(), AirspaceConfig::bundled());
    assert!((AirspaceConfig::bundled().merge_distance_nm() - 15.0).abs() < 0.01);
}

#[test]
fn dogleg_adds_the_requested_length() {
    let (a, b) = ([0.0, 70.0], [10.0, 12.0]);
    let apex = dogleg_apex(a, b, 8.0);
    let d = |p: [f64; 2], q: [f64; 2]| (p[0] - q[0]).hypot(p[1] - q[1]);
    assert!((d(a, apex) + d(apex, b) - d(a, b) - 8.0).abs() < 1e-9);
}
