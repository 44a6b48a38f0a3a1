mod common;

use common::oracles::{kendall_oracle, ranks_of, spearman_oracle};
use landtime_core::geo::{NormStats, NormalizedScene};
use landtime_core::metrics::*;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn point_metric_examples() {
    let m = point_metrics(&[100.0, 200.0], &[110.0, 190.0]).unwrap();
    assert!((m.mae - 10.0).abs() < 1e-12 && (m.rmse - 10.0).abs() < 1e-12 && (m.mape - 7.5).abs() < 1e-12);
    let z = point_metrics(&[5.0, 6.0], &[5.0, 6.0]).unwrap();
    assert_eq!((z.mae, z.rmse, z.mape), (0.0, 0.0, 0.0));
    assert!(point_metrics(&[], &[]).is_err());
    let floor = point_metrics(&[0.5, 10.0], &[1.5, 11.0]).unwrap();
    assert_eq!(floor.mape_excluded, 1);
    assert!((floor.mape - 10.0).abs() < 1e-12);
}

#[test]
fn rank_metric_examples() {
    assert_eq!(spearman_rho(&[1, 2, 3, 4], &[2, 1, 3, 4]).unwrap(), 0.8);
    assert_eq!(spearman_rho(&[1, 2, 3], &[1, 2, 3]).unwrap(), 1.0);
    assert_eq!(spearman_rho(&[1, 2, 3], &[3, 2, 1]).unwrap(), -1.0);
    assert_eq!(kendall_tau(&[1, 2, 3], &[1, 2, 3]).unwrap(), 1.0);
    assert!((kendall_tau(&[1, 2, 3], &[2, 1, 3]).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    assert!(spearman_rho(&[1], &[1]).is_err());
    assert!(kendall_tau(&[1, 2, 2], &[1, 2, 3]).is_err());
}

#[test]
fn ties_are_broken_by_callsign_and_flagged() {
    let (r, tied) = ranks_from_times(&[30.0, 10.0, 30.0], &["B", "C", "A"]);
    assert_eq!(r, vec![3, 1, 2]);
    assert!(tied);
    assert!(!ranks_from_times(&[3.0, 1.0], &["a", "b"]).1);
}

fn pearson(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<usize>() as f64 / n, b.iter().sum::<usize>() as f64 / n);
    let cov: f64 = a.iter().zip(b).map(|(&x, &y)| (x as f64 - ma) * (y as f64 - mb)).sum();
    let va: f64 = a.iter().map(|&x| (x as f64 - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|&y| (y as f64 - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn rank_metrics_match_brute_force_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..10_000 {
        let n = rng.random_range(2..=12);
        let mut a: Vec<usize> = (0..n).collect();
        let mut b = a.clone();
        a.shuffle(&mut rng);
        b.shuffle(&mut rng);
        let (ra, rb) = (ranks_of(&a), ranks_of(&b));
        assert_eq!(spearman_rho(&ra, &rb).unwrap(), spearman_oracle(&a, &b));
        assert_eq!(kendall_tau(&ra, &rb).unwrap(), kendall_oracle(&a, &b));
        assert!((spearman_rho(&ra, &rb).unwrap() - pearson(&ra, &rb)).abs() < 1e-12);
    }
}

#[test]
fn improvement_arithmetic_reference_values() {
    // (ours, second-best) pairs for MAE, RMSE, MAPE, rho, tau
    let pi = |a, b, k| performance_improvement(a, b, k).unwrap();
    assert!((pi(6.1930, 47.3400, MetricKind::Error) - 86.91).abs() <= 0.05);
    assert!((pi(13.6222, 79.1585, MetricKind::Error) - 82.80).abs() <= 0.05);
    assert!((pi(2.01, 8.17, MetricKind::Error) - 75.39).abs() <= 0.05);
    assert!((pi(1.000, 0.985, MetricKind::Rank) - 1.52).abs() <= 0.03);
    assert!((pi(1.000, 0.981, MetricKind::Rank) - 1.94).abs() <= 0.03);
    assert_eq!(pi(3.0, 3.0, MetricKind::Error), 0.0);
    assert!(performance_improvement(1.0, 0.0, MetricKind::Rank).is_err());
}

#[test]
fn calibration_cases() {
    let c = calibration(&[0.0, 10.0], &[2.0, 4.0], &[2.0, 6.0]).unwrap();
    assert_eq!((c.coverage_68, c.coverage_95), (1.0, 1.0));
    let far = calibration(&[0.0; 3], &[1e9; 3], &[5.0, -50.0, 500.0]).unwrap();
    assert_eq!(far.coverage_68, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let normal = rand_distr::Normal::new(0.0, 1.0).unwrap();
    let n = 20_000;
    let mu: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
    let sigma: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..3.0)).collect();
    let y: Vec<f64> = mu.iter().zip(&sigma).map(|(m, s)| m + s * rand_distr::Distribution::<f64>::sample(&normal, &mut rng)).collect();
    let c = calibration(&mu, &sigma, &y).unwrap();
    assert!((c.coverage_95 - 0.95).abs() < 0.02);
    assert!((c.coverage_68 - 0.6827).abs() < 0.02);
    assert!(c.nll.is_finite());
    assert!(calibration(&[0.0], &[0.0], &[0.0]).is_err());
}

fn report_scene(id: &str, y: &[f64], mu: &[f64]) -> ScenePredictions {
    ScenePredictions {
        scene_id: id.into(),
        callsigns: (0..y.len()).map(|i| format!("A{i}")).collect(),
        y: y.to_vec(),
        mu: mu.to_vec(),
        sigma: Some(vec![5.0; y.len()]),
    }
}

#[test]
fn evaluate_pools_points_and_averages_ranks() {
    let scenes = vec![
        report_scene("1", &[100.0, 200.0], &[110.0, 190.0]),
        report_scene("2", &[50.0, 60.0, 70.0], &[65.0, 55.0, 75.0]),
        report_scene("3", &[30.0], &[31.0]),
    ];
    let r = evaluate("ours", &scenes).unwrap();
    assert_eq!((r.n_samples, r.n_scenes, r.rank_skipped), (6, 3, 1));
    let pooled = point_metrics(&[100.0, 200.0, 50.0, 60.0, 70.0, 30.0], &[110.0, 190.0, 65.0, 55.0, 75.0, 31.0]).unwrap();
    assert_eq!(r.mae_s, pooled.mae);
    assert!((r.spearman_rho - (1.0 + 0.5) / 2.0).abs() < 1e-12);
    assert!((r.kendall_tau - (1.0 + 1.0 / 3.0) / 2.0).abs() < 1e-12);
    assert!(r.mae_s <= r.rmse_s);
    let mut shuffled = scenes.clone();
    shuffled.reverse();
    let r2 = evaluate("ours", &shuffled).unwrap();
    assert!((r2.mae_s - r.mae_s).abs() < 1e-12 && (r2.spearman_rho - r.spearman_rho).abs() < 1e-12);
    let table = format_table(&[&r, &r2]);
    assert!(table.lines().count() == 4 && table.contains("PI (%)"));
}

fn scene_with(rng: &mut ChaCha8Rng, n: usize, f: &dyn Fn(&[f64]) -> f64) -> NormalizedScene {
    let mut s = common::random_scene(rng, n, 20);
    for i in 0..n {
        s.y[i] = f(&s.x[i * 60..(i + 1) * 60]);
    }
    s
}

/// Ridge normal equations solved by Gaussian elimination with partial pivoting.
fn normal_equations_oracle(rows: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let k = rows[0].len() + 1;
    let mut a = vec![vec![0.0; k + 1]; k];
    for (r, &t) in rows.iter().zip(y) {
        let x: Vec<f64> = r.iter().copied().chain([1.0]).collect();
        for i in 0..k {
            for j in 0..k {
                a[i][j] += x[i] * x[j];
            }
            a[i][k] += x[i] * t;
        }
    }
    for (i, row) in a.iter_mut().enumerate() {
        row[i] += MLR_RIDGE;
    }
    for col in 0..k {
        let piv = (col..k).max_by(|&p, &q| a[p][col].abs().total_cmp(&a[q][col].abs())).unwrap();
        a.swap(col, piv);
        for r in 0..k {
            if r != col {
                let f = a[r][col] / a[col][col];
                for c in col..=k {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
    }
    (0..k).map(|i| a[i][k] / a[i][i]).collect()
}

#[test]
fn mlr_matches_normal_equation_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let scenes: Vec<NormalizedScene> = (0..25).map(|_| common::random_scene(&mut rng, 4, 20)).collect();
    let m = MlrModel::fit(&scenes).unwrap();
    let rows: Vec<Vec<f64>> = scenes.iter().flat_map(|s| (0..4).map(move |i| agent_features(s, i).to_vec())).collect();
    let y: Vec<f64> = scenes.iter().flat_map(|s| s.y.clone()).collect();
    assert_eq!(rows.len(), 100);
    let beta = normal_equations_oracle(&rows, &y);
    for (a, b) in m.weights.iter().chain([&m.bias]).zip(&beta) {
        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    }
}

#[test]
fn mlr_exact_and_constant_targets() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let coef: Vec<f64> = (0..60).map(|_| rng.random_range(-1.0..1.0)).collect();
    let lin = |x: &[f64]| 0.3 + x.iter().zip(&coef).map(|(a, b)| a * b).sum::<f64>();
    let scenes: Vec<_> = (0..40).map(|_| scene_with(&mut rng, 3, &lin)).collect();
    let m = MlrModel::fit(&scenes).unwrap();
    for s in &scenes {
        for i in 0..3 {
            assert!((m.predict_row(agent_features(s, i)) - s.y[i]).abs() <= 1e-6);
        }
    }
    let flat: Vec<_> = (0..40).map(|_| scene_with(&mut rng, 3, &|_| 0.25)).collect();
    let m = MlrModel::fit(&flat).unwrap();
    assert!(m.weights.iter().all(|w| w.abs() < 1e-6));
    assert!((m.bias - 0.25).abs() < 1e-6);
    assert!(MlrModel::fit(&flat[..5]).is_err());
}

#[test]
fn mlr_ignores_other_aircraft() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let scenes: Vec<_> = (0..30).map(|_| common::random_scene(&mut rng, 3, 20)).collect();
    let m = MlrModel::fit(&scenes).unwrap();
    let stats = NormStats { mean: [0.0; 3], std: [1.0; 3], target_mean: 500.0, target_std: 200.0 };
    let s = &scenes[0];
    let before = m.predict_scene(s, &stats);
    let mut edited = s.clone();
    for v in &mut edited.x[60..] {
        *v += 1.7;
    }
    let after = m.predict_scene(&edited, &stats);
    assert_eq!(before[0], after[0]);
    assert_ne!(before[1], after[1]);
}

proptest! {
    #[test]
    fn mae_never_exceeds_rmse(pairs in prop::collection::vec((0.0f64..2000.0, 0.0f64..2000.0), 1..50)) {
        let (y, p): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let m = point_metrics(&y, &p).unwrap();
        prop_assert!(m.mae <= m.rmse + 1e-9);
    }

    #[test]
    fn rank_metrics_survive_monotone_transforms(times in prop::collection::vec(1.0f64..1000.0, 2..12), pred in prop::collection::vec(1.0f64..1000.0, 12)) {
        let n = times.len();
        let keys: Vec<String> = (0..n).map(|i| format!("K{i:02}")).collect();
        let k: Vec<&str> = keys.iter().map(String::as_str).collect();
        let (rt, _) = ranks_from_times(&times, &k);
        let (rp, _) = ranks_from_times(&pred[..n], &k);
        let warped: Vec<f64> = pred[..n].iter().map(|v| v.ln() * 3.0 + 7.0).collect();
        let (rw, _) = ranks_from_times(&warped, &k);
        prop_assert_eq!(spearman_rho(&rt, &rp).unwrap(), spearman_rho(&rt, &rw).unwrap());
        prop_assert_eq!(kendall_tau(&rt, &rp).unwrap(), kendall_tau(&rt, &rw).unwrap());
        let rho = spearman_rho(&rt, &rp).unwrap();
        let tau = kendall_tau(&rt, &rp).unwrap();
        prop_assert!((-1.0..=1.0).contains(&rho) && (-1.0..=1.0).contains(&tau));
        prop_assert_eq!(rho == 1.0, rt == rp);
        prop_assert_eq!(tau == 1.0, rt == rp);
    }
}
