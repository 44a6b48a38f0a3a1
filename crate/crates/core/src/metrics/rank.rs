use crate::error::{Error, Result};

/// 1-based landing order from landing times; ties fall back to `keys`.
///
/// The flag is true when any tie had to be broken.
pub fn ranks_from_times(times: &[f64], keys: &[&str]) -> (Vec<usize>, bool) {
    let mut idx: Vec<usize> = (0..times.len()).collect();
    idx.sort_by(|&a, &b| times[a].total_cmp(&times[b]).then_with(|| keys[a].cmp(keys[b])));
    let tied = idx.windows(2).any(|w| times[w[0]] == times[w[1]]);
    let mut ranks = vec![0; times.len()];
    for (r, &i) in idx.iter().enumerate() {
        ranks[i] = r + 1;
    }
    (ranks, tied)
}

fn check_perms(a: &[usize], b: &[usize]) -> Result<usize> {
    let n = a.len();
    if n < 2 || b.len() != n {
        return Err(Error::validation(format!(
            "rank correlation needs two sequences of equal length >= 2, got {} and {}",
            n,
            b.len()
        )));
    }
    for s in [a, b] {
        let mut seen = vec![false; n];
        for &r in s {
            if r == 0 || r > n || std::mem::replace(&mut seen[r - 1], true) {
                return Err(Error::validation("ranks must be a permutation of 1..=N"));
            }
        }
    }
    Ok(n)
}

/// `1 − 6 Σ d² / (N (N² − 1))` over rank differences.
pub fn spearman_rho(truth: &[usize], pred: &[usize]) -> Result<f64> {
    let n = check_perms(truth, pred)? as f64;
    let d2: f64 = truth
        .iter()
        .zip(pred)
        .map(|(&a, &b)| (a as f64 - b as f64).powi(2))
        .sum();
    Ok(1.0 - 6.0 * d2 / (n * (n * n - 1.0)))
}

/// Kendall's tau-a: `(concordant − discordant) / C(N, 2)`.
pub fn kendall_tau(truth: &[usize], pred: &[usize]) -> Result<f64> {
    let n = check_perms(truth, pred)?;
    let mut score: i64 = 0;
    for i in 0..n {
        for j in i + 1..n {
            let a = truth[i] as i64 - truth[j] as i64;
            let b = pred[i] as i64 - pred[j] as i64;
            score += (a * b).signum();
        }
    }
    Ok(score as f64 / (n * (n - 1) / 2) as f64)
}
