#![allow(dead_code)]

pub mod oracles;

use landtime_core::geo::NormalizedScene;
use landtime_core::model::{Model, ModelConfig, SceneBatch};
use landtime_core::numerics::{ParamId, Tape};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn random_scene(rng: &mut ChaCha8Rng, n: usize, steps: usize) -> NormalizedScene {
    NormalizedScene {
        n_agents: n,
        steps,
        x: (0..n * steps * 3).map(|_| rng.random_range(-2.0..2.0)).collect(),
        y: (0..n).map(|_| rng.random_range(-1.5..1.5)).collect(),
        wtc: (0..n).map(|_| rng.random_range(0..4)).collect(),
    }
}

/// Reordered copy: agent `i` of the result is agent `perm[i]` of `s`.
pub fn permute_scene(s: &NormalizedScene, perm: &[usize]) -> NormalizedScene {
    let block = s.steps * 3;
    NormalizedScene {
        n_agents: s.n_agents,
        steps: s.steps,
        x: perm
            .iter()
            .flat_map(|&p| s.x[p * block..(p + 1) * block].iter().copied())
            .collect(),
        y: perm.iter().map(|&p| s.y[p]).collect(),
        wtc: perm.iter().map(|&p| s.wtc[p]).collect(),
    }
}

/// Dropout-free config of width `d` with the default proportions.
pub fn small_config(d: usize, heads: usize) -> ModelConfig {
    let mut cfg = ModelConfig::scaled(d, heads);
    cfg.dropout = 0.0;
    cfg
}

pub fn batch_loss(model: &Model<f64>, batch: &SceneBatch) -> f64 {
    let mut tape = Tape::new();
    let out = model.forward(&mut tape, batch, None).unwrap();
    model.loss(&mut tape, &out, batch).unwrap().total
}

#[derive(Debug, Default)]
pub struct GradCheck {
    pub entries: usize,
    pub tensors: usize,
    pub worst_rel: f64,
    pub worst_name: String,
    /// Relative error of the directional derivative along a random unit
    /// direction covering every parameter.
    pub directional_rel: f64,
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Compares analytic and central-difference gradients of the batch loss.
///
/// Tensors with at most `full_limit` entries are checked entry by entry;
/// larger ones on `sample` entries, half of them the largest-magnitude
/// gradients and the rest uniform.
pub fn gradient_check(
    model: &mut Model<f64>,
    batch: &SceneBatch,
    full_limit: usize,
    sample: usize,
    rng: &mut ChaCha8Rng,
) -> GradCheck {
    let h = 1e-4;
    model.params.zero_grad();
    let mut tape = Tape::new();
    let out = model.forward(&mut tape, batch, None).unwrap();
    let loss = model.loss(&mut tape, &out, batch).unwrap();
    tape.backward_into(loss.var, &mut model.params).unwrap();
    let grads: Vec<Vec<f64>> = model.params.iter().map(|p| p.grad.data().to_vec()).collect();
    let mut report = GradCheck {
        tensors: grads.len(),
        ..Default::default()
    };

    for (pi, g) in grads.iter().enumerate() {
        let n = g.len();
        let picks: Vec<usize> = if n <= full_limit {
            (0..n).collect()
        } else {
            let mut by_mag: Vec<usize> = (0..n).collect();
            by_mag.sort_by(|&a, &b| g[b].abs().total_cmp(&g[a].abs()));
            let mut picks: Vec<usize> = by_mag[..sample / 2].to_vec();
            while picks.len() < sample {
                let e = rng.random_range(0..n);
                if !picks.contains(&e) {
                    picks.push(e);
                }
            }
            picks
        };
        for e in picks {
            let id = ParamId(pi);
            let orig = model.params.get(id).value.data()[e];
            model.params.get_mut(id).value.data_mut()[e] = orig + h;
            let lp = batch_loss(model, batch);
            model.params.get_mut(id).value.data_mut()[e] = orig - h;
            let lm = batch_loss(model, batch);
            model.params.get_mut(id).value.data_mut()[e] = orig;
            let r = rel_err(g[e], (lp - lm) / (2.0 * h));
            report.entries += 1;
            if r > report.worst_rel {
                report.worst_rel = r;
                report.worst_name = format!("{}[{e}]", model.params.get(id).name);
            }
        }
    }

    let dirs: Vec<Vec<f64>> = grads
        .iter()
        .map(|g| g.iter().map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let norm = dirs.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
    let analytic: f64 = grads
        .iter()
        .flatten()
        .zip(dirs.iter().flatten())
        .map(|(g, d)| g * d / norm)
        .sum();
    let shift = |m: &mut Model<f64>, s: f64| {
        for (pi, d) in dirs.iter().enumerate() {
            for (v, dv) in m.params.get_mut(ParamId(pi)).value.data_mut().iter_mut().zip(d) {
                *v += s * dv / norm;
            }
        }
    };
    let base = model.params.clone();
    shift(model, h);
    let lp = batch_loss(model, batch);
    model.params = base.clone();
    shift(model, -h);
    let lm = batch_loss(model, batch);
    model.params = base;
    report.directional_rel = rel_err(analytic, (lp - lm) / (2.0 * h));
    report
}
