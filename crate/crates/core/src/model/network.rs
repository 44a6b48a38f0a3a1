use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::error::{Error, Result};
use crate::geo::{NormStats, NormalizedScene, Wtc};
use crate::model::embed::{add_type_embedding, invert_scene, scene_embedding};
use crate::model::encoder::{
    agent_scores, concat_agent_tokens, encode, AttentionVars, LayerVars, LinearVars, NormVars,
    PaddingMask,
};
use crate::model::head::{decode, nll_loss, GaussianNll, GaussianPrediction};
use crate::model::ModelConfig;
use crate::numerics::{ParamStore, Scalar, Tape, Tensor, Var};

/// Scenes padded to a common slot count, laid out for the model.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneBatch {
    pub steps: usize,
    /// Inverted inputs, `(scenes · slots · 3) × steps`.
    pub xbar: Vec<f64>,
    /// One category index per slot; padding uses 0.
    pub wtc: Vec<usize>,
    pub pad: PaddingMask,
    /// Standardized targets per slot.
    pub targets: Vec<f64>,
    /// Loss weight per slot: `1 / (valid agents · scenes)`, 0 for padding.
    pub weights: Vec<f64>,
}

impl SceneBatch {
    /// Pads every scene to `slots` (default: the largest scene in the batch).
    pub fn new(scenes: &[&NormalizedScene], slots: Option<usize>) -> Result<Self> {
        if scenes.is_empty() {
            return Err(Error::validation("empty batch"));
        }
        let max_n = scenes.iter().map(|s| s.n_agents).max().unwrap_or(0);
        let slots = slots.unwrap_or(max_n);
        if max_n > slots || scenes.iter().any(|s| s.n_agents == 0) {
            return Err(Error::validation(format!(
                "scene sizes must lie in 1..={slots}"
            )));
        }
        let steps = scenes[0].steps;
        if scenes.iter().any(|s| s.steps != steps) {
            return Err(Error::validation("scenes in a batch must share a window length"));
        }
        let b = scenes.len();
        let mut xbar = vec![0.0; b * slots * 3 * steps];
        let mut wtc = vec![0; b * slots];
        let mut valid = vec![false; b * slots];
        let mut targets = vec![0.0; b * slots];
        let mut weights = vec![0.0; b * slots];
        for (k, s) in scenes.iter().enumerate() {
            let inv = invert_scene(&s.x, s.n_agents, steps)?;
            let off = k * slots * 3 * steps;
            xbar[off..off + inv.len()].copy_from_slice(&inv);
            let w = 1.0 / (s.n_agents * b) as f64;
            for i in 0..s.n_agents {
                let slot = k * slots + i;
                wtc[slot] = s.wtc[i];
                valid[slot] = true;
                targets[slot] = s.y[i];
                weights[slot] = w;
            }
        }
        Ok(SceneBatch {
            steps,
            xbar,
            wtc,
            pad: PaddingMask { slots, valid },
            targets,
            weights,
        })
    }

    pub fn scenes(&self) -> usize {
        self.pad.scenes()
    }

    pub fn slots(&self) -> usize {
        self.pad.slots
    }
}

/// Nodes produced by one forward pass.
pub struct ModelOutput {
    /// `(scenes · slots) × 2` raw `[m, s]`.
    pub raw: Var,
    /// Agent-attention node of each layer.
    pub attention: Vec<Var>,
}

/// Loss node plus the decomposed terms.
#[derive(Debug, Clone, Copy)]
pub struct LossValue {
    pub var: Var,
    pub total: f64,
    pub penalty: f64,
    pub error: f64,
}

/// Parameters and architecture of the landing-time model.
#[derive(Debug, Clone)]
pub struct Model<T: Scalar> {
    pub config: ModelConfig,
    pub params: ParamStore<T>,
}

fn param_specs(cfg: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let d = cfg.d_model;
    let d3 = cfg.agent_dim();
    let mut specs: Vec<(String, Vec<usize>)> = vec![
        ("embed.w".into(), vec![cfg.steps, d]),
        ("embed.b".into(), vec![d]),
        ("embed.type".into(), vec![Wtc::ALL.len(), d]),
    ];
    let lin = |specs: &mut Vec<(String, Vec<usize>)>, name: String, i: usize, o: usize| {
        specs.push((format!("{name}.w"), vec![i, o]));
        specs.push((format!("{name}.b"), vec![o]));
    };
    for l in 0..cfg.layers {
        for (att, width) in [("mma", d), ("aa", d3)] {
            for proj in ["q", "k", "v"] {
                lin(&mut specs, format!("layers.{l}.{att}.{proj}"), width, width);
            }
            if cfg.out_proj {
                lin(&mut specs, format!("layers.{l}.{att}.o"), width, width);
            }
            let norm = if att == "mma" { "norm1" } else { "norm2" };
            specs.push((format!("layers.{l}.{norm}.gamma"), vec![width]));
            specs.push((format!("layers.{l}.{norm}.beta"), vec![width]));
        }
        lin(&mut specs, format!("layers.{l}.ffn1"), d, cfg.ffn_dim);
        lin(&mut specs, format!("layers.{l}.ffn2"), cfg.ffn_dim, d);
        specs.push((format!("layers.{l}.norm3.gamma"), vec![d]));
        specs.push((format!("layers.{l}.norm3.beta"), vec![d]));
    }
    let mut widths = vec![d3];
    widths.extend(&cfg.gpd_hidden);
    widths.push(2);
    for (i, w) in widths.windows(2).enumerate() {
        lin(&mut specs, format!("gpd.{i}"), w[0], w[1]);
    }
    specs
}

impl<T: Scalar> Model<T> {
    /// Fresh parameters: linear layers uniform in `±1/sqrt(fan_in)`, type
    /// embeddings standard normal, layer norms at identity.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let mut params = ParamStore::new();
        let mut fan_in = 1;
        for (name, shape) in param_specs(&config) {
            let n: usize = shape.iter().product();
            let data: Vec<f64> = if name.ends_with(".gamma") {
                vec![1.0; n]
            } else if name.ends_with(".beta") {
                vec![0.0; n]
            } else if name == "embed.type" {
                (0..n).map(|_| normal.sample(&mut rng)).collect()
            } else {
                if name.ends_with(".w") {
                    fan_in = shape[0];
                }
                let bound = 1.0 / (fan_in as f64).sqrt();
                let u = Uniform::new_inclusive(-bound, bound).expect("finite bound");
                (0..n).map(|_| u.sample(&mut rng)).collect()
            };
            params.add(name, Tensor::from_f64(&shape, &data)?);
        }
        Ok(Model { config, params })
    }

    /// Wraps existing parameters after checking names and shapes.
    pub fn from_params(config: ModelConfig, params: ParamStore<T>) -> Result<Self> {
        config.validate()?;
        let specs = param_specs(&config);
        if specs.len() != params.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameter tensors, found {}",
                specs.len(),
                params.len()
            )));
        }
        for ((name, shape), p) in specs.iter().zip(params.iter()) {
            if &p.name != name || p.value.shape() != shape.as_slice() {
                return Err(Error::Checkpoint(format!(
                    "parameter {} {:?} does not match expected {name} {shape:?}",
                    p.name,
                    p.value.shape()
                )));
            }
        }
        Ok(Model { config, params })
    }

    pub fn cast<U: Scalar>(&self) -> Model<U> {
        Model {
            config: self.config.clone(),
            params: self.params.cast(),
        }
    }

    /// Runs the network; dropout is applied only when `rng` is given.
    pub fn forward(
        &self,
        tape: &mut Tape<T>,
        batch: &SceneBatch,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<ModelOutput> {
        let cfg = &self.config;
        if batch.steps != cfg.steps {
            return Err(Error::Dimension {
                op: "forward",
                lhs: vec![batch.steps],
                rhs: vec![cfg.steps],
            });
        }
        let vars: Vec<Var> = (0..self.params.len())
            .map(|i| tape.param(&self.params, crate::numerics::ParamId(i)))
            .collect();
        let mut it = vars.into_iter();
        let mut next = || it.next().expect("parameter layout");
        let (ew, eb, table) = (next(), next(), next());
        let mut layers = Vec::with_capacity(cfg.layers);
        for _ in 0..cfg.layers {
            let attn = |next: &mut dyn FnMut() -> Var| {
                let mut lin = || LinearVars { w: next(), b: next() };
                let (q, k, v) = (lin(), lin(), lin());
                let o = cfg.out_proj.then(&mut lin);
                let a = AttentionVars { q, k, v, o };
                (a, NormVars { gamma: next(), beta: next() })
            };
            let (mma, norm1) = attn(&mut next);
            let (aa, norm2) = attn(&mut next);
            let ffn1 = LinearVars { w: next(), b: next() };
            let ffn2 = LinearVars { w: next(), b: next() };
            let norm3 = NormVars { gamma: next(), beta: next() };
            layers.push(LayerVars {
                mma,
                norm1,
                aa,
                norm2,
                ffn1,
                ffn2,
                norm3,
            });
        }
        let gpd: Vec<(Var, Var)> = (0..=cfg.gpd_hidden.len()).map(|_| (next(), next())).collect();

        let rows = batch.wtc.len() * 3;
        let xbar = tape.constant(Tensor::from_f64(&[rows, batch.steps], &batch.xbar)?);
        let tokens = scene_embedding(tape, xbar, ew, eb)?;
        let tokens = add_type_embedding(tape, tokens, &batch.wtc, table)?;
        let mut rng = rng;
        let tokens = match rng.as_deref_mut() {
            Some(r) => tape.dropout(tokens, cfg.dropout, r)?,
            None => tokens,
        };
        let (c, attention) = encode(tape, tokens, &batch.pad, &layers, cfg, rng)?;
        let agents = concat_agent_tokens(tape, c)?;
        let raw = decode(tape, agents, &gpd)?;
        Ok(ModelOutput { raw, attention })
    }

    /// Batch NLL: per-scene mean over valid aircraft, averaged over scenes.
    pub fn loss(&self, tape: &mut Tape<T>, out: &ModelOutput, batch: &SceneBatch) -> Result<LossValue> {
        let var = nll_loss(tape, out.raw, &batch.targets, &batch.weights, self.config.sigma_link)?;
        let op = tape
            .custom_op::<GaussianNll>(var)
            .expect("nll node");
        Ok(LossValue {
            var,
            total: op.penalty + op.error,
            penalty: op.penalty,
            error: op.error,
        })
    }

    /// Eval-mode predictions, one vector per scene over its valid aircraft.
    pub fn predict(&self, batch: &SceneBatch, stats: &NormStats) -> Result<Vec<Vec<GaussianPrediction>>> {
        let mut tape = Tape::new();
        let out = self.forward(&mut tape, batch, None)?;
        Ok(self.collect(&tape, &out, batch, stats))
    }

    /// Eval-mode predictions plus per-layer head-averaged agent attention.
    pub fn predict_with_attention(
        &self,
        batch: &SceneBatch,
        stats: &NormStats,
    ) -> Result<(Vec<Vec<GaussianPrediction>>, Vec<Vec<Vec<Vec<f64>>>>)> {
        let mut tape = Tape::new();
        let out = self.forward(&mut tape, batch, None)?;
        let preds = self.collect(&tape, &out, batch, stats);
        let mut scores = Vec::with_capacity(batch.scenes());
        for s in 0..batch.scenes() {
            let per_layer = out
                .attention
                .iter()
                .map(|&a| agent_scores(&tape, a, &batch.pad, s))
                .collect::<Result<Vec<_>>>()?;
            scores.push(per_layer);
        }
        Ok((preds, scores))
    }

    fn collect(
        &self,
        tape: &Tape<T>,
        out: &ModelOutput,
        batch: &SceneBatch,
        stats: &NormStats,
    ) -> Vec<Vec<GaussianPrediction>> {
        let raw = tape.value(out.raw).data();
        let slots = batch.slots();
        (0..batch.scenes())
            .map(|s| {
                (0..slots)
                    .filter(|&i| batch.pad.valid[s * slots + i])
                    .map(|i| {
                        let r = s * slots + i;
                        GaussianPrediction::from_raw(
                            raw[2 * r].as_f64(),
                            raw[2 * r + 1].as_f64(),
                            self.config.sigma_link,
                            stats,
                        )
                    })
                    .collect()
            })
            .collect()
    }
}
