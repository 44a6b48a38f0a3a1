//! Multi-agent encoder layer: per-aircraft masked attention over variate
//! tokens, then attention across aircraft, then a position-wise FFN.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::attention::{attention, AttentionMask, GroupedAttention};
use crate::model::ModelConfig;
use crate::numerics::{Scalar, Tape, Var};

/// Dense view of the block-diagonal multivariate mask for one scene.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultivariateMask {
    pub n_agents: usize,
    /// Row-major `(3N) × (3N)`.
    pub allowed: Vec<bool>,
}

impl MultivariateMask {
    pub fn size(&self) -> usize {
        3 * self.n_agents
    }

    pub fn is_allowed(&self, m: usize, n: usize) -> bool {
        self.allowed[m * self.size() + n]
    }

    /// Additive form: `0` where allowed, `-inf` where blocked.
    pub fn additive(&self) -> Vec<f64> {
        self.allowed
            .iter()
            .map(|&a| if a { 0.0 } else { f64::NEG_INFINITY })
            .collect()
    }
}

/// Token `m` may attend to token `n` iff both belong to the same aircraft.
pub fn build_multivariate_mask(n_agents: usize) -> MultivariateMask {
    let size = 3 * n_agents;
    let allowed = (0..size * size)
        .map(|idx| (idx / size) / 3 == (idx % size) / 3)
        .collect();
    MultivariateMask { n_agents, allowed }
}

/// Agent-slot validity for a padded batch, `scenes × slots`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PaddingMask {
    pub slots: usize,
    pub valid: Vec<bool>,
}

impl PaddingMask {
    pub fn scenes(&self) -> usize {
        self.valid.len() / self.slots
    }

    pub fn n_valid(&self, scene: usize) -> usize {
        self.valid[scene * self.slots..(scene + 1) * self.slots]
            .iter()
            .filter(|&&v| v)
            .count()
    }
}

/// Head-averaged agent-to-agent attention of one scene at one layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionRecord {
    pub scene_id: String,
    /// 1-based.
    pub layer: usize,
    pub callsigns: Vec<String>,
    pub scores: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy)]
pub struct LinearVars {
    pub w: Var,
    pub b: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct AttentionVars {
    pub q: LinearVars,
    pub k: LinearVars,
    pub v: LinearVars,
    pub o: Option<LinearVars>,
}

#[derive(Debug, Clone, Copy)]
pub struct NormVars {
    pub gamma: Var,
    pub beta: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct LayerVars {
    pub mma: AttentionVars,
    pub norm1: NormVars,
    pub aa: AttentionVars,
    pub norm2: NormVars,
    pub ffn1: LinearVars,
    pub ffn2: LinearVars,
    pub norm3: NormVars,
}

pub(crate) fn linear<T: Scalar>(tape: &mut Tape<T>, x: Var, l: LinearVars) -> Result<Var> {
    let h = tape.matmul(x, l.w)?;
    tape.add_bias(h, l.b)
}

fn mha<T: Scalar>(
    tape: &mut Tape<T>,
    x: Var,
    p: &AttentionVars,
    heads: usize,
    mask: AttentionMask,
) -> Result<Var> {
    let q = linear(tape, x, p.q)?;
    let k = linear(tape, x, p.k)?;
    let v = linear(tape, x, p.v)?;
    let a = attention(tape, q, k, v, heads, mask)?;
    match p.o {
        Some(o) => linear(tape, a, o),
        None => Ok(a),
    }
}

/// Attention restricted to each aircraft's own three tokens.
///
/// `c` is `(scenes · slots · 3) × D`; each scene is one attention group
/// with the block-diagonal mask of [`build_multivariate_mask`].
pub fn masked_multivariate_attention<T: Scalar>(
    tape: &mut Tape<T>,
    c: Var,
    p: &AttentionVars,
    heads: usize,
    slots: usize,
) -> Result<Var> {
    mha(
        tape,
        c,
        p,
        heads,
        AttentionMask {
            group: 3 * slots,
            block: Some(3),
            key_valid: None,
        },
    )
}

/// `(N·3) × D` to `N × 3D`: row `i` is rows `3i, 3i+1, 3i+2` side by side.
pub fn concat_agent_tokens<T: Scalar>(tape: &mut Tape<T>, c: Var) -> Result<Var> {
    let (rows, d) = tape.value(c).as_matrix();
    if rows % 3 != 0 {
        return Err(Error::Dimension {
            op: "concat_agent_tokens",
            lhs: vec![rows, d],
            rhs: vec![3],
        });
    }
    tape.reshape(c, &[rows / 3, 3 * d])
}

/// Inverse of [`concat_agent_tokens`].
pub fn split_agent_tokens<T: Scalar>(tape: &mut Tape<T>, c: Var) -> Result<Var> {
    let (n, d3) = tape.value(c).as_matrix();
    if d3 % 3 != 0 {
        return Err(Error::Dimension {
            op: "split_agent_tokens",
            lhs: vec![n, d3],
            rhs: vec![3],
        });
    }
    tape.reshape(c, &[3 * n, d3 / 3])
}

/// Full attention across the aircraft of each scene; padded slots are
/// never attended to. Returns the output and the attention node, whose
/// weights can be read back with [`agent_scores`].
pub fn agent_attention<T: Scalar>(
    tape: &mut Tape<T>,
    c_a: Var,
    p: &AttentionVars,
    heads: usize,
    pad: &PaddingMask,
) -> Result<(Var, Var)> {
    let q = linear(tape, c_a, p.q)?;
    let k = linear(tape, c_a, p.k)?;
    let v = linear(tape, c_a, p.v)?;
    let a = attention(
        tape,
        q,
        k,
        v,
        heads,
        AttentionMask {
            group: pad.slots,
            block: None,
            key_valid: Some(pad.valid.clone()),
        },
    )?;
    let out = match p.o {
        Some(o) => linear(tape, a, o)?,
        None => a,
    };
    Ok((out, a))
}

/// Head-averaged `N × N` weights of one scene among its valid slots.
pub fn agent_scores<T: Scalar>(
    tape: &Tape<T>,
    attn: Var,
    pad: &PaddingMask,
    scene: usize,
) -> Result<Vec<Vec<f64>>> {
    let op = tape
        .custom_op::<GroupedAttention<T>>(attn)
        .ok_or_else(|| Error::Contract("node is not an attention op".into()))?;
    let g = op.group();
    let mean = op.head_mean(scene);
    let valid: Vec<usize> = (0..g).filter(|&i| pad.valid[scene * g + i]).collect();
    Ok(valid
        .iter()
        .map(|&i| valid.iter().map(|&j| mean[i * g + j]).collect())
        .collect())
}

fn maybe_dropout<T: Scalar>(
    tape: &mut Tape<T>,
    x: Var,
    p: f64,
    rng: &mut Option<&mut ChaCha8Rng>,
) -> Result<Var> {
    match rng {
        Some(r) => tape.dropout(x, p, *r),
        None => Ok(x),
    }
}

/// Output of one encoder layer: new tokens and the agent attention node.
pub struct LayerOutput {
    pub tokens: Var,
    pub agent_attention: Var,
}

/// One post-norm encoder layer; dropout is active only when `rng` is given.
pub fn encoder_layer<T: Scalar>(
    tape: &mut Tape<T>,
    c: Var,
    pad: &PaddingMask,
    p: &LayerVars,
    cfg: &ModelConfig,
    mut rng: Option<&mut ChaCha8Rng>,
) -> Result<LayerOutput> {
    let eps = T::from_f64_lossy(cfg.ln_eps);
    let st = masked_multivariate_attention(tape, c, &p.mma, cfg.heads_mma, pad.slots)?;
    let st = maybe_dropout(tape, st, cfg.dropout, &mut rng)?;
    let h = tape.add(c, st)?;
    let h = tape.layer_norm(h, p.norm1.gamma, p.norm1.beta, eps)?;

    let ca = concat_agent_tokens(tape, h)?;
    let (sc, attn) = agent_attention(tape, ca, &p.aa, cfg.heads_aa, pad)?;
    let sc = maybe_dropout(tape, sc, cfg.dropout, &mut rng)?;
    let h = tape.add(ca, sc)?;
    let h = tape.layer_norm(h, p.norm2.gamma, p.norm2.beta, eps)?;
    let h = split_agent_tokens(tape, h)?;

    let f = linear(tape, h, p.ffn1)?;
    let f = tape.gelu(f)?;
    let f = linear(tape, f, p.ffn2)?;
    let f = maybe_dropout(tape, f, cfg.dropout, &mut rng)?;
    let out = tape.add(h, f)?;
    let out = tape.layer_norm(out, p.norm3.gamma, p.norm3.beta, eps)?;
    Ok(LayerOutput {
        tokens: out,
        agent_attention: attn,
    })
}

/// Stacks [`encoder_layer`]; returns final tokens and one attention node per layer.
pub fn encode<T: Scalar>(
    tape: &mut Tape<T>,
    tokens: Var,
    pad: &PaddingMask,
    layers: &[LayerVars],
    cfg: &ModelConfig,
    mut rng: Option<&mut ChaCha8Rng>,
) -> Result<(Var, Vec<Var>)> {
    if layers.is_empty() {
        return Err(Error::validation("encoder needs at least one layer"));
    }
    let mut c = tokens;
    let mut attn = Vec::with_capacity(layers.len());
    for p in layers {
        let out = encoder_layer(tape, c, pad, p, cfg, rng.as_deref_mut())?;
        c = out.tokens;
        attn.push(out.agent_attention);
    }
    Ok((c, attn))
}
