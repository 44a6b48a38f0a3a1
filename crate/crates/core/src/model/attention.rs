//! Multi-head scaled dot-product attention over independent row groups.

use crate::error::{Error, Result};
use crate::numerics::{CustomOp, Scalar, Tape, Tensor, Var};

/// Which keys a query may attend to inside its group.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMask {
    /// Rows per independent group; scores across groups are never formed.
    pub group: usize,
    /// If set, query `q` only sees keys `k` with `q / block == k / block`.
    pub block: Option<usize>,
    /// Per-row key validity; invalid keys get zero weight.
    pub key_valid: Option<Vec<bool>>,
}

impl AttentionMask {
    #[inline]
    fn key_range(&self, q: usize) -> (usize, usize) {
        match self.block {
            Some(b) => {
                let s = q / b * b;
                (s, s + b)
            }
            None => (0, self.group),
        }
    }

    #[inline]
    fn key_ok(&self, row: usize) -> bool {
        self.key_valid.as_ref().map_or(true, |v| v[row])
    }
}

/// Backward state for [`attention`]: the softmax weights of every group and head.
pub struct GroupedAttention<T> {
    mask: AttentionMask,
    heads: usize,
    /// `[group][head][q][k]`, zero where masked.
    probs: Vec<T>,
}

impl<T: Scalar> GroupedAttention<T> {
    pub fn heads(&self) -> usize {
        self.heads
    }

    pub fn group(&self) -> usize {
        self.mask.group
    }

    /// Softmax weights for one group and head, row-major `group × group`.
    pub fn probs(&self, group: usize, head: usize) -> &[T] {
        let g = self.mask.group;
        let off = (group * self.heads + head) * g * g;
        &self.probs[off..off + g * g]
    }

    /// Head-averaged weights for one group.
    pub fn head_mean(&self, group: usize) -> Vec<f64> {
        let g = self.mask.group;
        let mut out = vec![0.0; g * g];
        for h in 0..self.heads {
            for (o, p) in out.iter_mut().zip(self.probs(group, h)) {
                *o += p.as_f64();
            }
        }
        out.iter_mut().for_each(|o| *o /= self.heads as f64);
        out
    }
}

#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

#[inline]
fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = *yi + alpha * xi;
    }
}

/// `softmax(Q Kᵀ / sqrt(dh) + mask) V` per head, heads concatenated.
///
/// `q`, `k`, `v` are `rows × width`; rows split into groups of `mask.group`
/// and `width` into `heads` equal slices.
pub fn attention<T: Scalar>(
    tape: &mut Tape<T>,
    q: Var,
    k: Var,
    v: Var,
    heads: usize,
    mask: AttentionMask,
) -> Result<Var> {
    let shape = tape.value(q).shape().to_vec();
    for other in [k, v] {
        if tape.value(other).shape() != shape.as_slice() {
            return Err(Error::Dimension {
                op: "attention",
                lhs: shape.clone(),
                rhs: tape.value(other).shape().to_vec(),
            });
        }
    }
    let (rows, width) = tape.value(q).as_matrix();
    let g = mask.group;
    if shape.len() != 2 || g == 0 || rows % g != 0 || heads == 0 || width % heads != 0 {
        return Err(Error::Dimension {
            op: "attention",
            lhs: shape,
            rhs: vec![g, heads],
        });
    }
    if let Some(b) = mask.block {
        if b == 0 || g % b != 0 {
            return Err(Error::validation(format!("mask block {b} does not tile group {g}")));
        }
    }
    if mask.key_valid.as_ref().is_some_and(|kv| kv.len() != rows) {
        return Err(Error::validation("key validity length does not match rows"));
    }
    let dh = width / heads;
    let scale = T::from_f64_lossy(1.0 / (dh as f64).sqrt());
    let (qv, kv, vv) = (tape.value(q).data(), tape.value(k).data(), tape.value(v).data());
    let groups = rows / g;
    let mut probs = vec![T::zero(); groups * heads * g * g];
    let mut out = vec![T::zero(); rows * width];
    let mut logits = vec![T::zero(); g];
    for grp in 0..groups {
        let base = grp * g;
        for h in 0..heads {
            let col = h * dh;
            let poff = (grp * heads + h) * g * g;
            for i in 0..g {
                let qi = &qv[(base + i) * width + col..][..dh];
                let (lo, hi) = mask.key_range(i);
                let mut max = T::neg_infinity();
                for j in lo..hi {
                    if mask.key_ok(base + j) {
                        let s = dot(qi, &kv[(base + j) * width + col..][..dh]) * scale;
                        logits[j] = s;
                        max = max.max(s);
                    } else {
                        logits[j] = T::neg_infinity();
                    }
                }
                if max == T::neg_infinity() {
                    return Err(Error::DegenerateRow { row: base + i });
                }
                let mut sum = T::zero();
                for j in lo..hi {
                    let e = if logits[j] == T::neg_infinity() {
                        T::zero()
                    } else {
                        (logits[j] - max).exp()
                    };
                    probs[poff + i * g + j] = e;
                    sum = sum + e;
                }
                let inv = T::one() / sum;
                let orow = &mut out[(base + i) * width + col..][..dh];
                for j in lo..hi {
                    let p = probs[poff + i * g + j] * inv;
                    probs[poff + i * g + j] = p;
                    if p != T::zero() {
                        axpy(p, &vv[(base + j) * width + col..][..dh], orow);
                    }
                }
            }
        }
    }
    let output = Tensor::new(vec![rows, width], out)?;
    tape.custom(
        vec![q, k, v],
        output,
        Box::new(GroupedAttention { mask, heads, probs }),
    )
}

impl<T: Scalar> CustomOp<T> for GroupedAttention<T> {
    fn name(&self) -> &'static str {
        "attention"
    }

    fn backward(
        &self,
        inputs: &[&Tensor<T>],
        _output: &Tensor<T>,
        grad_out: &[T],
        needs: &[bool],
    ) -> Vec<Option<Vec<T>>> {
        let (rows, width) = inputs[0].as_matrix();
        let (qv, kv, vv) = (inputs[0].data(), inputs[1].data(), inputs[2].data());
        let g = self.mask.group;
        let dh = width / self.heads;
        let scale = T::from_f64_lossy(1.0 / (dh as f64).sqrt());
        let mut dq = vec![T::zero(); rows * width];
        let mut dk = vec![T::zero(); rows * width];
        let mut dv = vec![T::zero(); rows * width];
        let mut ds = vec![T::zero(); g];
        for grp in 0..rows / g {
            let base = grp * g;
            for h in 0..self.heads {
                let col = h * dh;
                let p = self.probs(grp, h);
                for i in 0..g {
                    let go = &grad_out[(base + i) * width + col..][..dh];
                    let (lo, hi) = self.mask.key_range(i);
                    let mut c = T::zero();
                    for j in lo..hi {
                        let pij = p[i * g + j];
                        if pij == T::zero() {
                            ds[j] = T::zero();
                            continue;
                        }
                        let dp = dot(go, &vv[(base + j) * width + col..][..dh]);
                        ds[j] = dp;
                        c = c + pij * dp;
                        axpy(pij, go, &mut dv[(base + j) * width + col..][..dh]);
                    }
                    let qi = &qv[(base + i) * width + col..][..dh];
                    for j in lo..hi {
                        let pij = p[i * g + j];
                        if pij == T::zero() {
                            continue;
                        }
                        let s = pij * (ds[j] - c) * scale;
                        axpy(s, &kv[(base + j) * width + col..][..dh], &mut dq[(base + i) * width + col..][..dh]);
                        axpy(s, qi, &mut dk[(base + j) * width + col..][..dh]);
                    }
                }
            }
        }
        vec![
            needs[0].then_some(dq),
            needs[1].then_some(dk),
            needs[2].then_some(dv),
        ]
    }

    fn as_any(&self) -> &dyn std::any::Any {
        self
    }
}
