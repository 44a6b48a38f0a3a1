//! Reverse-mode automatic differentiation over a linear tape.
//!
//! Every op appends one node whose parents are already on the tape, so the
//! node order is a topological order and `backward` is a single reverse sweep.

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::scalar::{gemm, Layout};
use crate::numerics::{ParamId, ParamStore, Scalar, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// An op defined outside this module that supplies its own backward rule.
pub trait CustomOp<T: Scalar>: Send {
    fn name(&self) -> &'static str;

    /// Returns one gradient buffer per input (`None` where `needs[i]` is false).
    fn backward(
        &self,
        inputs: &[&Tensor<T>],
        output: &Tensor<T>,
        grad_out: &[T],
        needs: &[bool],
    ) -> Vec<Option<Vec<T>>>;

    fn as_any(&self) -> &dyn std::any::Any;
}

enum Op<T: Scalar> {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    AddBias(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Sum(Var),
    Gelu(Var),
    Softmax(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<T>,
        rstd: Vec<T>,
    },
    Reshape(Var),
    Dropout {
        x: Var,
        mask: Vec<T>,
    },
    Gather {
        table: Var,
        index: Vec<usize>,
    },
    Custom {
        inputs: Vec<Var>,
        op: Box<dyn CustomOp<T>>,
    },
}

struct Node<T: Scalar> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Recorded computation for one forward pass.
pub struct Tape<T: Scalar> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients of a scalar loss with respect to every node that required one.
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }
}

pub(crate) fn softmax_row_in_place<T: Scalar>(row: &mut [T]) -> bool {
    let mut max = T::neg_infinity();
    for &v in row.iter() {
        if v.is_finite() && v > max {
            max = v;
        }
    }
    if max == T::neg_infinity() {
        return false;
    }
    let mut sum = T::zero();
    for v in row.iter_mut() {
        *v = if *v == T::neg_infinity() {
            T::zero()
        } else {
            (*v - max).exp()
        };
        sum = sum + *v;
    }
    let inv = T::one() / sum;
    for v in row.iter_mut() {
        *v = *v * inv;
    }
    true
}

fn std_normal_pdf<T: Scalar>(x: T) -> T {
    let c = T::from_f64_lossy(0.398_942_280_401_432_7);
    c * (-(x * x) * T::from_f64_lossy(0.5)).exp()
}

fn std_normal_cdf<T: Scalar>(x: T) -> T {
    let half = T::from_f64_lossy(0.5);
    half * (T::one() + (x * T::from_f64_lossy(std::f64::consts::FRAC_1_SQRT_2)).erf())
}

/// Exact-CDF GELU, `x·Φ(x)`.
pub fn gelu_scalar<T: Scalar>(x: T) -> T {
    x * std_normal_cdf(x)
}

fn gelu_grad<T: Scalar>(x: T) -> T {
    std_normal_cdf(x) + x * std_normal_pdf(x)
}

fn add_into<T: Scalar>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d = *d + s;
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Returns the custom op recorded at `v`, if it has the given type.
    pub fn custom_op<O: 'static>(&self, v: Var) -> Option<&O> {
        match &self.nodes[v.0].op {
            Op::Custom { op, .. } => op.as_any().downcast_ref::<O>(),
            _ => None,
        }
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, name: &'static str) -> Result<Var> {
        if !value.all_finite() {
            return Err(Error::NonFinite { op: name });
        }
        let requires_grad = match &op {
            Op::Leaf => false,
            Op::Param(_) => true,
            Op::MatMul(a, b) | Op::Add(a, b) | Op::AddBias(a, b) | Op::Mul(a, b) => {
                self.requires_grad(*a) || self.requires_grad(*b)
            }
            Op::Scale(x, _)
            | Op::Sum(x)
            | Op::Gelu(x)
            | Op::Softmax(x)
            | Op::Reshape(x)
            | Op::Dropout { x, .. } => self.requires_grad(*x),
            Op::LayerNorm { x, gamma, beta, .. } => {
                self.requires_grad(*x) || self.requires_grad(*gamma) || self.requires_grad(*beta)
            }
            Op::Gather { table, .. } => self.requires_grad(*table),
            Op::Custom { inputs, .. } => inputs.iter().any(|&i| self.requires_grad(i)),
        };
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Records an input. Non-finite values (e.g. `-inf` sentinels) are allowed here.
    pub fn input(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.input(value, false)
    }

    /// Snapshots a parameter onto the tape.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        self.nodes.push(Node {
            value: store.get(id).value.clone(),
            op: Op::Param(id),
            requires_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    fn matrix_dims(&self, v: Var, op: &'static str) -> Result<(usize, usize)> {
        let shape = self.value(v).shape();
        if shape.len() != 2 {
            return Err(Error::Dimension {
                op,
                lhs: shape.to_vec(),
                rhs: vec![],
            });
        }
        Ok((shape[0], shape[1]))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.matrix_dims(a, "matmul")?;
        let (k2, n) = self.matrix_dims(b, "matmul")?;
        if k != k2 {
            return Err(Error::Dimension {
                op: "matmul",
                lhs: vec![m, k],
                rhs: vec![k2, n],
            });
        }
        let mut out = vec![T::zero(); m * n];
        gemm(
            m,
            k,
            n,
            self.value(a).data(),
            Layout::Normal,
            self.value(b).data(),
            Layout::Normal,
            &mut out,
            false,
        );
        self.push(Tensor::new(vec![m, n], out)?, Op::MatMul(a, b), "matmul")
    }

    fn same_shape(&self, a: Var, b: Var, op: &'static str) -> Result<()> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Error::Dimension {
                op,
                lhs: self.value(a).shape().to_vec(),
                rhs: self.value(b).shape().to_vec(),
            });
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let out: Vec<T> = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| x + y)
            .collect();
        let shape = self.value(a).shape().to_vec();
        self.push(Tensor::new(shape, out)?, Op::Add(a, b), "add")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let out: Vec<T> = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| x * y)
            .collect();
        let shape = self.value(a).shape().to_vec();
        self.push(Tensor::new(shape, out)?, Op::Mul(a, b), "mul")
    }

    /// Adds a bias vector to every row of `x`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (_, cols) = self.value(x).as_matrix();
        if self.value(bias).numel() != cols {
            return Err(Error::Dimension {
                op: "add_bias",
                lhs: self.value(x).shape().to_vec(),
                rhs: self.value(bias).shape().to_vec(),
            });
        }
        let b = self.value(bias).data();
        let mut out = self.value(x).data().to_vec();
        for row in out.chunks_mut(cols) {
            add_into(row, b);
        }
        let shape = self.value(x).shape().to_vec();
        self.push(Tensor::new(shape, out)?, Op::AddBias(x, bias), "add_bias")
    }

    pub fn scale(&mut self, x: Var, c: T) -> Result<Var> {
        let out = self.value(x).data().iter().map(|&v| v * c).collect();
        let shape = self.value(x).shape().to_vec();
        self.push(Tensor::new(shape, out)?, Op::Scale(x, c), "scale")
    }

    /// Sum of all elements, in storage order.
    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self
            .value(x)
            .data()
            .iter()
            .fold(T::zero(), |acc, &v| acc + v);
        self.push(Tensor::scalar(s), Op::Sum(x), "sum")
    }

    pub fn gelu(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).data().iter().map(|&v| gelu_scalar(v)).collect();
        let shape = self.value(x).shape().to_vec();
        self.push(Tensor::new(shape, out)?, Op::Gelu(x), "gelu")
    }

    /// Row-wise softmax over the last axis; `-inf` entries map to exactly 0.
    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        let (_, cols) = self.value(x).as_matrix();
        let mut out = self.value(x).data().to_vec();
        for (r, row) in out.chunks_mut(cols).enumerate() {
            if !softmax_row_in_place(row) {
                return Err(Error::DegenerateRow { row: r });
            }
        }
        let shape = self.value(x).shape().to_vec();
        self.push(Tensor::new(shape, out)?, Op::Softmax(x), "softmax_rows")
    }

    /// Normalizes each row over the last axis, then applies `gamma`/`beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: T) -> Result<Var> {
        let (rows, cols) = self.value(x).as_matrix();
        if self.value(gamma).numel() != cols || self.value(beta).numel() != cols {
            return Err(Error::Dimension {
                op: "layer_norm",
                lhs: self.value(x).shape().to_vec(),
                rhs: self.value(gamma).shape().to_vec(),
            });
        }
        let xv = self.value(x).data();
        let g = self.value(gamma).data();
        let b = self.value(beta).data();
        let n = T::from_usize(cols).unwrap();
        let mut xhat = vec![T::zero(); rows * cols];
        let mut rstd = vec![T::zero(); rows];
        let mut out = vec![T::zero(); rows * cols];
        for r in 0..rows {
            let row = &xv[r * cols..(r + 1) * cols];
            let mean = row.iter().fold(T::zero(), |a, &v| a + v) / n;
            let var = row
                .iter()
                .fold(T::zero(), |a, &v| a + (v - mean) * (v - mean))
                / n;
            let rs = T::one() / (var + eps).sqrt();
            rstd[r] = rs;
            for c in 0..cols {
                let h = (row[c] - mean) * rs;
                xhat[r * cols + c] = h;
                out[r * cols + c] = h * g[c] + b[c];
            }
        }
        let shape = self.value(x).shape().to_vec();
        self.push(
            Tensor::new(shape, out)?,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            },
            "layer_norm",
        )
    }

    /// Same data, new shape.
    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).reshape(shape).map_err(|_| Error::Dimension {
            op: "reshape",
            lhs: self.value(x).shape().to_vec(),
            rhs: shape.to_vec(),
        })?;
        self.push(value, Op::Reshape(x), "reshape")
    }

    /// Inverted dropout; identity when `p == 0`.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, p: f64, rng: &mut R) -> Result<Var> {
        if p <= 0.0 {
            return Ok(x);
        }
        if p >= 1.0 {
            return Err(Error::validation(format!("dropout rate {p} must be < 1")));
        }
        let keep = T::from_f64_lossy(1.0 / (1.0 - p));
        let mask: Vec<T> = (0..self.value(x).numel())
            .map(|_| {
                if rng.random::<f64>() < p {
                    T::zero()
                } else {
                    keep
                }
            })
            .collect();
        let out = self
            .value(x)
            .data()
            .iter()
            .zip(&mask)
            .map(|(&v, &m)| v * m)
            .collect();
        let shape = self.value(x).shape().to_vec();
        self.push(Tensor::new(shape, out)?, Op::Dropout { x, mask }, "dropout")
    }

    /// Row lookup: output row `i` is `table[index[i]]`.
    pub fn gather_rows(&mut self, table: Var, index: Vec<usize>) -> Result<Var> {
        let (vocab, dim) = self.matrix_dims(table, "gather_rows")?;
        if let Some(&bad) = index.iter().find(|&&i| i >= vocab) {
            return Err(Error::validation(format!(
                "row index {bad} out of range for table with {vocab} rows"
            )));
        }
        if index.is_empty() {
            return Err(Error::validation("gather_rows with empty index"));
        }
        let t = self.value(table).data();
        let mut out = Vec::with_capacity(index.len() * dim);
        for &i in &index {
            out.extend_from_slice(&t[i * dim..(i + 1) * dim]);
        }
        let shape = vec![index.len(), dim];
        self.push(
            Tensor::new(shape, out)?,
            Op::Gather { table, index },
            "gather_rows",
        )
    }

    /// Appends a node computed outside the tape with a user backward rule.
    pub fn custom(
        &mut self,
        inputs: Vec<Var>,
        output: Tensor<T>,
        op: Box<dyn CustomOp<T>>,
    ) -> Result<Var> {
        let name = op.name();
        self.push(output, Op::Custom { inputs, op }, name)
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(Error::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    /// Backward, then adds parameter gradients into `params`.
    pub fn backward_into(&self, loss: Var, params: &mut ParamStore<T>) -> Result<Gradients<T>> {
        let grads = self.backward(loss)?;
        for (idx, node) in self.nodes.iter().enumerate() {
            if let (Op::Param(id), Some(g)) = (&node.op, grads.grads[idx].as_ref()) {
                add_into(params.get_mut(*id).grad.data_mut(), g);
            }
        }
        Ok(grads)
    }

    fn slot<'a>(&self, grads: &'a mut [Option<Vec<T>>], v: Var) -> Option<&'a mut Vec<T>> {
        if !self.nodes[v.0].requires_grad {
            return None;
        }
        let n = self.nodes[v.0].value.numel();
        Some(grads[v.0].get_or_insert_with(|| vec![T::zero(); n]))
    }

    fn propagate(&self, idx: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let node = &self.nodes[idx];
        match &node.op {
            Op::Leaf | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.value(*a).as_matrix();
                let (_, n) = self.value(*b).as_matrix();
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                if a == b {
                    let mut tmp = vec![T::zero(); m * k];
                    gemm(m, n, k, g, Layout::Normal, bv, Layout::Transposed, &mut tmp, false);
                    gemm(k, m, n, av, Layout::Transposed, g, Layout::Normal, &mut tmp, true);
                    if let Some(da) = self.slot(grads, *a) {
                        add_into(da, &tmp);
                    }
                    return;
                }
                if let Some(da) = self.slot(grads, *a) {
                    gemm(m, n, k, g, Layout::Normal, bv, Layout::Transposed, da, true);
                }
                if let Some(db) = self.slot(grads, *b) {
                    gemm(k, m, n, av, Layout::Transposed, g, Layout::Normal, db, true);
                }
            }
            Op::Add(a, b) => {
                if let Some(da) = self.slot(grads, *a) {
                    add_into(da, g);
                }
                if let Some(db) = self.slot(grads, *b) {
                    add_into(db, g);
                }
            }
            Op::Mul(a, b) => {
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                if let Some(da) = self.slot(grads, *a) {
                    for ((d, &gi), &y) in da.iter_mut().zip(g).zip(bv) {
                        *d = *d + gi * y;
                    }
                }
                if let Some(db) = self.slot(grads, *b) {
                    for ((d, &gi), &x) in db.iter_mut().zip(g).zip(av) {
                        *d = *d + gi * x;
                    }
                }
            }
            Op::AddBias(x, bias) => {
                if let Some(dx) = self.slot(grads, *x) {
                    add_into(dx, g);
                }
                let cols = self.value(*bias).numel();
                if let Some(db) = self.slot(grads, *bias) {
                    for row in g.chunks(cols) {
                        add_into(db, row);
                    }
                }
            }
            Op::Scale(x, c) => {
                if let Some(dx) = self.slot(grads, *x) {
                    for (d, &gi) in dx.iter_mut().zip(g) {
                        *d = *d + gi * *c;
                    }
                }
            }
            Op::Sum(x) => {
                let g0 = g[0];
                if let Some(dx) = self.slot(grads, *x) {
                    dx.iter_mut().for_each(|d| *d = *d + g0);
                }
            }
            Op::Gelu(x) => {
                let xv = self.value(*x).data();
                if let Some(dx) = self.slot(grads, *x) {
                    for ((d, &gi), &v) in dx.iter_mut().zip(g).zip(xv) {
                        *d = *d + gi * gelu_grad(v);
                    }
                }
            }
            Op::Softmax(x) => {
                let y = node.value.data();
                let (_, cols) = node.value.as_matrix();
                if let Some(dx) = self.slot(grads, *x) {
                    for ((drow, grow), yrow) in dx
                        .chunks_mut(cols)
                        .zip(g.chunks(cols))
                        .zip(y.chunks(cols))
                    {
                        let dot = grow
                            .iter()
                            .zip(yrow)
                            .fold(T::zero(), |a, (&gi, &yi)| a + gi * yi);
                        for ((d, &gi), &yi) in drow.iter_mut().zip(grow).zip(yrow) {
                            *d = *d + yi * (gi - dot);
                        }
                    }
                }
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            } => {
                let cols = self.value(*gamma).numel();
                let gam = self.value(*gamma).data();
                if let Some(dg) = self.slot(grads, *gamma) {
                    for (grow, hrow) in g.chunks(cols).zip(xhat.chunks(cols)) {
                        for ((d, &gi), &h) in dg.iter_mut().zip(grow).zip(hrow) {
                            *d = *d + gi * h;
                        }
                    }
                }
                if let Some(db) = self.slot(grads, *beta) {
                    for grow in g.chunks(cols) {
                        add_into(db, grow);
                    }
                }
                if let Some(dx) = self.slot(grads, *x) {
                    let n = T::from_usize(cols).unwrap();
                    let mut dh = vec![T::zero(); cols];
                    for (r, ((drow, grow), hrow)) in dx
                        .chunks_mut(cols)
                        .zip(g.chunks(cols))
                        .zip(xhat.chunks(cols))
                        .enumerate()
                    {
                        let mut mean_dh = T::zero();
                        let mut mean_dh_h = T::zero();
                        for c in 0..cols {
                            dh[c] = grow[c] * gam[c];
                            mean_dh = mean_dh + dh[c];
                            mean_dh_h = mean_dh_h + dh[c] * hrow[c];
                        }
                        mean_dh = mean_dh / n;
                        mean_dh_h = mean_dh_h / n;
                        for c in 0..cols {
                            drow[c] = drow[c] + rstd[r] * (dh[c] - mean_dh - hrow[c] * mean_dh_h);
                        }
                    }
                }
            }
            Op::Reshape(x) => {
                if let Some(dx) = self.slot(grads, *x) {
                    add_into(dx, g);
                }
            }
            Op::Dropout { x, mask } => {
                if let Some(dx) = self.slot(grads, *x) {
                    for ((d, &gi), &m) in dx.iter_mut().zip(g).zip(mask) {
                        *d = *d + gi * m;
                    }
                }
            }
            Op::Gather { table, index } => {
                let (_, dim) = self.value(*table).as_matrix();
                if let Some(dt) = self.slot(grads, *table) {
                    for (grow, &i) in g.chunks(dim).zip(index) {
                        add_into(&mut dt[i * dim..(i + 1) * dim], grow);
                    }
                }
            }
            Op::Custom { inputs, op } => {
                let values: Vec<&Tensor<T>> = inputs.iter().map(|&v| self.value(v)).collect();
                let needs: Vec<bool> = inputs.iter().map(|&v| self.requires_grad(v)).collect();
                let local = op.backward(&values, &node.value, g, &needs);
                for (&v, lg) in inputs.iter().zip(local) {
                    if let (Some(lg), Some(dv)) = (lg, self.slot(grads, v)) {
                        add_into(dv, &lg);
                    }
                }
            }
        }
    }
}
