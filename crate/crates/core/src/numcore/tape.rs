//! Reverse-mode automatic differentiation over a recorded operation list.
//!
//! Every op appends a node holding its forward value; `backward` walks the
//! list in reverse and accumulates vector-Jacobian products into each node
//! that requires a gradient. Values are never mutated after being recorded.

use std::ops::Range;

use rand::Rng;

use crate::error::{Error, Result};
use crate::numcore::kernels;
use crate::numcore::Tensor;
use crate::scalar::Scalar;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, T),
    Sum(Var),
    SoftmaxRows(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<T>,
        inv_std: Vec<T>,
    },
    Gelu(Var),
    GatherRows {
        table: Var,
        ids: Vec<usize>,
    },
    SliceRows {
        x: Var,
        start: usize,
    },
    SliceCols {
        x: Var,
        start: usize,
    },
    ConcatCols(Vec<Var>),
    StackRows {
        sources: Vec<Var>,
        row: usize,
    },
    AddBlock(Var),
    MaskCols {
        x: Var,
        mask: Vec<bool>,
    },
    MulConst {
        x: Var,
        factors: Vec<T>,
    },
    CrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        probs: Vec<T>,
    },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
}

/// Operation recorder. One tape per forward/backward pass.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
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

    /// Records an input; it takes part in backward iff `requires_grad` is set.
    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value.with_requires_grad(true))
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value.with_requires_grad(false))
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.nodes[v.0].value.grad()
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].value.requires_grad()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let rg = inputs.iter().any(|&v| self.needs(v));
        self.nodes.push(Node {
            value: value.with_requires_grad(rg),
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn matrix(&self, v: Var, op: &'static str) -> Result<(usize, usize)> {
        let s = self.value(v).shape();
        if s.len() != 2 {
            return Err(Error::dim(op, s, &[]));
        }
        Ok((s[0], s[1]))
    }

    /// `a [m×k] · b [k×n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.matrix(a, "matmul")?;
        let (k2, n) = self.matrix(b, "matmul")?;
        if k != k2 {
            return Err(Error::dim("matmul", self.value(a).shape(), self.value(b).shape()));
        }
        let out = kernels::gemm(self.value(a).data(), self.value(b).data(), m, k, n);
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::MatMul(a, b), &[a, b]))
    }

    /// `a [m×k] · bᵀ` for `b [n×k]`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.matrix(a, "matmul_nt")?;
        let (n, k2) = self.matrix(b, "matmul_nt")?;
        if k != k2 {
            return Err(Error::dim("matmul_nt", self.value(a).shape(), self.value(b).shape()));
        }
        let out = kernels::gemm_nt(self.value(a).data(), self.value(b).data(), m, k, n);
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::MatMulNt(a, b), &[a, b]))
    }

    fn same_shape(&self, a: Var, b: Var, op: &'static str) -> Result<()> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Error::dim(op, self.value(a).shape(), self.value(b).shape()));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let out = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| x + y)
            .collect();
        let shape = self.value(a).shape().to_vec();
        Ok(self.push(Tensor::new(shape, out)?, Op::Add(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let out = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| x * y)
            .collect();
        let shape = self.value(a).shape().to_vec();
        Ok(self.push(Tensor::new(shape, out)?, Op::Mul(a, b), &[a, b]))
    }

    /// Adds a length-`c` vector to every row of `x [r×c]`.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (r, c) = self.matrix(x, "add_row")?;
        if self.value(bias).numel() != c {
            return Err(Error::dim("add_row", self.value(x).shape(), self.value(bias).shape()));
        }
        let b = self.value(bias).data();
        let mut out = self.value(x).data().to_vec();
        for row in out.chunks_exact_mut(c) {
            for (o, &bv) in row.iter_mut().zip(b) {
                *o = *o + bv;
            }
        }
        Ok(self.push(Tensor::new(vec![r, c], out)?, Op::AddRow(x, bias), &[x, bias]))
    }

    pub fn scale(&mut self, x: Var, s: T) -> Result<Var> {
        let v = self.value(x);
        let out = v.data().iter().map(|&a| a * s).collect();
        let shape = v.shape().to_vec();
        Ok(self.push(Tensor::new(shape, out)?, Op::Scale(x, s), &[x]))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s: T = self.value(x).data().iter().copied().sum();
        Ok(self.push(Tensor::scalar(s), Op::Sum(x), &[x]))
    }

    /// Row-wise softmax over the last dimension, max-subtracted.
    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x);
        if !v.is_finite() {
            return Err(Error::Numeric("softmax_rows: non-finite logits".into()));
        }
        let (r, c) = v.dims2();
        let mut out = v.data().to_vec();
        for row in out.chunks_exact_mut(c) {
            kernels::softmax_in_place(row);
        }
        debug_assert_eq!(out.len(), r * c);
        let shape = v.shape().to_vec();
        Ok(self.push(Tensor::new(shape, out)?, Op::SoftmaxRows(x), &[x]))
    }

    /// Per-row normalization over the last dimension followed by `gamma·x̂ + beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: T) -> Result<Var> {
        let (r, d) = self.value(x).dims2();
        if self.value(gamma).numel() != d || self.value(beta).numel() != d {
            return Err(Error::dim("layer_norm", self.value(x).shape(), self.value(gamma).shape()));
        }
        let xs = self.value(x).data();
        let g = self.value(gamma).data();
        let b = self.value(beta).data();
        let dn = T::from_count(d);
        let mut xhat = vec![T::zero(); r * d];
        let mut inv_std = vec![T::zero(); r];
        let mut out = vec![T::zero(); r * d];
        for i in 0..r {
            let row = &xs[i * d..(i + 1) * d];
            let mean = row.iter().copied().sum::<T>() / dn;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / dn;
            let is = T::one() / (var + eps).sqrt();
            inv_std[i] = is;
            for j in 0..d {
                let h = (row[j] - mean) * is;
                xhat[i * d + j] = h;
                out[i * d + j] = g[j] * h + b[j];
            }
        }
        let shape = self.value(x).shape().to_vec();
        let op = Op::LayerNorm {
            x,
            gamma,
            beta,
            xhat,
            inv_std,
        };
        Ok(self.push(Tensor::new(shape, out)?, op, &[x, gamma, beta]))
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x);
        let out = v.data().iter().map(|&a| kernels::gelu(a)).collect();
        let shape = v.shape().to_vec();
        Ok(self.push(Tensor::new(shape, out)?, Op::Gelu(x), &[x]))
    }

    /// Looks up rows of an embedding table.
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let (vocab, d) = self.matrix(table, "gather_rows")?;
        if let Some(&bad) = ids.iter().find(|&&i| i >= vocab) {
            return Err(Error::Data(format!("token id {bad} outside table of {vocab} rows")));
        }
        let t = self.value(table).data();
        let mut out = Vec::with_capacity(ids.len() * d);
        for &i in ids {
            out.extend_from_slice(&t[i * d..(i + 1) * d]);
        }
        let value = Tensor::new(vec![ids.len(), d], out)?;
        let op = Op::GatherRows {
            table,
            ids: ids.to_vec(),
        };
        Ok(self.push(value, op, &[table]))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.matrix(x, "slice_rows")?;
        if start + len > r || len == 0 {
            return Err(Error::dim("slice_rows", &[r, c], &[start, len]));
        }
        let out = self.value(x).data()[start * c..(start + len) * c].to_vec();
        Ok(self.push(Tensor::new(vec![len, c], out)?, Op::SliceRows { x, start }, &[x]))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.matrix(x, "slice_cols")?;
        if start + len > c || len == 0 {
            return Err(Error::dim("slice_cols", &[r, c], &[start, len]));
        }
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(r * len);
        for i in 0..r {
            out.extend_from_slice(&src[i * c + start..i * c + start + len]);
        }
        Ok(self.push(Tensor::new(vec![r, len], out)?, Op::SliceCols { x, start }, &[x]))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Usage("concat_cols of nothing".into()))?;
        let (r, _) = self.matrix(*first, "concat_cols")?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (pr, pc) = self.matrix(p, "concat_cols")?;
            if pr != r {
                return Err(Error::dim("concat_cols", self.value(*first).shape(), &[pr, pc]));
            }
            widths.push(pc);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(r * total);
        for i in 0..r {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(p).data()[i * w..(i + 1) * w]);
            }
        }
        let value = Tensor::new(vec![r, total], out)?;
        Ok(self.push(value, Op::ConcatCols(parts.to_vec()), parts))
    }

    /// Takes row `row` from each source and stacks them into `[sources × c]`.
    pub fn stack_rows(&mut self, sources: &[Var], row: usize) -> Result<Var> {
        let first = sources
            .first()
            .ok_or_else(|| Error::Usage("stack_rows of nothing".into()))?;
        let (_, c) = self.matrix(*first, "stack_rows")?;
        let mut out = Vec::with_capacity(sources.len() * c);
        for &s in sources {
            let (sr, sc) = self.matrix(s, "stack_rows")?;
            if sc != c || row >= sr {
                return Err(Error::dim("stack_rows", &[row, c], &[sr, sc]));
            }
            out.extend_from_slice(self.value(s).row(row));
        }
        let value = Tensor::new(vec![sources.len(), c], out)?;
        let op = Op::StackRows {
            sources: sources.to_vec(),
            row,
        };
        Ok(self.push(value, op, sources))
    }

    /// Adds `value` to every entry of the `rows × cols` sub-block.
    pub fn add_block(&mut self, x: Var, rows: Range<usize>, cols: Range<usize>, value: T) -> Result<Var> {
        let (r, c) = self.matrix(x, "add_block")?;
        if rows.end > r || cols.end > c {
            return Err(Error::dim("add_block", &[r, c], &[rows.end, cols.end]));
        }
        let mut out = self.value(x).data().to_vec();
        for i in rows {
            for j in cols.clone() {
                out[i * c + j] = out[i * c + j] + value;
            }
        }
        Ok(self.push(Tensor::new(vec![r, c], out)?, Op::AddBlock(x), &[x]))
    }

    /// Overwrites every column flagged in `mask` with `fill`; those entries pass no gradient.
    pub fn mask_cols(&mut self, x: Var, mask: &[bool], fill: T) -> Result<Var> {
        let (r, c) = self.matrix(x, "mask_cols")?;
        if mask.len() != c {
            return Err(Error::dim("mask_cols", &[r, c], &[mask.len()]));
        }
        let mut out = self.value(x).data().to_vec();
        for row in out.chunks_exact_mut(c) {
            for (o, &m) in row.iter_mut().zip(mask) {
                if m {
                    *o = fill;
                }
            }
        }
        let op = Op::MaskCols {
            x,
            mask: mask.to_vec(),
        };
        Ok(self.push(Tensor::new(vec![r, c], out)?, op, &[x]))
    }

    /// Elementwise product with a constant of the same length.
    pub fn mul_const(&mut self, x: Var, factors: Vec<T>) -> Result<Var> {
        let v = self.value(x);
        if factors.len() != v.numel() {
            return Err(Error::dim("mul_const", v.shape(), &[factors.len()]));
        }
        let out = v.data().iter().zip(&factors).map(|(&a, &f)| a * f).collect();
        let shape = v.shape().to_vec();
        Ok(self.push(Tensor::new(shape, out)?, Op::MulConst { x, factors }, &[x]))
    }

    /// Inverted dropout: zeroes with probability `rate`, rescales survivors.
    pub fn dropout<R: Rng>(&mut self, x: Var, rate: f64, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!("dropout rate {rate} outside [0, 1)")));
        }
        if rate == 0.0 {
            return Ok(x);
        }
        let keep = T::lit(1.0 / (1.0 - rate));
        let factors = (0..self.value(x).numel())
            .map(|_| if rng.gen::<f64>() < rate { T::zero() } else { keep })
            .collect();
        self.mul_const(x, factors)
    }

    /// Mean negative log-likelihood of `labels` under row-wise softmax of `logits [b×c]`.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let (b, c) = self.matrix(logits, "cross_entropy")?;
        if labels.len() != b {
            return Err(Error::dim("cross_entropy", &[b, c], &[labels.len()]));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= c) {
            return Err(Error::Data(format!("label index {bad} out of range for {c} classes")));
        }
        let v = self.value(logits);
        if !v.is_finite() {
            return Err(Error::Numeric("cross_entropy: non-finite logits".into()));
        }
        let mut probs = v.data().to_vec();
        let mut total = T::zero();
        for (row, &y) in v.data().chunks_exact(c).zip(labels) {
            total = total + kernels::log_sum_exp(row) - row[y];
        }
        for row in probs.chunks_exact_mut(c) {
            kernels::softmax_in_place(row);
        }
        let loss = total / T::from_count(b);
        let op = Op::CrossEntropy {
            logits,
            labels: labels.to_vec(),
            probs,
        };
        Ok(self.push(Tensor::scalar(loss), op, &[logits]))
    }

    /// Back-propagates from a single-element output, storing gradients on
    /// every node that requires one.
    pub fn backward(&mut self, out: Var) -> Result<()> {
        if self.value(out).numel() != 1 {
            return Err(Error::Usage(format!(
                "backward needs a scalar output, got shape {:?}",
                self.value(out).shape()
            )));
        }
        for node in &mut self.nodes {
            node.value.clear_grad();
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[out.0] = Some(vec![T::one()]);
        for i in (0..=out.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].value.requires_grad() {
                continue;
            }
            self.propagate(i, &g, &mut grads);
            self.nodes[i].value.set_grad(g)?;
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let node = &self.nodes[i];
        let needs = |v: Var| self.nodes[v.0].value.requires_grad();
        let val = |v: Var| &self.nodes[v.0].value;
        let mut acc = |v: Var, contrib: Vec<T>| {
            match &mut grads[v.0] {
                Some(existing) => {
                    for (e, c) in existing.iter_mut().zip(contrib) {
                        *e = *e + c;
                    }
                }
                slot @ None => *slot = Some(contrib),
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = val(*a).dims2();
                let n = val(*b).dims2().1;
                if needs(*a) {
                    acc(*a, kernels::gemm_nt(g, val(*b).data(), m, n, k));
                }
                if needs(*b) {
                    acc(*b, kernels::gemm_tn(val(*a).data(), g, m, k, n));
                }
            }
            Op::MatMulNt(a, b) => {
                let (m, k) = val(*a).dims2();
                let n = val(*b).dims2().0;
                if needs(*a) {
                    acc(*a, kernels::gemm(g, val(*b).data(), m, n, k));
                }
                if needs(*b) {
                    acc(*b, kernels::gemm_tn(g, val(*a).data(), m, n, k));
                }
            }
            Op::Add(a, b) => {
                if needs(*a) {
                    acc(*a, g.to_vec());
                }
                if needs(*b) {
                    acc(*b, g.to_vec());
                }
            }
            Op::Mul(a, b) => {
                if needs(*a) {
                    acc(*a, g.iter().zip(val(*b).data()).map(|(&g, &y)| g * y).collect());
                }
                if needs(*b) {
                    acc(*b, g.iter().zip(val(*a).data()).map(|(&g, &x)| g * x).collect());
                }
            }
            Op::AddRow(x, bias) => {
                if needs(*x) {
                    acc(*x, g.to_vec());
                }
                if needs(*bias) {
                    let c = val(*bias).numel();
                    let mut db = vec![T::zero(); c];
                    for row in g.chunks_exact(c) {
                        for (d, &gv) in db.iter_mut().zip(row) {
                            *d = *d + gv;
                        }
                    }
                    acc(*bias, db);
                }
            }
            Op::Scale(x, s) => acc(*x, g.iter().map(|&gv| gv * *s).collect()),
            Op::Sum(x) => acc(*x, vec![g[0]; val(*x).numel()]),
            Op::SoftmaxRows(x) => {
                let y = node.value.data();
                let c = node.value.dims2().1;
                let mut dx = vec![T::zero(); y.len()];
                for ((dr, yr), gr) in dx.chunks_exact_mut(c).zip(y.chunks_exact(c)).zip(g.chunks_exact(c)) {
                    let dot: T = yr.iter().zip(gr).map(|(&a, &b)| a * b).sum();
                    for j in 0..c {
                        dr[j] = yr[j] * (gr[j] - dot);
                    }
                }
                acc(*x, dx);
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let d = val(*gamma).numel();
                let gm = val(*gamma).data();
                if needs(*x) {
                    let dn = T::from_count(d);
                    let mut dx = vec![T::zero(); g.len()];
                    for (r, is) in inv_std.iter().enumerate() {
                        let gr = &g[r * d..(r + 1) * d];
                        let hr = &xhat[r * d..(r + 1) * d];
                        let dh: Vec<T> = gr.iter().zip(gm).map(|(&a, &b)| a * b).collect();
                        let s1: T = dh.iter().copied().sum();
                        let s2: T = dh.iter().zip(hr).map(|(&a, &b)| a * b).sum();
                        for j in 0..d {
                            dx[r * d + j] = *is / dn * (dn * dh[j] - s1 - hr[j] * s2);
                        }
                    }
                    acc(*x, dx);
                }
                if needs(*gamma) {
                    let mut dg = vec![T::zero(); d];
                    for (gr, hr) in g.chunks_exact(d).zip(xhat.chunks_exact(d)) {
                        for j in 0..d {
                            dg[j] = dg[j] + gr[j] * hr[j];
                        }
                    }
                    acc(*gamma, dg);
                }
                if needs(*beta) {
                    let mut db = vec![T::zero(); d];
                    for gr in g.chunks_exact(d) {
                        for j in 0..d {
                            db[j] = db[j] + gr[j];
                        }
                    }
                    acc(*beta, db);
                }
            }
            Op::Gelu(x) => {
                let dx = g
                    .iter()
                    .zip(val(*x).data())
                    .map(|(&gv, &xv)| gv * kernels::gelu_grad(xv))
                    .collect();
                acc(*x, dx);
            }
            Op::GatherRows { table, ids } => {
                let (vocab, d) = val(*table).dims2();
                let mut dt = vec![T::zero(); vocab * d];
                for (r, &id) in ids.iter().enumerate() {
                    for j in 0..d {
                        dt[id * d + j] = dt[id * d + j] + g[r * d + j];
                    }
                }
                acc(*table, dt);
            }
            Op::SliceRows { x, start } => {
                let (r, c) = val(*x).dims2();
                let mut dx = vec![T::zero(); r * c];
                dx[start * c..start * c + g.len()].copy_from_slice(g);
                acc(*x, dx);
            }
            Op::SliceCols { x, start } => {
                let (r, c) = val(*x).dims2();
                let len = node.value.dims2().1;
                let mut dx = vec![T::zero(); r * c];
                for i in 0..r {
                    dx[i * c + start..i * c + start + len].copy_from_slice(&g[i * len..(i + 1) * len]);
                }
                acc(*x, dx);
            }
            Op::ConcatCols(parts) => {
                let (r, total) = node.value.dims2();
                let mut offset = 0;
                for &p in parts {
                    let w = val(p).dims2().1;
                    if needs(p) {
                        let mut dp = Vec::with_capacity(r * w);
                        for i in 0..r {
                            dp.extend_from_slice(&g[i * total + offset..i * total + offset + w]);
                        }
                        acc(p, dp);
                    }
                    offset += w;
                }
            }
            Op::StackRows { sources, row } => {
                for (k, &s) in sources.iter().enumerate() {
                    if !needs(s) {
                        continue;
                    }
                    let (r, c) = val(s).dims2();
                    let mut ds = vec![T::zero(); r * c];
                    ds[row * c..(row + 1) * c].copy_from_slice(&g[k * c..(k + 1) * c]);
                    acc(s, ds);
                }
            }
            Op::AddBlock(x) => acc(*x, g.to_vec()),
            Op::MaskCols { x, mask } => {
                let c = mask.len();
                let mut dx = g.to_vec();
                for row in dx.chunks_exact_mut(c) {
                    for (d, &m) in row.iter_mut().zip(mask) {
                        if m {
                            *d = T::zero();
                        }
                    }
                }
                acc(*x, dx);
            }
            Op::MulConst { x, factors } => {
                acc(*x, g.iter().zip(factors).map(|(&gv, &f)| gv * f).collect());
            }
            Op::CrossEntropy {
                logits,
                labels,
                probs,
            } => {
                let (b, c) = val(*logits).dims2();
                let scale = g[0] / T::from_count(b);
                let mut dl: Vec<T> = probs.iter().map(|&p| p * scale).collect();
                for (r, &y) in labels.iter().enumerate() {
                    dl[r * c + y] = dl[r * c + y] - scale;
                }
                acc(*logits, dl);
            }
        }
    }
}
