//! Reverse-mode automatic differentiation over dense matrices.
//!
//! A [`Tape`] records every operation applied to [`Var`] handles. Parameters
//! are borrowed from an external slice and never copied; their gradients are
//! accumulated into caller-owned buffers by [`Tape::backward_into`].

use rand::Rng;

use super::tensor::{gemm, Layout, Tensor};
use super::NumericsError;

const LAYER_NORM_EPS: f64 = 1e-5;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// One attention block: query rows `[q_start, q_start + q_len)` attend over
/// key rows `[k_start, k_start + k_len)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttnSegment {
    pub q_start: usize,
    pub q_len: usize,
    pub k_start: usize,
    pub k_len: usize,
}

enum Value {
    Owned(Tensor),
    Param(usize),
}

enum Op {
    Leaf,
    MatMul {
        a: Var,
        b: Var,
        b_transposed: bool,
    },
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        normalized: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Gather {
        table: Var,
        ids: Vec<usize>,
    },
    Dropout {
        x: Var,
        mask: Vec<f64>,
    },
    Attention {
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        segments: Vec<AttnSegment>,
        probs: Vec<f64>,
    },
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        weights: Vec<f64>,
        probs: Vec<f64>,
    },
    Sum(Var),
}

struct Node {
    value: Value,
    op: Op,
    requires_grad: bool,
}

/// Recording context for one forward/backward pass.
pub struct Tape<'p> {
    params: &'p [Tensor],
    param_vars: Vec<Option<Var>>,
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`].
pub struct Gradients {
    nodes: Vec<Option<Tensor>>,
    params: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient with respect to a recorded value (`None` if it did not
    /// influence the output).
    pub fn wrt(&self, var: Var) -> Option<&Tensor> {
        self.nodes[var.0].as_ref()
    }

    pub fn param(&self, index: usize) -> Option<&Tensor> {
        self.params[index].as_ref()
    }
}

fn matrix_dims(t: &Tensor) -> (usize, usize) {
    (t.rows(), t.cols())
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p [Tensor]) -> Self {
        Self {
            params,
            param_vars: vec![None; params.len()],
            nodes: Vec::new(),
        }
    }

    /// Tape with no parameters, for pure functions of inputs.
    pub fn empty() -> Tape<'static> {
        Tape {
            params: &[],
            param_vars: Vec::new(),
            nodes: Vec::new(),
        }
    }

    pub fn value(&self, var: Var) -> &Tensor {
        match &self.nodes[var.0].value {
            Value::Owned(t) => t,
            Value::Param(i) => &self.params[*i],
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value: Value::Owned(value),
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Shared parameter leaf. Repeated calls return the same handle, so every
    /// use of a parameter accumulates into one gradient.
    pub fn param(&mut self, index: usize) -> Var {
        if let Some(v) = self.param_vars[index] {
            return v;
        }
        self.nodes.push(Node {
            value: Value::Param(index),
            op: Op::Leaf,
            requires_grad: true,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars[index] = Some(v);
        v
    }

    /// Leaf that does not receive a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Leaf whose gradient is reported in [`Gradients::wrt`].
    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        self.matmul_impl(a, b, false)
    }

    /// `a · bᵀ`.
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Var {
        self.matmul_impl(a, b, true)
    }

    fn matmul_impl(&mut self, a: Var, b: Var, b_transposed: bool) -> Var {
        let (m, k) = matrix_dims(self.value(a));
        let (br, bc) = matrix_dims(self.value(b));
        let n = if b_transposed {
            assert_eq!(bc, k, "matmul_bt inner dimension mismatch");
            br
        } else {
            assert_eq!(br, k, "matmul inner dimension mismatch");
            bc
        };
        let mut out = vec![0.0; m * n];
        let layout = if b_transposed {
            Layout::Transposed
        } else {
            Layout::Normal
        };
        gemm(
            m,
            k,
            n,
            self.value(a).data(),
            Layout::Normal,
            self.value(b).data(),
            layout,
            0.0,
            &mut out,
        );
        let rg = self.needs(&[a, b]);
        self.push(
            Tensor::new(vec![m, n], out).expect("matmul shape"),
            Op::MatMul { a, b, b_transposed },
            rg,
        )
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.shape(), y.shape(), "add shape mismatch");
        let data = x.data().iter().zip(y.data()).map(|(p, q)| p + q).collect();
        let out = Tensor::new(x.shape().to_vec(), data).expect("add shape");
        let rg = self.needs(&[a, b]);
        self.push(out, Op::Add(a, b), rg)
    }

    /// Adds a row vector to every row of `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Var {
        let x = self.value(a);
        let b = self.value(bias);
        let cols = x.cols();
        assert_eq!(b.len(), cols, "add_row width mismatch");
        let mut out = x.clone();
        for r in 0..out.rows() {
            for (o, bv) in out.row_mut(r).iter_mut().zip(b.data()) {
                *o += bv;
            }
        }
        let rg = self.needs(&[a, bias]);
        self.push(out, Op::AddRow(a, bias), rg)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.shape(), y.shape(), "mul shape mismatch");
        let data = x.data().iter().zip(y.data()).map(|(p, q)| p * q).collect();
        let out = Tensor::new(x.shape().to_vec(), data).expect("mul shape");
        let rg = self.needs(&[a, b]);
        self.push(out, Op::Mul(a, b), rg)
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let mut out = self.value(a).clone();
        out.scale_in_place(factor);
        let rg = self.needs(&[a]);
        self.push(out, Op::Scale(a, factor), rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        out.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
        let rg = self.needs(&[a]);
        self.push(out, Op::Relu(a), rg)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let total = self.value(a).data().iter().sum();
        let rg = self.needs(&[a]);
        self.push(Tensor::scalar(total), Op::Sum(a), rg)
    }

    /// Row-wise layer normalization with learned gain and bias.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Var {
        let input = self.value(x);
        let (rows, cols) = matrix_dims(input);
        let g = self.value(gain).data();
        let b = self.value(bias).data();
        assert_eq!(g.len(), cols);
        assert_eq!(b.len(), cols);
        let mut normalized = vec![0.0; rows * cols];
        let mut inv_std = vec![0.0; rows];
        let mut out = vec![0.0; rows * cols];
        for r in 0..rows {
            let row = input.row(r);
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
            let is = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            inv_std[r] = is;
            for c in 0..cols {
                let nv = (row[c] - mean) * is;
                normalized[r * cols + c] = nv;
                out[r * cols + c] = nv * g[c] + b[c];
            }
        }
        let shape = input.shape().to_vec();
        let rg = self.needs(&[x, gain, bias]);
        self.push(
            Tensor::new(shape, out).expect("layer_norm shape"),
            Op::LayerNorm {
                x,
                gain,
                bias,
                normalized,
                inv_std,
            },
            rg,
        )
    }

    /// Selects rows of `table` by index.
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Var {
        let t = self.value(table);
        let cols = t.cols();
        let mut out = Vec::with_capacity(ids.len() * cols);
        for &id in ids {
            out.extend_from_slice(t.row(id));
        }
        let rg = self.needs(&[table]);
        self.push(
            Tensor::new(vec![ids.len(), cols], out).expect("gather shape"),
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
            rg,
        )
    }

    /// Inverted dropout. A rate of zero returns `x` unchanged.
    pub fn dropout<R: Rng>(&mut self, x: Var, rate: f64, rng: &mut R) -> Var {
        if rate <= 0.0 {
            return x;
        }
        let keep = 1.0 - rate;
        let n = self.value(x).len();
        let mask: Vec<f64> = (0..n)
            .map(|_| {
                if rng.gen::<f64>() < keep {
                    1.0 / keep
                } else {
                    0.0
                }
            })
            .collect();
        let mut out = self.value(x).clone();
        for (o, m) in out.data_mut().iter_mut().zip(&mask) {
            *o *= m;
        }
        let rg = self.needs(&[x]);
        self.push(out, Op::Dropout { x, mask }, rg)
    }

    /// Multi-head scaled dot-product attention over independent segments.
    ///
    /// `q` is `Tq × d`, `k` and `v` are `Tk × d`; head `h` uses columns
    /// `h·d/heads .. (h+1)·d/heads`. With `causal`, query `i` of a segment only
    /// sees keys `0..=i` of that segment.
    pub fn attention(
        &mut self,
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        segments: &[AttnSegment],
        causal: bool,
    ) -> Var {
        let (tq, d) = matrix_dims(self.value(q));
        assert_eq!(self.value(k).cols(), d);
        assert_eq!(self.value(v).shape(), self.value(k).shape());
        assert_eq!(d % heads, 0);
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let (qd, kd, vd) = (
            self.value(q).data(),
            self.value(k).data(),
            self.value(v).data(),
        );
        let mut out = vec![0.0; tq * d];
        let mut probs = Vec::new();
        for seg in segments {
            if causal {
                assert_eq!(
                    seg.q_len, seg.k_len,
                    "causal attention needs square segments"
                );
            }
            for h in 0..heads {
                let off = h * dh;
                for i in 0..seg.q_len {
                    let qrow = &qd[(seg.q_start + i) * d + off..][..dh];
                    let visible = if causal { i + 1 } else { seg.k_len };
                    let base = probs.len();
                    let mut max = f64::NEG_INFINITY;
                    for j in 0..seg.k_len {
                        let s = if j < visible {
                            let krow = &kd[(seg.k_start + j) * d + off..][..dh];
                            qrow.iter().zip(krow).map(|(a, b)| a * b).sum::<f64>() * scale
                        } else {
                            f64::NEG_INFINITY
                        };
                        max = max.max(s);
                        probs.push(s);
                    }
                    let row = &mut probs[base..];
                    let mut total = 0.0;
                    for p in row.iter_mut() {
                        *p = (*p - max).exp();
                        total += *p;
                    }
                    let orow = &mut out[(seg.q_start + i) * d + off..][..dh];
                    for (j, p) in row.iter_mut().enumerate() {
                        *p /= total;
                        if *p != 0.0 {
                            let vrow = &vd[(seg.k_start + j) * d + off..][..dh];
                            for (o, x) in orow.iter_mut().zip(vrow) {
                                *o += *p * x;
                            }
                        }
                    }
                }
            }
        }
        let rg = self.needs(&[q, k, v]);
        self.push(
            Tensor::new(vec![tq, d], out).expect("attention shape"),
            Op::Attention {
                q,
                k,
                v,
                heads,
                segments: segments.to_vec(),
                probs,
            },
            rg,
        )
    }

    /// Sum over rows of `weights[r] · (−ln softmax(logits[r])[targets[r]])`.
    pub fn cross_entropy(
        &mut self,
        logits: Var,
        targets: &[usize],
        weights: &[f64],
    ) -> Result<Var, NumericsError> {
        let l = self.value(logits);
        let (rows, cols) = matrix_dims(l);
        if targets.len() != rows || weights.len() != rows {
            return Err(NumericsError::Shape(format!(
                "cross entropy over {rows} rows got {} targets and {} weights",
                targets.len(),
                weights.len()
            )));
        }
        let mut probs = Vec::with_capacity(rows * cols);
        let mut total = 0.0;
        for r in 0..rows {
            let t = targets[r];
            if t >= cols {
                return Err(NumericsError::InvalidLabel {
                    label: t,
                    classes: cols,
                });
            }
            let row = l.row(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
            total += weights[r] * (lse - row[t]);
            probs.extend(row.iter().map(|x| (x - lse).exp()));
        }
        let rg = self.needs(&[logits]);
        Ok(self.push(
            Tensor::scalar(total),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                weights: weights.to_vec(),
                probs,
            },
            rg,
        ))
    }

    /// Reverse pass from a scalar output.
    pub fn backward(&self, output: Var) -> Gradients {
        let mut params: Vec<Option<Tensor>> = vec![None; self.params.len()];
        let nodes = self.backward_impl(output, &mut |idx, g: Tensor| match &mut params[idx] {
            Some(acc) => acc.add_assign(&g),
            slot @ None => *slot = Some(g),
        });
        Gradients { nodes, params }
    }

    /// Reverse pass that adds parameter gradients into `grads`, which must be
    /// shaped like the parameter slice.
    pub fn backward_into(&self, output: Var, grads: &mut [Tensor]) {
        assert_eq!(grads.len(), self.params.len());
        self.backward_impl(output, &mut |idx, g: Tensor| grads[idx].add_assign(&g));
    }

    fn backward_impl(
        &self,
        output: Var,
        sink: &mut dyn FnMut(usize, Tensor),
    ) -> Vec<Option<Tensor>> {
        assert_eq!(
            self.value(output).len(),
            1,
            "backward needs a scalar output"
        );
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(Tensor::filled(self.value(output).shape(), 1.0));

        for idx in (0..=output.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            match &node.op {
                Op::Leaf => {
                    if let Value::Param(p) = node.value {
                        sink(p, g);
                    } else {
                        grads[idx] = Some(g);
                    }
                    continue;
                }
                Op::MatMul { a, b, b_transposed } => {
                    let av = self.value(*a);
                    let bv = self.value(*b);
                    let (m, k) = matrix_dims(av);
                    let n = g.cols();
                    if self.nodes[a.0].requires_grad {
                        let mut da = vec![0.0; m * k];
                        if *b_transposed {
                            // y = a bᵀ, b: n×k → da = g b
                            gemm(
                                m,
                                n,
                                k,
                                g.data(),
                                Layout::Normal,
                                bv.data(),
                                Layout::Normal,
                                0.0,
                                &mut da,
                            );
                        } else {
                            // y = a b, b: k×n → da = g bᵀ
                            gemm(
                                m,
                                n,
                                k,
                                g.data(),
                                Layout::Normal,
                                bv.data(),
                                Layout::Transposed,
                                0.0,
                                &mut da,
                            );
                        }
                        accumulate(&mut grads, *a, av.shape(), da);
                    }
                    if self.nodes[b.0].requires_grad {
                        let mut db = vec![0.0; k * n];
                        if *b_transposed {
                            // db (n×k) = gᵀ a
                            gemm(
                                n,
                                m,
                                k,
                                g.data(),
                                Layout::Transposed,
                                av.data(),
                                Layout::Normal,
                                0.0,
                                &mut db,
                            );
                        } else {
                            // db (k×n) = aᵀ g
                            gemm(
                                k,
                                m,
                                n,
                                av.data(),
                                Layout::Transposed,
                                g.data(),
                                Layout::Normal,
                                0.0,
                                &mut db,
                            );
                        }
                        accumulate(&mut grads, *b, bv.shape(), db);
                    }
                }
                Op::Add(a, b) => {
                    for v in [a, b] {
                        if self.nodes[v.0].requires_grad {
                            accumulate(&mut grads, *v, g.shape(), g.data().to_vec());
                        }
                    }
                }
                Op::AddRow(a, bias) => {
                    if self.nodes[bias.0].requires_grad {
                        let cols = g.cols();
                        let mut db = vec![0.0; cols];
                        for r in 0..g.rows() {
                            for (d, x) in db.iter_mut().zip(g.row(r)) {
                                *d += x;
                            }
                        }
                        accumulate(&mut grads, *bias, self.value(*bias).shape(), db);
                    }
                    if self.nodes[a.0].requires_grad {
                        let shape = g.shape().to_vec();
                        accumulate(&mut grads, *a, &shape, g.into_data());
                    }
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    if self.nodes[a.0].requires_grad {
                        let d = g.data().iter().zip(bv.data()).map(|(x, y)| x * y).collect();
                        accumulate(&mut grads, *a, av.shape(), d);
                    }
                    if self.nodes[b.0].requires_grad {
                        let d = g.data().iter().zip(av.data()).map(|(x, y)| x * y).collect();
                        accumulate(&mut grads, *b, bv.shape(), d);
                    }
                }
                Op::Scale(a, f) => {
                    let d = g.data().iter().map(|x| x * f).collect();
                    accumulate(&mut grads, *a, g.shape(), d);
                }
                Op::Relu(a) => {
                    let d = g
                        .data()
                        .iter()
                        .zip(self.value(*a).data())
                        .map(|(x, inp)| if *inp > 0.0 { *x } else { 0.0 })
                        .collect();
                    accumulate(&mut grads, *a, g.shape(), d);
                }
                Op::Sum(a) => {
                    let shape = self.value(*a).shape();
                    let n = self.value(*a).len();
                    accumulate(&mut grads, *a, shape, vec![g.data()[0]; n]);
                }
                Op::LayerNorm {
                    x,
                    gain,
                    bias,
                    normalized,
                    inv_std,
                } => {
                    let (rows, cols) = matrix_dims(&g);
                    let gv = self.value(*gain).data();
                    if self.nodes[gain.0].requires_grad || self.nodes[bias.0].requires_grad {
                        let mut dg = vec![0.0; cols];
                        let mut db = vec![0.0; cols];
                        for r in 0..rows {
                            for c in 0..cols {
                                let gi = g.data()[r * cols + c];
                                dg[c] += gi * normalized[r * cols + c];
                                db[c] += gi;
                            }
                        }
                        if self.nodes[gain.0].requires_grad {
                            accumulate(&mut grads, *gain, self.value(*gain).shape(), dg);
                        }
                        if self.nodes[bias.0].requires_grad {
                            accumulate(&mut grads, *bias, self.value(*bias).shape(), db);
                        }
                    }
                    if self.nodes[x.0].requires_grad {
                        let mut dx = vec![0.0; rows * cols];
                        let n = cols as f64;
                        for r in 0..rows {
                            let mut sum_d = 0.0;
                            let mut sum_dn = 0.0;
                            for c in 0..cols {
                                let dn = g.data()[r * cols + c] * gv[c];
                                sum_d += dn;
                                sum_dn += dn * normalized[r * cols + c];
                            }
                            for c in 0..cols {
                                let dn = g.data()[r * cols + c] * gv[c];
                                dx[r * cols + c] = inv_std[r] / n
                                    * (n * dn - sum_d - normalized[r * cols + c] * sum_dn);
                            }
                        }
                        accumulate(&mut grads, *x, g.shape(), dx);
                    }
                }
                Op::Gather { table, ids } => {
                    let tv = self.value(*table);
                    let cols = tv.cols();
                    let mut dt = vec![0.0; tv.len()];
                    for (r, &id) in ids.iter().enumerate() {
                        for (d, x) in dt[id * cols..(id + 1) * cols].iter_mut().zip(g.row(r)) {
                            *d += x;
                        }
                    }
                    accumulate(&mut grads, *table, tv.shape(), dt);
                }
                Op::Dropout { x, mask } => {
                    let d = g.data().iter().zip(mask).map(|(a, m)| a * m).collect();
                    accumulate(&mut grads, *x, g.shape(), d);
                }
                Op::Attention {
                    q,
                    k,
                    v,
                    heads,
                    segments,
                    probs,
                } => {
                    let (dq, dk, dv) =
                        self.attention_backward(&g, *q, *k, *v, *heads, segments, probs);
                    accumulate(&mut grads, *q, self.value(*q).shape(), dq);
                    accumulate(&mut grads, *k, self.value(*k).shape(), dk);
                    accumulate(&mut grads, *v, self.value(*v).shape(), dv);
                }
                Op::CrossEntropy {
                    logits,
                    targets,
                    weights,
                    probs,
                } => {
                    let upstream = g.data()[0];
                    let shape = self.value(*logits).shape();
                    let cols = self.value(*logits).cols();
                    let mut d = probs.clone();
                    for (r, (&t, &w)) in targets.iter().zip(weights).enumerate() {
                        let row = &mut d[r * cols..(r + 1) * cols];
                        row[t] -= 1.0;
                        for x in row.iter_mut() {
                            *x *= w * upstream;
                        }
                    }
                    accumulate(&mut grads, *logits, shape, d);
                }
            }
        }
        grads
    }

    #[allow(clippy::too_many_arguments)]
    fn attention_backward(
        &self,
        g: &Tensor,
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        segments: &[AttnSegment],
        probs: &[f64],
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let (qd, kd, vd) = (
            self.value(q).data(),
            self.value(k).data(),
            self.value(v).data(),
        );
        let d = self.value(q).cols();
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut dq = vec![0.0; qd.len()];
        let mut dk = vec![0.0; kd.len()];
        let mut dv = vec![0.0; vd.len()];
        let gd = g.data();
        let mut cursor = 0;
        let mut dp = Vec::new();
        for seg in segments {
            for h in 0..heads {
                let off = h * dh;
                for i in 0..seg.q_len {
                    let p = &probs[cursor..cursor + seg.k_len];
                    cursor += seg.k_len;
                    let grow = &gd[(seg.q_start + i) * d + off..][..dh];
                    dp.clear();
                    let mut dot = 0.0;
                    for (j, &pj) in p.iter().enumerate() {
                        let vrow = &vd[(seg.k_start + j) * d + off..][..dh];
                        let dpj: f64 = grow.iter().zip(vrow).map(|(a, b)| a * b).sum();
                        dot += dpj * pj;
                        dp.push(dpj);
                        if pj != 0.0 {
                            let dvrow = &mut dv[(seg.k_start + j) * d + off..][..dh];
                            for (o, x) in dvrow.iter_mut().zip(grow) {
                                *o += pj * x;
                            }
                        }
                    }
                    let qrow_start = (seg.q_start + i) * d + off;
                    for (j, &pj) in p.iter().enumerate() {
                        if pj == 0.0 {
                            continue;
                        }
                        let ds = pj * (dp[j] - dot) * scale;
                        let kstart = (seg.k_start + j) * d + off;
                        for c in 0..dh {
                            dq[qrow_start + c] += ds * kd[kstart + c];
                            dk[kstart + c] += ds * qd[qrow_start + c];
                        }
                    }
                }
            }
        }
        (dq, dk, dv)
    }
}

fn accumulate(grads: &mut [Option<Tensor>], var: Var, shape: &[usize], data: Vec<f64>) {
    match &mut grads[var.0] {
        Some(acc) => {
            for (a, b) in acc.data_mut().iter_mut().zip(&data) {
                *a += b;
            }
        }
        slot @ None => *slot = Some(Tensor::new(shape.to_vec(), data).expect("gradient shape")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_has_derivative_two_x() {
        let mut tape = Tape::empty();
        let x = tape.input(Tensor::scalar(3.0));
        let y = tape.mul(x, x);
        let grads = tape.backward(y);
        assert_eq!(grads.wrt(x).unwrap().data(), &[6.0]);
    }

    #[test]
    fn shared_param_accumulates_both_uses() {
        let params = vec![Tensor::scalar(2.0)];
        let mut tape = Tape::new(&params);
        let a = tape.param(0);
        let b = tape.param(0);
        assert_eq!(a, b);
        let y = tape.mul(a, b);
        let y = tape.add(y, a);
        let mut g = vec![Tensor::zeros(&[1])];
        tape.backward_into(y, &mut g);
        assert_eq!(g[0].data(), &[5.0]);
    }

    #[test]
    fn causal_attention_first_row_copies_first_value() {
        let mut tape = Tape::empty();
        let q = tape.input(Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap());
        let v = tape.input(Tensor::matrix(2, 2, vec![5.0, 6.0, 7.0, 8.0]).unwrap());
        let seg = AttnSegment {
            q_start: 0,
            q_len: 2,
            k_start: 0,
            k_len: 2,
        };
        let out = tape.attention(q, q, v, 1, &[seg], true);
        assert_eq!(tape.value(out).row(0), &[5.0, 6.0]);
    }

    #[test]
    fn cross_entropy_rejects_bad_label() {
        let mut tape = Tape::empty();
        let l = tape.input(Tensor::matrix(1, 3, vec![0.0; 3]).unwrap());
        assert!(matches!(
            tape.cross_entropy(l, &[3], &[1.0]),
            Err(NumericsError::InvalidLabel {
                label: 3,
                classes: 3
            })
        ));
    }
}
