//! Tape-based reverse-mode differentiation over the handful of primitives
//! needed for small MLP and LeNet-style classifiers.
//!
//! A [`Tape`] is filled during one forward pass and consumed by
//! [`Tape::backward`]. Parameters are borrowed from the model, so a tape can
//! never outlive the weights it was recorded against.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    /// No padding; output shrinks by `kernel - 1`.
    Valid,
    /// Zero padding so the output keeps the input's spatial extent.
    Same,
}

#[derive(Debug, Clone)]
enum Op<'m> {
    Input,
    Dense {
        x: NodeId,
        weight: &'m Tensor,
        bias: &'m Tensor,
        param: Option<usize>,
    },
    Conv2d {
        x: NodeId,
        kernel: &'m Tensor,
        bias: &'m Tensor,
        padding: Padding,
        param: Option<usize>,
    },
    Relu(NodeId),
    Tanh(NodeId),
    Square(NodeId),
    MaxPool2 {
        x: NodeId,
        argmax: Vec<usize>,
    },
    Reshape(NodeId),
}

#[derive(Debug, Clone)]
struct Node<'m> {
    op: Op<'m>,
    value: Tensor,
}

/// Execution-ordered record of one forward pass.
#[derive(Debug, Clone, Default)]
pub struct Tape<'m> {
    nodes: Vec<Node<'m>>,
}

/// Gradient of a parameterized layer's weight and bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrad {
    pub weight: Tensor,
    pub bias: Tensor,
}

/// Output of a backward pass.
#[derive(Debug, Clone)]
pub struct Gradients {
    nodes: Vec<Option<Tensor>>,
    params: BTreeMap<usize, ParamGrad>,
    visited: Vec<NodeId>,
}

impl Gradients {
    /// Gradient with respect to a node's value; `None` if the node does not
    /// influence the output.
    pub fn wrt(&self, id: NodeId) -> Option<&Tensor> {
        self.nodes.get(id).and_then(Option::as_ref)
    }

    /// Parameter gradients keyed by the `param` index given at record time.
    pub fn params(&self) -> &BTreeMap<usize, ParamGrad> {
        &self.params
    }

    pub fn into_params(self) -> BTreeMap<usize, ParamGrad> {
        self.params
    }

    /// Node ids in the order the backward pass processed them.
    pub fn visit_order(&self) -> &[NodeId] {
        &self.visited
    }
}

impl<'m> Tape<'m> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> Result<&Tensor> {
        self.nodes
            .get(id)
            .map(|n| &n.value)
            .ok_or_else(|| Error::State(format!("node {id} is not on the tape")))
    }

    fn push(&mut self, op: Op<'m>, value: Tensor) -> NodeId {
        self.nodes.push(Node { op, value });
        self.nodes.len() - 1
    }

    pub fn input(&mut self, value: Tensor) -> Result<NodeId> {
        value.ensure_finite("input")?;
        Ok(self.push(Op::Input, value))
    }

    pub fn dense(
        &mut self,
        x: NodeId,
        weight: &'m Tensor,
        bias: &'m Tensor,
        param: Option<usize>,
    ) -> Result<NodeId> {
        let value = kernels::dense(weight, bias, self.value(x)?)?;
        Ok(self.push(
            Op::Dense {
                x,
                weight,
                bias,
                param,
            },
            value,
        ))
    }

    pub fn conv2d(
        &mut self,
        x: NodeId,
        kernel: &'m Tensor,
        bias: &'m Tensor,
        padding: Padding,
        param: Option<usize>,
    ) -> Result<NodeId> {
        let value = kernels::conv2d(kernel, bias, self.value(x)?, padding)?;
        Ok(self.push(
            Op::Conv2d {
                x,
                kernel,
                bias,
                padding,
                param,
            },
            value,
        ))
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId> {
        let value = self.value(x)?.map(kernels::relu);
        Ok(self.push(Op::Relu(x), value))
    }

    pub fn tanh(&mut self, x: NodeId) -> Result<NodeId> {
        let value = self.value(x)?.map(f64::tanh);
        Ok(self.push(Op::Tanh(x), value))
    }

    pub fn square(&mut self, x: NodeId) -> Result<NodeId> {
        let value = self.value(x)?.map(|v| v * v);
        Ok(self.push(Op::Square(x), value))
    }

    pub fn max_pool2(&mut self, x: NodeId) -> Result<NodeId> {
        let (value, argmax) = kernels::max_pool2(self.value(x)?)?;
        Ok(self.push(Op::MaxPool2 { x, argmax }, value))
    }

    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> Result<NodeId> {
        let value = self.value(x)?.reshape(shape)?;
        Ok(self.push(Op::Reshape(x), value))
    }

    /// Recomputes every node from its recorded operands.
    pub fn replay(&self) -> Result<Vec<Tensor>> {
        let mut out: Vec<Tensor> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let v = match &node.op {
                Op::Input => node.value.clone(),
                Op::Dense {
                    x, weight, bias, ..
                } => kernels::dense(weight, bias, &out[*x])?,
                Op::Conv2d {
                    x,
                    kernel,
                    bias,
                    padding,
                    ..
                } => kernels::conv2d(kernel, bias, &out[*x], *padding)?,
                Op::Relu(x) => out[*x].map(kernels::relu),
                Op::Tanh(x) => out[*x].map(f64::tanh),
                Op::Square(x) => out[*x].map(|v| v * v),
                Op::MaxPool2 { x, .. } => kernels::max_pool2(&out[*x])?.0,
                Op::Reshape(x) => out[*x].reshape(node.value.shape())?,
            };
            out.push(v);
        }
        Ok(out)
    }

    /// Backpropagates `seed` (dOutput) from `output`, including parameter
    /// gradients.
    pub fn backward(&self, output: NodeId, seed: &Tensor) -> Result<Gradients> {
        self.backward_impl(output, seed, true)
    }

    /// Like [`Tape::backward`] but skips weight and bias gradients.
    pub fn backward_inputs(&self, output: NodeId, seed: &Tensor) -> Result<Gradients> {
        self.backward_impl(output, seed, false)
    }

    fn backward_impl(&self, output: NodeId, seed: &Tensor, with_params: bool) -> Result<Gradients> {
        if self.nodes.is_empty() {
            return Err(Error::State("backward on an empty tape".into()));
        }
        let out_value = self.value(output)?;
        seed.ensure_same_shape(out_value, "backward seed")?;

        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        let mut params = BTreeMap::new();
        let mut visited = Vec::new();
        grads[output] = Some(seed.clone());

        for id in (0..=output).rev() {
            let Some(gy) = grads[id].take() else {
                continue;
            };
            visited.push(id);
            let node = &self.nodes[id];
            match &node.op {
                Op::Input => {}
                Op::Dense {
                    x,
                    weight,
                    param,
                    ..
                } => {
                    let xv = &self.nodes[*x].value;
                    accumulate(&mut grads, *x, kernels::dense_backward_input(weight, &gy));
                    if let (true, Some(p)) = (with_params, param) {
                        let (gw, gb) = kernels::dense_backward_params(xv, &gy, weight.shape());
                        add_param(&mut params, *p, gw, gb);
                    }
                }
                Op::Conv2d {
                    x,
                    kernel,
                    padding,
                    param,
                    ..
                } => {
                    let xv = &self.nodes[*x].value;
                    let (gx, gk, gb) =
                        kernels::conv2d_backward(kernel, xv, &gy, *padding, with_params && param.is_some());
                    accumulate(&mut grads, *x, gx);
                    if let (Some(gk), Some(gb), Some(p)) = (gk, gb, param) {
                        add_param(&mut params, *p, gk, gb);
                    }
                }
                Op::Relu(x) => {
                    let xv = &self.nodes[*x].value;
                    let g = gy.zip_map(xv, |g, v| if v > 0.0 { g } else { 0.0 })?;
                    accumulate(&mut grads, *x, g);
                }
                Op::Tanh(x) => {
                    let g = gy.zip_map(&node.value, |g, t| g * (1.0 - t * t))?;
                    accumulate(&mut grads, *x, g);
                }
                Op::Square(x) => {
                    let xv = &self.nodes[*x].value;
                    let g = gy.zip_map(xv, |g, v| 2.0 * v * g)?;
                    accumulate(&mut grads, *x, g);
                }
                Op::MaxPool2 { x, argmax } => {
                    let mut g = Tensor::zeros_like(&self.nodes[*x].value);
                    let gd = g.data_mut();
                    for (&src, &gv) in argmax.iter().zip(gy.data()) {
                        gd[src] += gv;
                    }
                    accumulate(&mut grads, *x, g);
                }
                Op::Reshape(x) => {
                    let g = gy.reshape(self.nodes[*x].value.shape())?;
                    accumulate(&mut grads, *x, g);
                }
            }
            grads[id] = Some(gy);
        }

        Ok(Gradients {
            nodes: grads,
            params,
            visited,
        })
    }
}

fn accumulate(grads: &mut [Option<Tensor>], id: NodeId, g: Tensor) {
    match &mut grads[id] {
        Some(existing) => {
            for (a, b) in existing.data_mut().iter_mut().zip(g.data()) {
                *a += b;
            }
        }
        slot @ None => *slot = Some(g),
    }
}

fn add_param(params: &mut BTreeMap<usize, ParamGrad>, p: usize, gw: Tensor, gb: Tensor) {
    match params.get_mut(&p) {
        Some(existing) => {
            for (a, b) in existing.weight.data_mut().iter_mut().zip(gw.data()) {
                *a += b;
            }
            for (a, b) in existing.bias.data_mut().iter_mut().zip(gb.data()) {
                *a += b;
            }
        }
        None => {
            params.insert(p, ParamGrad { weight: gw, bias: gb });
        }
    }
}

/// Scalar objective built on top of the logits.
#[derive(Debug, Clone, PartialEq)]
pub enum Loss {
    /// Softmax cross-entropy against a class index.
    CrossEntropy(usize),
    /// A single raw logit.
    Logit(usize),
    /// Weighted sum of other objectives.
    Combination(Vec<(f64, Loss)>),
}

impl Loss {
    pub fn value(&self, logits: &[f64]) -> Result<f64> {
        match self {
            Loss::CrossEntropy(label) => Ok(softmax_cross_entropy(logits, *label)?.0),
            Loss::Logit(i) => logits
                .get(*i)
                .copied()
                .ok_or(Error::Index { index: *i, len: logits.len() }),
            Loss::Combination(terms) => terms
                .iter()
                .map(|(w, l)| l.value(logits).map(|v| w * v))
                .sum(),
        }
    }

    /// dLoss/dlogits.
    pub fn logit_gradient(&self, logits: &[f64]) -> Result<Vec<f64>> {
        match self {
            Loss::CrossEntropy(label) => Ok(softmax_cross_entropy(logits, *label)?.1),
            Loss::Logit(i) => {
                if *i >= logits.len() {
                    return Err(Error::Index { index: *i, len: logits.len() });
                }
                let mut g = vec![0.0; logits.len()];
                g[*i] = 1.0;
                Ok(g)
            }
            Loss::Combination(terms) => {
                let mut g = vec![0.0; logits.len()];
                for (w, l) in terms {
                    for (a, b) in g.iter_mut().zip(l.logit_gradient(logits)?) {
                        *a += w * b;
                    }
                }
                Ok(g)
            }
        }
    }
}

/// Max-shifted softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - m).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Returns `(-log p_label, p - onehot(label))`, with the loss taken through
/// log-sum-exp.
pub fn softmax_cross_entropy(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    if label >= logits.len() {
        return Err(Error::Index {
            index: label,
            len: logits.len(),
        });
    }
    if let Some(z) = logits.iter().find(|z| !z.is_finite()) {
        return Err(Error::Domain(format!("non-finite logit {z}")));
    }
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum_exp: f64 = logits.iter().map(|&z| (z - m).exp()).sum();
    let lse = m + sum_exp.ln();
    let loss = lse - logits[label];
    let mut grad = softmax(logits);
    grad[label] -= 1.0;
    Ok((loss, grad))
}

pub(crate) mod kernels {
    use super::Padding;
    use crate::error::{Error, Result};
    use crate::tensor::Tensor;

    pub fn relu(v: f64) -> f64 {
        if v > 0.0 {
            v
        } else {
            0.0
        }
    }

    pub fn dense(weight: &Tensor, bias: &Tensor, x: &Tensor) -> Result<Tensor> {
        let (out, inp) = (weight.shape()[0], weight.shape()[1]);
        if x.shape() != [inp] {
            return Err(Error::Dimension(format!(
                "dense layer expects input [{inp}], got {:?}",
                x.shape()
            )));
        }
        let (w, xv) = (weight.data(), x.data());
        let y = (0..out)
            .map(|o| {
                let row = &w[o * inp..(o + 1) * inp];
                bias.data()[o] + row.iter().zip(xv).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect();
        Tensor::new(vec![out], y)
    }

    pub fn dense_backward_input(weight: &Tensor, gy: &Tensor) -> Tensor {
        let (out, inp) = (weight.shape()[0], weight.shape()[1]);
        let w = weight.data();
        let mut gx = vec![0.0; inp];
        for o in 0..out {
            let g = gy.data()[o];
            if g == 0.0 {
                continue;
            }
            for (acc, wv) in gx.iter_mut().zip(&w[o * inp..(o + 1) * inp]) {
                *acc += wv * g;
            }
        }
        Tensor::from_vec(gx)
    }

    pub fn dense_backward_params(x: &Tensor, gy: &Tensor, wshape: &[usize]) -> (Tensor, Tensor) {
        let (out, inp) = (wshape[0], wshape[1]);
        let mut gw = vec![0.0; out * inp];
        for o in 0..out {
            let g = gy.data()[o];
            for (acc, xv) in gw[o * inp..(o + 1) * inp].iter_mut().zip(x.data()) {
                *acc = g * xv;
            }
        }
        (
            Tensor::new(wshape.to_vec(), gw).expect("weight shape"),
            gy.clone(),
        )
    }

    pub struct ConvGeom {
        pub c: usize,
        pub h: usize,
        pub w: usize,
        pub o: usize,
        pub kh: usize,
        pub kw: usize,
        pub oh: usize,
        pub ow: usize,
        pub pt: usize,
        pub pl: usize,
    }

    pub fn conv_geometry(kshape: &[usize], xshape: &[usize], padding: Padding) -> Result<ConvGeom> {
        let [o, kc, kh, kw] = *kshape else {
            return Err(Error::Dimension(format!("kernel shape {kshape:?} is not 4-D")));
        };
        let [c, h, w] = *xshape else {
            return Err(Error::Dimension(format!(
                "convolution expects [C,H,W] input, got {xshape:?}"
            )));
        };
        if kc != c {
            return Err(Error::Dimension(format!(
                "convolution expects {kc} input channels, got {c}"
            )));
        }
        let (oh, ow, pt, pl) = match padding {
            Padding::Valid => {
                if kh > h || kw > w {
                    return Err(Error::Dimension(format!(
                        "kernel {kh}x{kw} larger than input {h}x{w}"
                    )));
                }
                (h - kh + 1, w - kw + 1, 0, 0)
            }
            Padding::Same => (h, w, (kh - 1) / 2, (kw - 1) / 2),
        };
        Ok(ConvGeom {
            c,
            h,
            w,
            o,
            kh,
            kw,
            oh,
            ow,
            pt,
            pl,
        })
    }

    /// Calls `f(out_index, kernel_index, input_index)` for every
    /// multiply-accumulate term of a stride-1 convolution.
    #[inline]
    fn for_each_tap(g: &ConvGeom, mut f: impl FnMut(usize, usize, usize)) {
        for o in 0..g.o {
            for i in 0..g.oh {
                for j in 0..g.ow {
                    let out_idx = (o * g.oh + i) * g.ow + j;
                    for c in 0..g.c {
                        for u in 0..g.kh {
                            let Some(r) = (i + u).checked_sub(g.pt).filter(|&r| r < g.h) else {
                                continue;
                            };
                            for v in 0..g.kw {
                                let Some(s) = (j + v).checked_sub(g.pl).filter(|&s| s < g.w) else {
                                    continue;
                                };
                                let k_idx = ((o * g.c + c) * g.kh + u) * g.kw + v;
                                let x_idx = (c * g.h + r) * g.w + s;
                                f(out_idx, k_idx, x_idx);
                            }
                        }
                    }
                }
            }
        }
    }

    pub fn conv2d(kernel: &Tensor, bias: &Tensor, x: &Tensor, padding: Padding) -> Result<Tensor> {
        let g = conv_geometry(kernel.shape(), x.shape(), padding)?;
        let mut y = vec![0.0; g.o * g.oh * g.ow];
        let (k, xv) = (kernel.data(), x.data());
        for_each_tap(&g, |out, ki, xi| y[out] += k[ki] * xv[xi]);
        let plane = g.oh * g.ow;
        for (o, chunk) in y.chunks_mut(plane).enumerate() {
            let b = bias.data()[o];
            for v in chunk {
                *v += b;
            }
        }
        Tensor::new(vec![g.o, g.oh, g.ow], y)
    }

    pub fn conv2d_backward(
        kernel: &Tensor,
        x: &Tensor,
        gy: &Tensor,
        padding: Padding,
        with_params: bool,
    ) -> (Tensor, Option<Tensor>, Option<Tensor>) {
        let g = conv_geometry(kernel.shape(), x.shape(), padding).expect("recorded geometry");
        let (k, xv, gyv) = (kernel.data(), x.data(), gy.data());
        let mut gx = vec![0.0; xv.len()];
        if with_params {
            let mut gk = vec![0.0; k.len()];
            for_each_tap(&g, |out, ki, xi| {
                gx[xi] += k[ki] * gyv[out];
                gk[ki] += xv[xi] * gyv[out];
            });
            let plane = g.oh * g.ow;
            let gb: Vec<f64> = gyv.chunks(plane).map(|c| c.iter().sum()).collect();
            (
                Tensor::new(x.shape().to_vec(), gx).expect("input shape"),
                Some(Tensor::new(kernel.shape().to_vec(), gk).expect("kernel shape")),
                Some(Tensor::from_vec(gb)),
            )
        } else {
            for_each_tap(&g, |out, ki, xi| gx[xi] += k[ki] * gyv[out]);
            (Tensor::new(x.shape().to_vec(), gx).expect("input shape"), None, None)
        }
    }

    /// 2x2 max pooling with stride 2; odd trailing rows/columns are dropped.
    /// Returns the pooled tensor and, per output, the flat source index.
    pub fn max_pool2(x: &Tensor) -> Result<(Tensor, Vec<usize>)> {
        let [c, h, w] = *x.shape() else {
            return Err(Error::Dimension(format!(
                "max pool expects [C,H,W] input, got {:?}",
                x.shape()
            )));
        };
        if h < 2 || w < 2 {
            return Err(Error::Dimension(format!("max pool needs at least 2x2, got {h}x{w}")));
        }
        let (oh, ow) = (h / 2, w / 2);
        let xv = x.data();
        let mut out = Vec::with_capacity(c * oh * ow);
        let mut arg = Vec::with_capacity(c * oh * ow);
        for ch in 0..c {
            for i in 0..oh {
                for j in 0..ow {
                    let base = (ch * h + 2 * i) * w + 2 * j;
                    let mut best = base;
                    for cand in [base + 1, base + w, base + w + 1] {
                        if xv[cand] > xv[best] {
                            best = cand;
                        }
                    }
                    out.push(xv[best]);
                    arg.push(best);
                }
            }
        }
        Ok((Tensor::new(vec![c, oh, ow], out)?, arg))
    }
}
