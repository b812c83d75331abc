use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::kernels::{self, ConvGeom};
use super::{ParamSet, Tensor};
use crate::{math, Error, Result};

pub const BN_EPS: f64 = 1e-5;
/// Weight of the old running statistic in the exponential average.
pub const BN_MOMENTUM: f64 = 0.9;

/// Batchnorm behaviour: batch statistics (train) or running statistics (infer).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Handle to a recorded node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct NodeId(usize);

#[derive(Clone, Copy, Debug)]
struct ChannelLayout {
    outer: usize,
    channels: usize,
    inner: usize,
}

#[derive(Debug)]
enum Op {
    Input,
    Dense {
        x: NodeId,
        w: usize,
        b: usize,
        rows: usize,
        inputs: usize,
        outputs: usize,
    },
    Conv2d {
        x: NodeId,
        w: usize,
        b: usize,
        geom: ConvGeom,
        filters: usize,
        cols: Vec<f64>,
    },
    MaxPool {
        x: NodeId,
        argmax: Vec<usize>,
    },
    BatchNorm {
        x: NodeId,
        gamma: usize,
        beta: usize,
        layout: ChannelLayout,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
        train: bool,
    },
    Relu {
        x: NodeId,
    },
    Softmax {
        x: NodeId,
        cols: usize,
    },
    Concat {
        inputs: Vec<NodeId>,
        outer: usize,
        blocks: Vec<usize>,
    },
    Reshape {
        x: NodeId,
    },
    Gather {
        x: NodeId,
        indices: Vec<usize>,
        width: usize,
    },
    Mse {
        pred: NodeId,
        target: Vec<f64>,
    },
    Mean {
        x: NodeId,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Pending running-statistics update produced by a train-mode batchnorm.
#[derive(Debug)]
struct StatUpdate {
    mean_index: usize,
    var_index: usize,
    mean: Vec<f64>,
    var: Vec<f64>,
}

/// Tape of forward operations supporting one reverse sweep.
///
/// Node ids are handed out in recording order, so every node's inputs have
/// smaller ids and walking the tape backwards is a reverse topological order.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    stats: Vec<StatUpdate>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn clear(&mut self) {
        self.nodes.clear();
        self.stats.clear();
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    pub fn input(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Input)
    }

    /// `y = xW + b` for `x: [in]` or `[batch, in]`.
    pub fn dense(&mut self, params: &ParamSet, layer: &str, x: NodeId) -> Result<NodeId> {
        let w = params.index_of(&format!("{layer}.weight"))?;
        let b = params.index_of(&format!("{layer}.bias"))?;
        let weight = params.value_at(w);
        let bias = params.value_at(b);
        let xv = self.value(x);
        let (rows, inputs) = match xv.shape() {
            [n] => (1, *n),
            [r, n] => (*r, *n),
            s => {
                return Err(Error::ShapeMismatch {
                    op: "dense",
                    lhs: s.to_vec(),
                    rhs: weight.shape().to_vec(),
                })
            }
        };
        if weight.rank() != 2 || weight.shape()[0] != inputs {
            return Err(Error::ShapeMismatch {
                op: "dense",
                lhs: xv.shape().to_vec(),
                rhs: weight.shape().to_vec(),
            });
        }
        let outputs = weight.shape()[1];
        let mut out = Vec::with_capacity(rows * outputs);
        for _ in 0..rows {
            out.extend_from_slice(bias.data());
        }
        kernels::matmul_acc(xv.data(), weight.data(), &mut out, rows, inputs, outputs);
        let shape = if xv.rank() == 1 {
            vec![outputs]
        } else {
            vec![rows, outputs]
        };
        let value = Tensor::new(shape, out)?;
        Ok(self.push(
            value,
            Op::Dense {
                x,
                w,
                b,
                rows,
                inputs,
                outputs,
            },
        ))
    }

    /// Cross-correlation of `x: [C,H,W]` or `[B,C,H,W]` with `layer.weight: [F,C,k,k]`.
    pub fn conv2d(
        &mut self,
        params: &ParamSet,
        layer: &str,
        x: NodeId,
        stride: usize,
        padding: usize,
    ) -> Result<NodeId> {
        let w = params.index_of(&format!("{layer}.weight"))?;
        let b = params.index_of(&format!("{layer}.bias"))?;
        let weight = params.value_at(w);
        let bias = params.value_at(b);
        let xv = self.value(x);
        let (batch, channels, height, width, batched) = match *xv.shape() {
            [c, h, w] => (1, c, h, w, false),
            [n, c, h, w] => (n, c, h, w, true),
            _ => {
                return Err(Error::ShapeMismatch {
                    op: "conv2d",
                    lhs: xv.shape().to_vec(),
                    rhs: weight.shape().to_vec(),
                })
            }
        };
        let [filters, w_channels, kernel, kernel2] = *weight.shape() else {
            return Err(Error::ShapeMismatch {
                op: "conv2d",
                lhs: xv.shape().to_vec(),
                rhs: weight.shape().to_vec(),
            });
        };
        if w_channels != channels || kernel != kernel2 {
            return Err(Error::ShapeMismatch {
                op: "conv2d",
                lhs: xv.shape().to_vec(),
                rhs: weight.shape().to_vec(),
            });
        }
        if stride == 0 {
            return Err(Error::InvalidDimension("conv2d stride must be positive".into()));
        }
        let padded = height.min(width) + 2 * padding;
        if kernel > padded {
            return Err(Error::KernelTooLarge { kernel, padded });
        }
        let out_h = (height + 2 * padding - kernel) / stride + 1;
        let out_w = (width + 2 * padding - kernel) / stride + 1;
        let geom = ConvGeom {
            batch,
            channels,
            height,
            width,
            kernel,
            stride,
            pad: padding,
            out_h,
            out_w,
        };
        let n = geom.columns();
        let mut cols = vec![0.0; geom.patch_len() * n];
        kernels::im2col(xv.data(), &geom, &mut cols);
        let mut flat = vec![0.0; filters * n];
        for (f, row) in flat.chunks_exact_mut(n).enumerate() {
            row.fill(bias.data()[f]);
        }
        kernels::matmul_acc(weight.data(), &cols, &mut flat, filters, geom.patch_len(), n);
        // [F, B·P] -> [B, F, P]
        let plane = out_h * out_w;
        let mut out = vec![0.0; batch * filters * plane];
        for f in 0..filters {
            for bi in 0..batch {
                out[(bi * filters + f) * plane..][..plane]
                    .copy_from_slice(&flat[f * n + bi * plane..][..plane]);
            }
        }
        let shape = if batched {
            vec![batch, filters, out_h, out_w]
        } else {
            vec![filters, out_h, out_w]
        };
        let value = Tensor::new(shape, out)?;
        Ok(self.push(
            value,
            Op::Conv2d {
                x,
                w,
                b,
                geom,
                filters,
                cols,
            },
        ))
    }

    /// Non-overlapping or strided max pooling over the last two axes.
    ///
    /// Gradient goes to the first row-major maximum of each window.
    pub fn maxpool2d(&mut self, x: NodeId, window: usize, stride: usize) -> Result<NodeId> {
        let xv = self.value(x);
        let rank = xv.rank();
        if rank < 2 || window == 0 || stride == 0 {
            return Err(Error::InvalidDimension(format!(
                "maxpool2d window {window} stride {stride} on shape {:?}",
                xv.shape()
            )));
        }
        let (h, w) = (xv.shape()[rank - 2], xv.shape()[rank - 1]);
        if window > h || window > w {
            return Err(Error::KernelTooLarge {
                kernel: window,
                padded: h.min(w),
            });
        }
        let out_h = (h - window) / stride + 1;
        let out_w = (w - window) / stride + 1;
        let planes = xv.len() / (h * w);
        let data = xv.data();
        let mut out = Vec::with_capacity(planes * out_h * out_w);
        let mut argmax = Vec::with_capacity(planes * out_h * out_w);
        for p in 0..planes {
            let base = p * h * w;
            for oy in 0..out_h {
                for ox in 0..out_w {
                    let mut best = base + oy * stride * w + ox * stride;
                    for dy in 0..window {
                        for dx in 0..window {
                            let idx = base + (oy * stride + dy) * w + ox * stride + dx;
                            if data[idx] > data[best] {
                                best = idx;
                            }
                        }
                    }
                    out.push(data[best]);
                    argmax.push(best);
                }
            }
        }
        let mut shape = xv.shape().to_vec();
        shape[rank - 2] = out_h;
        shape[rank - 1] = out_w;
        let value = Tensor::new(shape, out)?;
        Ok(self.push(value, Op::MaxPool { x, argmax }))
    }

    /// Per-channel normalisation with learnable `layer.gamma` / `layer.beta`.
    ///
    /// Channels are axis 1 for rank ≥ 2 inputs with a batch axis
    /// (`[B,C,H,W]`, `[B,F]`) and axis 0 for `[C,H,W]`. In train mode the
    /// update of the running statistics is queued on the graph; apply it
    /// with [`Graph::commit_running_stats`].
    pub fn batchnorm(
        &mut self,
        params: &ParamSet,
        layer: &str,
        x: NodeId,
        mode: Mode,
    ) -> Result<NodeId> {
        let gamma = params.index_of(&format!("{layer}.gamma"))?;
        let beta = params.index_of(&format!("{layer}.beta"))?;
        let mean_index = params.index_of(&format!("{layer}.running_mean"))?;
        let var_index = params.index_of(&format!("{layer}.running_var"))?;
        let xv = self.value(x);
        let layout = match *xv.shape() {
            [c] => ChannelLayout {
                outer: 1,
                channels: c,
                inner: 1,
            },
            [b, f] => ChannelLayout {
                outer: b,
                channels: f,
                inner: 1,
            },
            [c, h, w] => ChannelLayout {
                outer: 1,
                channels: c,
                inner: h * w,
            },
            [b, c, h, w] => ChannelLayout {
                outer: b,
                channels: c,
                inner: h * w,
            },
            _ => {
                return Err(Error::InvalidDimension(format!(
                    "batchnorm on shape {:?}",
                    xv.shape()
                )))
            }
        };
        let g = params.value_at(gamma).data();
        let be = params.value_at(beta).data();
        if g.len() != layout.channels {
            return Err(Error::ShapeMismatch {
                op: "batchnorm",
                lhs: xv.shape().to_vec(),
                rhs: params.value_at(gamma).shape().to_vec(),
            });
        }
        let count = layout.outer * layout.inner;
        if count == 0 {
            return Err(Error::EmptyChannel);
        }
        let data = xv.data();
        let ChannelLayout {
            outer,
            channels,
            inner,
        } = layout;
        let at = |o: usize, c: usize| (o * channels + c) * inner;

        let (mean, var) = match mode {
            Mode::Train => {
                let mut mean = vec![0.0; channels];
                let mut var = vec![0.0; channels];
                for c in 0..channels {
                    let mut s = 0.0;
                    for o in 0..outer {
                        s += data[at(o, c)..][..inner].iter().sum::<f64>();
                    }
                    let m = s / count as f64;
                    let mut v = 0.0;
                    for o in 0..outer {
                        v += data[at(o, c)..][..inner]
                            .iter()
                            .map(|&u| (u - m) * (u - m))
                            .sum::<f64>();
                    }
                    mean[c] = m;
                    var[c] = v / count as f64;
                }
                (mean, var)
            }
            Mode::Infer => (
                params.value_at(mean_index).data().to_vec(),
                params.value_at(var_index).data().to_vec(),
            ),
        };
        let inv_std: Vec<f64> = var.iter().map(|&v| 1.0 / math::sqrt(v + BN_EPS)).collect();
        let mut xhat = vec![0.0; data.len()];
        let mut out = vec![0.0; data.len()];
        for o in 0..outer {
            for c in 0..channels {
                let base = at(o, c);
                for i in base..base + inner {
                    let h = (data[i] - mean[c]) * inv_std[c];
                    xhat[i] = h;
                    out[i] = g[c] * h + be[c];
                }
            }
        }
        let mut pending = None;
        if mode == Mode::Train {
            let rm = params.value_at(mean_index).data();
            let rv = params.value_at(var_index).data();
            let new_mean = rm
                .iter()
                .zip(&mean)
                .map(|(&r, &m)| BN_MOMENTUM * r + (1.0 - BN_MOMENTUM) * m)
                .collect();
            let new_var = rv
                .iter()
                .zip(&var)
                .map(|(&r, &v)| BN_MOMENTUM * r + (1.0 - BN_MOMENTUM) * v)
                .collect();
            pending = Some(StatUpdate {
                mean_index,
                var_index,
                mean: new_mean,
                var: new_var,
            });
        }
        let shape = xv.shape().to_vec();
        if let Some(update) = pending {
            self.stats.push(update);
        }
        let value = Tensor::new(shape, out)?;
        Ok(self.push(
            value,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                layout,
                xhat,
                inv_std,
                train: mode == Mode::Train,
            },
        ))
    }

    /// Writes queued batchnorm running statistics into `params`.
    pub fn commit_running_stats(&mut self, params: &mut ParamSet) {
        for s in self.stats.drain(..) {
            params.value_at_mut(s.mean_index).copy_from_slice(&s.mean);
            params.value_at_mut(s.var_index).copy_from_slice(&s.var);
        }
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let xv = self.value(x);
        let data = xv.data().iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
        let value = Tensor::new(xv.shape().to_vec(), data).expect("same shape");
        self.push(value, Op::Relu { x })
    }

    /// Softmax over the last axis, stabilised by subtracting the row maximum.
    pub fn softmax(&mut self, x: NodeId) -> NodeId {
        let xv = self.value(x);
        let cols = *xv.shape().last().expect("tensors have rank >= 1");
        let mut data = xv.data().to_vec();
        for row in data.chunks_exact_mut(cols) {
            softmax_in_place(row);
        }
        let value = Tensor::new(xv.shape().to_vec(), data).expect("same shape");
        self.push(value, Op::Softmax { x, cols })
    }

    /// Concatenation along `axis`; all other axes must agree.
    pub fn concat(&mut self, inputs: &[NodeId], axis: usize) -> Result<NodeId> {
        let first = self.value(
            *inputs
                .first()
                .ok_or_else(|| Error::InvalidDimension("concat of zero tensors".into()))?,
        );
        let rank = first.rank();
        if axis >= rank {
            return Err(Error::InvalidDimension(format!(
                "concat axis {axis} on rank {rank}"
            )));
        }
        let outer: usize = first.shape()[..axis].iter().product();
        let inner: usize = first.shape()[axis + 1..].iter().product();
        let mut shape = first.shape().to_vec();
        shape[axis] = 0;
        let mut blocks = Vec::with_capacity(inputs.len());
        for &id in inputs {
            let s = self.value(id).shape();
            let compatible = s.len() == rank
                && s[..axis] == first.shape()[..axis]
                && s[axis + 1..] == first.shape()[axis + 1..];
            if !compatible {
                return Err(Error::ShapeMismatch {
                    op: "concat",
                    lhs: first.shape().to_vec(),
                    rhs: s.to_vec(),
                });
            }
            shape[axis] += s[axis];
            blocks.push(s[axis] * inner);
        }
        let total: usize = blocks.iter().sum();
        let mut out = Vec::with_capacity(outer * total);
        for o in 0..outer {
            for (&id, &blk) in inputs.iter().zip(&blocks) {
                out.extend_from_slice(&self.value(id).data()[o * blk..(o + 1) * blk]);
            }
        }
        let value = Tensor::new(shape, out)?;
        Ok(self.push(
            value,
            Op::Concat {
                inputs: inputs.to_vec(),
                outer,
                blocks,
            },
        ))
    }

    pub fn reshape(&mut self, x: NodeId, shape: Vec<usize>) -> Result<NodeId> {
        let value = self.value(x).clone().reshape(shape)?;
        Ok(self.push(value, Op::Reshape { x }))
    }

    /// Collapses every axis after the leading (batch) axis.
    pub fn flatten(&mut self, x: NodeId) -> Result<NodeId> {
        let s = self.value(x).shape();
        let rows = s[0];
        let rest = s[1..].iter().product::<usize>().max(1);
        self.reshape(x, vec![rows, rest])
    }

    /// Picks `x[i, indices[i]]` from `x: [B, A]`, giving `[B]`.
    pub fn gather(&mut self, x: NodeId, indices: &[usize]) -> Result<NodeId> {
        let xv = self.value(x);
        let [rows, width] = *xv.shape() else {
            return Err(Error::InvalidDimension(format!(
                "gather needs [batch, actions], got {:?}",
                xv.shape()
            )));
        };
        if indices.len() != rows || indices.iter().any(|&i| i >= width) {
            return Err(Error::ShapeMismatch {
                op: "gather",
                lhs: xv.shape().to_vec(),
                rhs: vec![indices.len()],
            });
        }
        let data = indices
            .iter()
            .enumerate()
            .map(|(r, &i)| xv.data()[r * width + i])
            .collect();
        let value = Tensor::new(vec![rows], data)?;
        Ok(self.push(
            value,
            Op::Gather {
                x,
                indices: indices.to_vec(),
                width,
            },
        ))
    }

    /// Mean squared error against a constant target.
    pub fn mse_loss(&mut self, pred: NodeId, target: &Tensor) -> Result<NodeId> {
        let pv = self.value(pred);
        if pv.shape() != target.shape() {
            return Err(Error::ShapeMismatch {
                op: "mse_loss",
                lhs: pv.shape().to_vec(),
                rhs: target.shape().to_vec(),
            });
        }
        let n = pv.len() as f64;
        let loss = pv
            .data()
            .iter()
            .zip(target.data())
            .map(|(p, t)| (p - t) * (p - t))
            .sum::<f64>()
            / n;
        Ok(self.push(
            Tensor::scalar(loss),
            Op::Mse {
                pred,
                target: target.data().to_vec(),
            },
        ))
    }

    pub fn mean(&mut self, x: NodeId) -> NodeId {
        let xv = self.value(x);
        let m = xv.data().iter().sum::<f64>() / xv.len() as f64;
        self.push(Tensor::scalar(m), Op::Mean { x })
    }

    /// Reverse sweep from the scalar `loss`, overwriting every gradient in
    /// `params` (parameters the loss does not depend on end up zero).
    pub fn backward(&self, loss: NodeId, params: &mut ParamSet) -> Result<()> {
        self.sweep(loss, params).map(|_| ())
    }

    /// Like [`Graph::backward`], additionally returning `d loss / d input`
    /// for every input node that the loss depends on.
    pub fn backward_inputs(
        &self,
        loss: NodeId,
        params: &mut ParamSet,
    ) -> Result<Vec<(NodeId, Tensor)>> {
        let grads = self.sweep(loss, params)?;
        Ok(grads
            .into_iter()
            .enumerate()
            .filter_map(|(i, g)| {
                let g = g?;
                let shape = self.nodes[i].value.shape().to_vec();
                Some((NodeId(i), Tensor::new(shape, g).expect("gradient matches value shape")))
            })
            .collect())
    }

    fn sweep(&self, loss: NodeId, params: &mut ParamSet) -> Result<Vec<Option<Vec<f64>>>> {
        if self.nodes.is_empty() || loss.0 >= self.nodes.len() {
            return Err(Error::NoForward);
        }
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(Error::NonScalarLoss(lv.shape().to_vec()));
        }
        params.zero_grads();
        let mut grads: Vec<Option<Vec<f64>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if matches!(node.op, Op::Input) {
                continue;
            }
            let Some(dy) = grads[i].take() else { continue };
            match &node.op {
                Op::Input => unreachable!(),
                Op::Dense {
                    x,
                    w,
                    b,
                    rows,
                    inputs,
                    outputs,
                } => {
                    let (rows, inputs, outputs) = (*rows, *inputs, *outputs);
                    let xv = self.value(*x).data();
                    {
                        let db = params.grad_at_mut(*b);
                        for r in dy.chunks_exact(outputs) {
                            for (g, &d) in db.iter_mut().zip(r) {
                                *g += d;
                            }
                        }
                    }
                    kernels::matmul_at_b_acc(xv, &dy, params.grad_at_mut(*w), rows, inputs, outputs);
                    let dx = accumulate_slot(&mut grads, *x, rows * inputs);
                    kernels::matmul_a_bt_acc(
                        &dy,
                        params.value_at(*w).data(),
                        dx,
                        rows,
                        outputs,
                        inputs,
                    );
                }
                Op::Conv2d {
                    x,
                    w,
                    b,
                    geom,
                    filters,
                    cols,
                } => {
                    let n = geom.columns();
                    let plane = geom.out_h * geom.out_w;
                    let filters = *filters;
                    // [B, F, P] -> [F, B·P]
                    let mut flat = vec![0.0; filters * n];
                    for f in 0..filters {
                        for bi in 0..geom.batch {
                            flat[f * n + bi * plane..][..plane]
                                .copy_from_slice(&dy[(bi * filters + f) * plane..][..plane]);
                        }
                    }
                    {
                        let db = params.grad_at_mut(*b);
                        for (g, row) in db.iter_mut().zip(flat.chunks_exact(n)) {
                            *g += row.iter().sum::<f64>();
                        }
                    }
                    kernels::matmul_a_bt_acc(
                        &flat,
                        cols,
                        params.grad_at_mut(*w),
                        filters,
                        n,
                        geom.patch_len(),
                    );
                    let mut dcols = vec![0.0; geom.patch_len() * n];
                    kernels::matmul_at_b_acc(
                        params.value_at(*w).data(),
                        &flat,
                        &mut dcols,
                        filters,
                        geom.patch_len(),
                        n,
                    );
                    let len = self.value(*x).len();
                    let dx = accumulate_slot(&mut grads, *x, len);
                    kernels::col2im_acc(&dcols, geom, dx);
                }
                Op::MaxPool { x, argmax } => {
                    let len = self.value(*x).len();
                    let dx = accumulate_slot(&mut grads, *x, len);
                    for (&src, &d) in argmax.iter().zip(&dy) {
                        dx[src] += d;
                    }
                }
                Op::BatchNorm {
                    x,
                    gamma,
                    beta,
                    layout,
                    xhat,
                    inv_std,
                    train,
                } => {
                    let ChannelLayout {
                        outer,
                        channels,
                        inner,
                    } = *layout;
                    let at = |o: usize, c: usize| (o * channels + c) * inner;
                    let count = (outer * inner) as f64;
                    let g = params.value_at(*gamma).data().to_vec();
                    let mut dgamma = vec![0.0; channels];
                    let mut dbeta = vec![0.0; channels];
                    for o in 0..outer {
                        for c in 0..channels {
                            let base = at(o, c);
                            for k in base..base + inner {
                                dgamma[c] += dy[k] * xhat[k];
                                dbeta[c] += dy[k];
                            }
                        }
                    }
                    let len = xhat.len();
                    let dx = accumulate_slot(&mut grads, *x, len);
                    for c in 0..channels {
                        let scale = g[c] * inv_std[c];
                        if *train {
                            // d/dx of (x - mean)/std with batch statistics
                            let sum_d = dbeta[c];
                            let sum_dx = dgamma[c];
                            for o in 0..outer {
                                let base = at(o, c);
                                for k in base..base + inner {
                                    dx[k] += scale / count
                                        * (count * dy[k] - sum_d - xhat[k] * sum_dx);
                                }
                            }
                        } else {
                            for o in 0..outer {
                                let base = at(o, c);
                                for k in base..base + inner {
                                    dx[k] += scale * dy[k];
                                }
                            }
                        }
                    }
                    for (acc, v) in params.grad_at_mut(*gamma).iter_mut().zip(&dgamma) {
                        *acc += v;
                    }
                    for (acc, v) in params.grad_at_mut(*beta).iter_mut().zip(&dbeta) {
                        *acc += v;
                    }
                }
                Op::Relu { x } => {
                    let xv = self.value(*x).data();
                    let dx = accumulate_slot(&mut grads, *x, xv.len());
                    for ((g, &v), &d) in dx.iter_mut().zip(xv).zip(&dy) {
                        if v > 0.0 {
                            *g += d;
                        }
                    }
                }
                Op::Softmax { x, cols } => {
                    let y = node.value.data();
                    let dx = accumulate_slot(&mut grads, *x, y.len());
                    for ((yr, dr), gr) in y
                        .chunks_exact(*cols)
                        .zip(dy.chunks_exact(*cols))
                        .zip(dx.chunks_exact_mut(*cols))
                    {
                        let s: f64 = yr.iter().zip(dr).map(|(a, b)| a * b).sum();
                        for ((g, &yv), &d) in gr.iter_mut().zip(yr).zip(dr) {
                            *g += yv * (d - s);
                        }
                    }
                }
                Op::Concat {
                    inputs,
                    outer,
                    blocks,
                } => {
                    let total: usize = blocks.iter().sum();
                    let mut offset = 0;
                    for (&id, &blk) in inputs.iter().zip(blocks) {
                        let dx = accumulate_slot(&mut grads, id, outer * blk);
                        for o in 0..*outer {
                            let src = &dy[o * total + offset..][..blk];
                            for (g, &d) in dx[o * blk..(o + 1) * blk].iter_mut().zip(src) {
                                *g += d;
                            }
                        }
                        offset += blk;
                    }
                }
                Op::Reshape { x } => {
                    let dx = accumulate_slot(&mut grads, *x, dy.len());
                    for (g, &d) in dx.iter_mut().zip(&dy) {
                        *g += d;
                    }
                }
                Op::Gather { x, indices, width } => {
                    let dx = accumulate_slot(&mut grads, *x, indices.len() * width);
                    for (r, (&i, &d)) in indices.iter().zip(&dy).enumerate() {
                        dx[r * width + i] += d;
                    }
                }
                Op::Mse { pred, target } => {
                    let pv = self.value(*pred).data();
                    let n = pv.len() as f64;
                    let dx = accumulate_slot(&mut grads, *pred, pv.len());
                    for ((g, &p), &t) in dx.iter_mut().zip(pv).zip(target) {
                        *g += dy[0] * 2.0 * (p - t) / n;
                    }
                }
                Op::Mean { x } => {
                    let len = self.value(*x).len();
                    let dx = accumulate_slot(&mut grads, *x, len);
                    let share = dy[0] / len as f64;
                    for g in dx.iter_mut() {
                        *g += share;
                    }
                }
            }
        }
        Ok(grads)
    }
}

fn accumulate_slot(grads: &mut [Option<Vec<f64>>], id: NodeId, len: usize) -> &mut [f64] {
    grads[id.0].get_or_insert_with(|| vec![0.0; len])
}

/// Numerically stable in-place softmax of one row.
pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = math::exp(*v - max);
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensornet::{init_params, LayerSpec};
    use alloc::vec;

    fn dense_params(w: Tensor, b: Tensor) -> ParamSet {
        let mut p = ParamSet::new();
        p.push("fc.weight", w, true).unwrap();
        p.push("fc.bias", b, true).unwrap();
        p
    }

    fn conv_params(w: Tensor) -> ParamSet {
        let filters = w.shape()[0];
        let mut p = ParamSet::new();
        p.push("c.weight", w, true).unwrap();
        p.push("c.bias", Tensor::zeros(&[filters]), true).unwrap();
        p
    }

    #[test]
    fn dense_identity_and_hand_arithmetic() {
        let mut eye = Tensor::zeros(&[3, 3]);
        for i in 0..3 {
            eye.data_mut()[i * 4] = 1.0;
        }
        let p = dense_params(eye, Tensor::zeros(&[3]));
        let mut g = Graph::new();
        let x = g.input(Tensor::vector(vec![1.0, 2.0, 3.0]));
        let y = g.dense(&p, "fc", x).unwrap();
        assert_eq!(g.value(y).data(), &[1.0, 2.0, 3.0]);

        let p = dense_params(
            Tensor::new(vec![2, 1], vec![1.0, 1.0]).unwrap(),
            Tensor::scalar(0.5),
        );
        let x = g.input(Tensor::vector(vec![2.0, 3.0]));
        let y = g.dense(&p, "fc", x).unwrap();
        assert_eq!(g.value(y).data(), &[5.5]);
    }

    #[test]
    fn dense_shape_error_names_both_shapes() {
        let p = dense_params(Tensor::zeros(&[4, 2]), Tensor::zeros(&[2]));
        let mut g = Graph::new();
        let x = g.input(Tensor::zeros(&[3]));
        let err = g.dense(&p, "fc", x).unwrap_err();
        assert_eq!(
            err,
            Error::ShapeMismatch {
                op: "dense",
                lhs: vec![3],
                rhs: vec![4, 2]
            }
        );
        assert!(alloc::format!("{err}").contains("[3] vs [4, 2]"));
    }

    #[test]
    fn conv_sum_of_ones_and_shapes() {
        let p = conv_params(Tensor::filled(&[1, 1, 3, 3], 1.0));
        let mut g = Graph::new();
        let x = g.input(Tensor::filled(&[1, 3, 3], 1.0));
        let y = g.conv2d(&p, "c", x, 1, 0).unwrap();
        assert_eq!(g.value(y).shape(), &[1, 1, 1]);
        assert_eq!(g.value(y).data(), &[9.0]);

        let p = conv_params(Tensor::filled(&[1, 1, 2, 2], 1.0));
        let x = g.input(Tensor::filled(&[1, 4, 4], 1.0));
        let y = g.conv2d(&p, "c", x, 2, 0).unwrap();
        assert_eq!(g.value(y).shape(), &[1, 2, 2]);
    }

    #[test]
    fn conv_is_cross_correlation() {
        // kernel [[1,0],[0,0]] picks the top-left of each window unflipped
        let p = conv_params(Tensor::new(vec![1, 1, 2, 2], vec![1.0, 0.0, 0.0, 0.0]).unwrap());
        let mut g = Graph::new();
        let x = g.input(Tensor::new(vec![1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let y = g.conv2d(&p, "c", x, 1, 0).unwrap();
        assert_eq!(g.value(y).data(), &[1.0]);
    }

    #[test]
    fn conv_kernel_too_large() {
        let p = conv_params(Tensor::zeros(&[1, 1, 5, 5]));
        let mut g = Graph::new();
        let x = g.input(Tensor::zeros(&[1, 3, 3]));
        assert_eq!(
            g.conv2d(&p, "c", x, 1, 0).unwrap_err(),
            Error::KernelTooLarge {
                kernel: 5,
                padded: 3
            }
        );
        assert!(g.conv2d(&p, "c", x, 1, 1).is_ok());
    }

    #[test]
    fn maxpool_value_and_tie_break() {
        let mut g = Graph::new();
        let x = g.input(Tensor::new(vec![1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let y = g.maxpool2d(x, 2, 2).unwrap();
        assert_eq!(g.value(y).data(), &[4.0]);

        let x = g.input(Tensor::filled(&[1, 4, 4], 0.5));
        let y = g.maxpool2d(x, 2, 2).unwrap();
        let l = g.mean(y);
        let grads = g.backward_inputs(l, &mut ParamSet::new()).unwrap();
        let dx = &grads.iter().find(|(id, _)| *id == x).unwrap().1;
        let hot: Vec<usize> = (0..16).filter(|&i| dx.data()[i] != 0.0).collect();
        assert_eq!(hot, vec![0, 2, 8, 10]);
        assert!(hot.iter().all(|&i| dx.data()[i] == 0.25));
    }

    #[test]
    fn batchnorm_standardizes_in_train_mode() {
        let mut p = init_params(&[("bn", LayerSpec::BatchNorm { channels: 2 })], 0).unwrap();
        let data: Vec<f64> = (0..16).map(|i| (i * i) as f64 * 0.3 - 2.0).collect();
        let mut g = Graph::new();
        let x = g.input(Tensor::new(vec![2, 2, 2, 2], data).unwrap());
        let y = g.batchnorm(&p, "bn", x, Mode::Train).unwrap();
        let out = g.value(y).data();
        for c in 0..2 {
            let vals: Vec<f64> = (0..2)
                .flat_map(|b| out[(b * 2 + c) * 4..(b * 2 + c) * 4 + 4].iter().copied())
                .collect();
            let m = vals.iter().sum::<f64>() / 8.0;
            let v = vals.iter().map(|u| (u - m) * (u - m)).sum::<f64>() / 8.0;
            assert!(m.abs() < 1e-9);
            assert!((v - 1.0).abs() < 1e-6, "var {v}");
        }

        p.get_mut("bn.gamma").unwrap().data_mut().fill(2.0);
        p.get_mut("bn.beta").unwrap().data_mut().fill(3.0);
        let y = g.batchnorm(&p, "bn", x, Mode::Train).unwrap();
        let out = g.value(y).data();
        let m = out.iter().sum::<f64>() / 16.0;
        let sd = math::sqrt(out.iter().map(|u| (u - m) * (u - m)).sum::<f64>() / 16.0);
        assert!((m - 3.0).abs() < 1e-9);
        assert!((sd - 2.0).abs() < 1e-5);
    }

    #[test]
    fn batchnorm_running_stats_and_infer() {
        let mut p = init_params(&[("bn", LayerSpec::BatchNorm { channels: 1 })], 0).unwrap();
        let mut g = Graph::new();
        let x = g.input(Tensor::new(vec![1, 4], vec![1.0, 2.0, 3.0, 6.0]).unwrap().reshape(vec![4, 1]).unwrap());
        g.batchnorm(&p, "bn", x, Mode::Train).unwrap();
        // nothing changes until committed
        assert_eq!(p.get("bn.running_mean").unwrap().data(), &[0.0]);
        g.commit_running_stats(&mut p);
        assert!((p.get("bn.running_mean").unwrap().data()[0] - 0.3).abs() < 1e-12);
        // batch var = 3.5 -> 0.9 * 1 + 0.1 * 3.5
        assert!((p.get("bn.running_var").unwrap().data()[0] - 1.25).abs() < 1e-12);

        let y = g.batchnorm(&p, "bn", x, Mode::Infer).unwrap();
        let expected = (1.0 - 0.3) / math::sqrt(1.25 + BN_EPS);
        assert!((g.value(y).data()[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn batchnorm_single_element_channel_is_finite() {
        let p = init_params(&[("bn", LayerSpec::BatchNorm { channels: 3 })], 0).unwrap();
        let mut g = Graph::new();
        let x = g.input(Tensor::vector(vec![1.0, 2.0, 3.0]));
        let y = g.batchnorm(&p, "bn", x, Mode::Train).unwrap();
        assert!(g.value(y).is_finite());
    }

    #[test]
    fn relu_and_softmax() {
        let mut g = Graph::new();
        let x = g.input(Tensor::vector(vec![-1.0, 0.0, 2.0]));
        let r = g.relu(x);
        assert_eq!(g.value(r).data(), &[0.0, 0.0, 2.0]);

        let x = g.input(Tensor::vector(vec![0.0, 0.0, 0.0]));
        let s = g.softmax(x);
        for &v in g.value(s).data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }

        let x = g.input(Tensor::vector(vec![1000.0, 0.0]));
        let s = g.softmax(x);
        let v = g.value(s).data();
        assert!(g.value(s).is_finite());
        assert!((v[0] - 1.0).abs() < 1e-15 && v[1] < 1e-300);
    }

    #[test]
    fn relu_subgradient_at_zero_is_zero() {
        let mut g = Graph::new();
        let x = g.input(Tensor::vector(vec![0.0, 1.0]));
        let r = g.relu(x);
        let l = g.mean(r);
        let grads = g.backward_inputs(l, &mut ParamSet::new()).unwrap();
        assert_eq!(grads[0].1.data(), &[0.0, 0.5]);
    }

    #[test]
    fn mse_values() {
        let mut g = Graph::new();
        let a = g.input(Tensor::vector(vec![1.0, 2.0]));
        let l = g.mse_loss(a, &Tensor::vector(vec![1.0, 2.0])).unwrap();
        assert_eq!(g.value(l).item(), Some(0.0));
        let l = g.mse_loss(a, &Tensor::vector(vec![0.0, 0.0])).unwrap();
        assert_eq!(g.value(l).item(), Some(2.5));
        assert!(matches!(
            g.mse_loss(a, &Tensor::vector(vec![0.0])),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn backward_errors() {
        let g = Graph::new();
        let mut p = ParamSet::new();
        assert_eq!(g.backward(NodeId(0), &mut p), Err(Error::NoForward));
        let mut g = Graph::new();
        let x = g.input(Tensor::vector(vec![1.0, 2.0]));
        assert_eq!(g.backward(x, &mut p), Err(Error::NonScalarLoss(vec![2])));
    }

    #[test]
    fn unused_parameters_get_zero_grad() {
        let mut p = init_params(
            &[
                ("fc", LayerSpec::Dense { inputs: 2, outputs: 2 }),
                ("unused", LayerSpec::Dense { inputs: 2, outputs: 2 }),
            ],
            3,
        )
        .unwrap();
        p.get_mut("fc.weight").unwrap().data_mut()[0] = 0.0;
        for e in p.entries_mut() {
            e.grad.data_mut().fill(7.0);
        }
        let mut g = Graph::new();
        let x = g.input(Tensor::vector(vec![1.0, -1.0]));
        let y = g.dense(&p, "fc", x).unwrap();
        let l = g.mean(y);
        g.backward(l, &mut p).unwrap();
        assert!(p.grad("unused.weight").unwrap().data().iter().all(|&v| v == 0.0));
        assert!(p.grad("fc.bias").unwrap().data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn forward_is_deterministic() {
        let p = init_params(
            &[("c", LayerSpec::Conv2d { in_channels: 2, filters: 2, kernel: 3 })],
            9,
        )
        .unwrap();
        let x = Tensor::new(vec![2, 5, 5], (0..50).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
        let run = || {
            let mut g = Graph::new();
            let xi = g.input(x.clone());
            let y = g.conv2d(&p, "c", xi, 1, 1).unwrap();
            g.value(y).clone()
        };
        assert!(run().bit_eq(&run()));
    }
}
