//! Operation tape for reverse-mode differentiation.
//!
//! Nodes are appended in topological order during the forward pass; one
//! backward pass visits each node exactly once, in reverse. A tape is
//! single-owner and consumed by `backward` — a second backward errors.

use super::kernels::{self, Conv2dGeom};
use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a tensor living on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TensorId(usize);

/// Backward rule selection for relu nodes.
///
/// `Standard` multiplies the upstream gradient by `1{x > 0}`; `Linear`
/// passes it through unchanged (the forward pass is unaffected).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReluMode {
    #[default]
    Standard,
    Linear,
}

#[derive(Debug, Clone, Copy)]
enum Broadcast {
    None,
    /// [B,F] + [F]
    Row,
    /// [B,C,H,W] + [C]
    Channel,
}

enum Node {
    MatMul {
        a: usize,
        b: usize,
        out: usize,
    },
    Add {
        a: usize,
        b: usize,
        out: usize,
        bcast: Broadcast,
    },
    Conv2d {
        x: usize,
        w: usize,
        out: usize,
        geom: Conv2dGeom,
    },
    Relu {
        x: usize,
        out: usize,
        mode: ReluMode,
    },
    MaxPool2d {
        x: usize,
        out: usize,
        argmax: Vec<u32>,
    },
    Flatten {
        x: usize,
        out: usize,
    },
    SoftmaxCe {
        logits: usize,
        out: usize,
        labels: Vec<usize>,
        probs: Vec<f32>,
        loss_f64: f64,
    },
}

struct Slot {
    tensor: Tensor,
    /// Index into `nodes` of the op producing this slot, if any.
    producer: Option<usize>,
}

/// Records ops over tensors and replays them in reverse for gradients.
#[derive(Default)]
pub struct Tape {
    slots: Vec<Slot>,
    nodes: Vec<Node>,
    consumed: bool,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Insert an input tensor. Its `requires_grad` flag decides whether
    /// gradients flow back to it.
    pub fn leaf(&mut self, tensor: Tensor) -> TensorId {
        let id = self.slots.len();
        self.slots.push(Slot {
            tensor,
            producer: None,
        });
        TensorId(id)
    }

    pub fn tensor(&self, id: TensorId) -> &Tensor {
        &self.slots[id.0].tensor
    }

    /// Scalar value at f64 precision: for cross-entropy outputs this is the
    /// f64-accumulated loss before rounding to f32.
    pub fn scalar_f64(&self, id: TensorId) -> f64 {
        if let Some(n) = self.slots[id.0].producer {
            if let Node::SoftmaxCe { loss_f64, .. } = &self.nodes[n] {
                return *loss_f64;
            }
        }
        self.slots[id.0].tensor.item() as f64
    }

    /// Gradient of the slot after a backward pass.
    pub fn grad(&self, id: TensorId) -> Option<&[f32]> {
        self.slots[id.0].tensor.grad()
    }

    fn requires(&self, id: usize) -> bool {
        self.slots[id].tensor.requires_grad()
    }

    fn push(&mut self, mut tensor: Tensor, requires: bool, node: Option<Node>) -> TensorId {
        if requires {
            tensor = tensor.with_grad();
        }
        let id = self.slots.len();
        let producer = node.map(|n| {
            self.nodes.push(n);
            self.nodes.len() - 1
        });
        self.slots.push(Slot { tensor, producer });
        TensorId(id)
    }

    fn out_tensor(shape: Vec<usize>, data: Vec<f32>, op: &'static str) -> Result<Tensor> {
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { op });
        }
        Tensor::new(shape, data)
    }

    /// `[M,K] x [K,N] -> [M,N]`
    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (ta, tb) = (self.tensor(a), self.tensor(b));
        let (sa, sb) = (ta.shape(), tb.shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                detail: format!("{:?} x {:?}", sa, sb),
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0f32; m * n];
        kernels::matmul(ta.data(), tb.data(), m, k, n, &mut out);
        let t = Self::out_tensor(vec![m, n], out, "matmul")?;
        let req = self.requires(a.0) || self.requires(b.0);
        Ok(self.push(
            t,
            req,
            req.then_some(Node::MatMul {
                a: a.0,
                b: b.0,
                out: self.slots.len(),
            }),
        ))
    }

    /// Elementwise add, or bias broadcast ([B,F]+[F], [B,C,H,W]+[C]).
    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (ta, tb) = (self.tensor(a), self.tensor(b));
        let (sa, sb) = (ta.shape().to_vec(), tb.shape());
        let bcast = if sa == sb {
            Broadcast::None
        } else if sb.len() == 1 && sa.len() == 2 && sa[1] == sb[0] {
            Broadcast::Row
        } else if sb.len() == 1 && sa.len() == 4 && sa[1] == sb[0] {
            Broadcast::Channel
        } else {
            return Err(Error::ShapeMismatch {
                op: "add",
                detail: format!("{:?} + {:?}", sa, sb),
            });
        };
        let mut out = ta.data().to_vec();
        match bcast {
            Broadcast::None => {
                for (o, &v) in out.iter_mut().zip(tb.data()) {
                    *o += v;
                }
            }
            Broadcast::Row => {
                let f = sa[1];
                for (i, o) in out.iter_mut().enumerate() {
                    *o += tb.data()[i % f];
                }
            }
            Broadcast::Channel => {
                let hw = sa[2] * sa[3];
                for (i, o) in out.iter_mut().enumerate() {
                    *o += tb.data()[(i / hw) % sa[1]];
                }
            }
        }
        let t = Self::out_tensor(sa, out, "add")?;
        let req = self.requires(a.0) || self.requires(b.0);
        Ok(self.push(
            t,
            req,
            req.then_some(Node::Add {
                a: a.0,
                b: b.0,
                out: self.slots.len(),
                bcast,
            }),
        ))
    }

    /// Direct convolution; stride 1 or 2, valid (`same = false`) or same padding.
    pub fn conv2d(&mut self, x: TensorId, w: TensorId, stride: usize, same: bool) -> Result<TensorId> {
        if !(1..=2).contains(&stride) {
            return Err(Error::InvalidConfig(format!(
                "conv2d stride must be 1 or 2, got {stride}"
            )));
        }
        let (tx, tw) = (self.tensor(x), self.tensor(w));
        let (sx, sw) = (tx.shape(), tw.shape());
        if sx.len() != 4 || sw.len() != 4 || sx[1] != sw[1] || (!same && (sw[2] > sx[2] || sw[3] > sx[3])) {
            return Err(Error::ShapeMismatch {
                op: "conv2d",
                detail: format!("input {:?}, weights {:?}", sx, sw),
            });
        }
        let geom = Conv2dGeom::new(sx[0], sx[1], sx[2], sx[3], sw[0], sw[2], sw[3], stride, same);
        let mut out = vec![0.0f32; geom.batch * geom.out_c * geom.out_h * geom.out_w];
        kernels::conv2d(tx.data(), tw.data(), &geom, &mut out);
        let t = Self::out_tensor(
            vec![geom.batch, geom.out_c, geom.out_h, geom.out_w],
            out,
            "conv2d",
        )?;
        let req = self.requires(x.0) || self.requires(w.0);
        Ok(self.push(
            t,
            req,
            req.then_some(Node::Conv2d {
                x: x.0,
                w: w.0,
                out: self.slots.len(),
                geom,
            }),
        ))
    }

    pub fn relu(&mut self, x: TensorId) -> Result<TensorId> {
        self.relu_with_mode(x, ReluMode::Standard)
    }

    /// Relu with an explicit backward mode (see [`ReluMode`]).
    pub fn relu_with_mode(&mut self, x: TensorId, mode: ReluMode) -> Result<TensorId> {
        let tx = self.tensor(x);
        let out: Vec<f32> = tx.data().iter().map(|&v| v.max(0.0)).collect();
        let t = Self::out_tensor(tx.shape().to_vec(), out, "relu")?;
        let req = self.requires(x.0);
        Ok(self.push(
            t,
            req,
            req.then_some(Node::Relu {
                x: x.0,
                out: self.slots.len(),
                mode,
            }),
        ))
    }

    /// Switch the backward rule of an existing relu node.
    pub fn set_relu_mode(&mut self, id: TensorId, mode: ReluMode) -> Result<()> {
        let producer = self.slots[id.0].producer.ok_or(Error::NotRelu)?;
        match &mut self.nodes[producer] {
            Node::Relu { mode: m, .. } => {
                *m = mode;
                Ok(())
            }
            _ => Err(Error::NotRelu),
        }
    }

    /// 2-D max pooling over [B,C,H,W].
    pub fn maxpool2d(&mut self, x: TensorId, k: usize, stride: usize) -> Result<TensorId> {
        let tx = self.tensor(x);
        let s = tx.shape();
        if s.len() != 4 || s[2] < k || s[3] < k || k == 0 || stride == 0 {
            return Err(Error::ShapeMismatch {
                op: "maxpool2d",
                detail: format!("input {:?}, k={k}, stride={stride}", s),
            });
        }
        let out_h = (s[2] - k) / stride + 1;
        let out_w = (s[3] - k) / stride + 1;
        let mut out = vec![0.0f32; s[0] * s[1] * out_h * out_w];
        let mut argmax = Vec::new();
        kernels::maxpool2d(tx.data(), s[0], s[1], s[2], s[3], k, stride, &mut out, &mut argmax);
        let t = Self::out_tensor(vec![s[0], s[1], out_h, out_w], out, "maxpool2d")?;
        let req = self.requires(x.0);
        Ok(self.push(
            t,
            req,
            req.then_some(Node::MaxPool2d {
                x: x.0,
                out: self.slots.len(),
                argmax,
            }),
        ))
    }

    /// [B, ...] -> [B, prod(...)]
    pub fn flatten(&mut self, x: TensorId) -> Result<TensorId> {
        let tx = self.tensor(x);
        let s = tx.shape();
        if s.is_empty() {
            return Err(Error::ShapeMismatch {
                op: "flatten",
                detail: "rank-0 input".into(),
            });
        }
        let rest: usize = s[1..].iter().product();
        let t = Tensor::new(vec![s[0], rest], tx.data().to_vec())?;
        let req = self.requires(x.0);
        Ok(self.push(
            t,
            req,
            req.then_some(Node::Flatten {
                x: x.0,
                out: self.slots.len(),
            }),
        ))
    }

    /// Mean softmax cross-entropy over a batch of logit rows; returns a scalar.
    pub fn softmax_ce(&mut self, logits: TensorId, labels: &[usize]) -> Result<TensorId> {
        let tl = self.tensor(logits);
        let s = tl.shape();
        let (batch, classes) = match s.len() {
            1 => (1, s[0]),
            2 => (s[0], s[1]),
            _ => {
                return Err(Error::ShapeMismatch {
                    op: "softmax_ce",
                    detail: format!("logits rank {} unsupported", s.len()),
                })
            }
        };
        if labels.len() != batch || labels.iter().any(|&y| y >= classes) {
            return Err(Error::ShapeMismatch {
                op: "softmax_ce",
                detail: format!("{} logit rows of {} classes, labels {:?}", batch, classes, labels),
            });
        }
        let (loss, probs) = kernels::softmax_ce(tl.data(), labels, classes);
        if !loss.is_finite() {
            return Err(Error::NonFinite { op: "softmax_ce" });
        }
        let t = Tensor::new(vec![1], vec![loss as f32])?;
        let req = self.requires(logits.0);
        Ok(self.push(
            t,
            req,
            req.then_some(Node::SoftmaxCe {
                logits: logits.0,
                out: self.slots.len(),
                labels: labels.to_vec(),
                probs,
                loss_f64: loss,
            }),
        ))
    }

    /// Backward from a scalar loss; every slot with `requires_grad` receives
    /// its gradient.
    pub fn backward(&mut self, loss: TensorId) -> Result<()> {
        if self.tensor(loss).numel() != 1 {
            return Err(Error::ShapeMismatch {
                op: "backward",
                detail: format!("loss has shape {:?}, expected a scalar", self.tensor(loss).shape()),
            });
        }
        self.backward_with_seed(loss, &[1.0])
    }

    /// Backward seeding an arbitrary output with an upstream gradient; used
    /// where the objective is an affine function of that output.
    pub fn backward_with_seed(&mut self, out: TensorId, seed: &[f32]) -> Result<()> {
        if self.consumed {
            return Err(Error::TapeConsumed);
        }
        if !self.requires(out.0) {
            return Err(Error::DetachedBackward);
        }
        if seed.len() != self.tensor(out).numel() {
            return Err(Error::ShapeMismatch {
                op: "backward",
                detail: format!(
                    "seed length {} vs output numel {}",
                    seed.len(),
                    self.tensor(out).numel()
                ),
            });
        }
        self.consumed = true;

        let mut grads: Vec<Option<Vec<f32>>> = (0..self.slots.len()).map(|_| None).collect();
        grads[out.0] = Some(seed.to_vec());

        for node in self.nodes.iter().rev() {
            match node {
                Node::MatMul { a, b, out } => {
                    let Some(g) = grads[*out].take() else { continue };
                    let (m, k) = (self.slots[*a].tensor.shape()[0], self.slots[*a].tensor.shape()[1]);
                    let n = self.slots[*b].tensor.shape()[1];
                    if self.slots[*a].tensor.requires_grad() {
                        let da = grads[*a].get_or_insert_with(|| vec![0.0; m * k]);
                        kernels::matmul_grad_a(&g, self.slots[*b].tensor.data(), m, k, n, da);
                    }
                    if self.slots[*b].tensor.requires_grad() {
                        let db = grads[*b].get_or_insert_with(|| vec![0.0; k * n]);
                        kernels::matmul_grad_b(self.slots[*a].tensor.data(), &g, m, k, n, db);
                    }
                }
                Node::Add { a, b, out, bcast } => {
                    let Some(g) = grads[*out].take() else { continue };
                    if self.slots[*a].tensor.requires_grad() {
                        let da = grads[*a].get_or_insert_with(|| vec![0.0; g.len()]);
                        for (d, &v) in da.iter_mut().zip(&g) {
                            *d += v;
                        }
                    }
                    if self.slots[*b].tensor.requires_grad() {
                        let blen = self.slots[*b].tensor.numel();
                        let db = grads[*b].get_or_insert_with(|| vec![0.0; blen]);
                        match bcast {
                            Broadcast::None => {
                                for (d, &v) in db.iter_mut().zip(&g) {
                                    *d += v;
                                }
                            }
                            Broadcast::Row => {
                                let mut acc = vec![0.0f64; blen];
                                for (i, &v) in g.iter().enumerate() {
                                    acc[i % blen] += v as f64;
                                }
                                for (d, &v) in db.iter_mut().zip(&acc) {
                                    *d += v as f32;
                                }
                            }
                            Broadcast::Channel => {
                                let s = self.slots[*a].tensor.shape();
                                let hw = s[2] * s[3];
                                let mut acc = vec![0.0f64; blen];
                                for (i, &v) in g.iter().enumerate() {
                                    acc[(i / hw) % s[1]] += v as f64;
                                }
                                for (d, &v) in db.iter_mut().zip(&acc) {
                                    *d += v as f32;
                                }
                            }
                        }
                    }
                }
                Node::Conv2d { x, w, out, geom } => {
                    let Some(g) = grads[*out].take() else { continue };
                    let xreq = self.slots[*x].tensor.requires_grad();
                    let wreq = self.slots[*w].tensor.requires_grad();
                    let xn = self.slots[*x].tensor.numel();
                    let wn = self.slots[*w].tensor.numel();
                    let mut dx = if xreq {
                        grads[*x].take().unwrap_or_else(|| vec![0.0; xn])
                    } else {
                        vec![0.0; xn]
                    };
                    let mut dw = if wreq {
                        grads[*w].take().unwrap_or_else(|| vec![0.0; wn])
                    } else {
                        vec![0.0; wn]
                    };
                    kernels::conv2d_grad(
                        self.slots[*x].tensor.data(),
                        self.slots[*w].tensor.data(),
                        &g,
                        geom,
                        &mut dx,
                        &mut dw,
                    );
                    if xreq {
                        grads[*x] = Some(dx);
                    }
                    if wreq {
                        grads[*w] = Some(dw);
                    }
                }
                Node::Relu { x, out, mode } => {
                    let Some(g) = grads[*out].take() else { continue };
                    if !self.slots[*x].tensor.requires_grad() {
                        continue;
                    }
                    let xd = self.slots[*x].tensor.data();
                    let dx = grads[*x].get_or_insert_with(|| vec![0.0; xd.len()]);
                    match mode {
                        ReluMode::Standard => {
                            for i in 0..xd.len() {
                                if xd[i] > 0.0 {
                                    dx[i] += g[i];
                                }
                            }
                        }
                        ReluMode::Linear => {
                            for (d, &v) in dx.iter_mut().zip(&g) {
                                *d += v;
                            }
                        }
                    }
                }
                Node::MaxPool2d { x, out, argmax } => {
                    let Some(g) = grads[*out].take() else { continue };
                    if !self.slots[*x].tensor.requires_grad() {
                        continue;
                    }
                    let xn = self.slots[*x].tensor.numel();
                    let dx = grads[*x].get_or_insert_with(|| vec![0.0; xn]);
                    for (i, &src) in argmax.iter().enumerate() {
                        dx[src as usize] += g[i];
                    }
                }
                Node::Flatten { x, out } => {
                    let Some(g) = grads[*out].take() else { continue };
                    if !self.slots[*x].tensor.requires_grad() {
                        continue;
                    }
                    let dx = grads[*x].get_or_insert_with(|| vec![0.0; g.len()]);
                    for (d, &v) in dx.iter_mut().zip(&g) {
                        *d += v;
                    }
                }
                Node::SoftmaxCe {
                    logits,
                    out,
                    labels,
                    probs,
                    ..
                } => {
                    let Some(g) = grads[*out].take() else { continue };
                    if !self.slots[*logits].tensor.requires_grad() {
                        continue;
                    }
                    let scale = g[0] / labels.len() as f32;
                    let classes = probs.len() / labels.len();
                    let dl = grads[*logits].get_or_insert_with(|| vec![0.0; probs.len()]);
                    for (b, &y) in labels.iter().enumerate() {
                        for j in 0..classes {
                            let onehot = if j == y { 1.0 } else { 0.0 };
                            dl[b * classes + j] += (probs[b * classes + j] - onehot) * scale;
                        }
                    }
                }
            }
        }

        for (slot, grad) in self.slots.iter_mut().zip(grads) {
            if slot.tensor.requires_grad() {
                if let Some(g) = grad {
                    slot.tensor.set_grad(g);
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
    }

    #[test]
    fn matmul_identity_passes_vector_through() {
        let mut tape = Tape::new();
        let eye = tape.leaf(
            Tensor::new(vec![3, 3], vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]).unwrap(),
        );
        let v = tape.leaf(Tensor::new(vec![3, 1], vec![2.5, -1.0, 0.25]).unwrap());
        let out = tape.matmul(eye, v).unwrap();
        assert_eq!(tape.tensor(out).data(), &[2.5, -1.0, 0.25]);
    }

    #[test]
    fn relu_matches_definition() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::new(vec![3], vec![-1.0, 0.0, 2.0]).unwrap());
        let out = tape.relu(x).unwrap();
        assert_eq!(tape.tensor(out).data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn softmax_ce_uniform_logits_is_ln2() {
        let mut tape = Tape::new();
        let logits = tape.leaf(Tensor::new(vec![2], vec![0.0, 0.0]).unwrap());
        let loss = tape.softmax_ce(logits, &[0]).unwrap();
        assert!((tape.scalar_f64(loss) - std::f64::consts::LN_2).abs() < 1e-7);
    }

    #[test]
    fn gradient_of_linear_form_is_the_weight_vector() {
        let mut rng = crate::rng::stream(11, &[]);
        let w: Vec<f32> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x: Vec<f32> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut tape = Tape::new();
        let xid = tape.leaf(Tensor::new(vec![1, 8], x).unwrap().with_grad());
        let wid = tape.leaf(Tensor::new(vec![8, 1], w.clone()).unwrap());
        let out = tape.matmul(xid, wid).unwrap();
        tape.backward(out).unwrap();
        let g = tape.grad(xid).unwrap();
        for (gi, wi) in g.iter().zip(&w) {
            assert!((gi - wi).abs() < 1e-6);
        }
    }

    #[test]
    fn relu_gradient_is_zero_on_flat_region() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::new(vec![1], vec![-0.5]).unwrap().with_grad());
        let y = tape.relu(x).unwrap();
        tape.backward_with_seed(y, &[3.0]).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[0.0]);
    }

    #[test]
    fn linear_mode_relu_passes_upstream_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::new(vec![1], vec![-0.5]).unwrap().with_grad());
        let y = tape.relu_with_mode(x, ReluMode::Linear).unwrap();
        tape.backward_with_seed(y, &[3.0]).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[3.0]);
    }

    #[test]
    fn set_relu_mode_rejects_non_relu_nodes() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::new(vec![1], vec![0.5]).unwrap().with_grad());
        let y = tape.relu(x).unwrap();
        assert!(tape.set_relu_mode(y, ReluMode::Linear).is_ok());
        assert!(matches!(tape.set_relu_mode(x, ReluMode::Linear), Err(Error::NotRelu)));
        let mut tape2 = Tape::new();
        let a = tape2.leaf(Tensor::new(vec![1, 1], vec![1.0]).unwrap().with_grad());
        let b = tape2.leaf(Tensor::new(vec![1, 1], vec![1.0]).unwrap());
        let c = tape2.matmul(a, b).unwrap();
        assert!(matches!(tape2.set_relu_mode(c, ReluMode::Linear), Err(Error::NotRelu)));
    }

    #[test]
    fn double_backward_is_rejected() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::new(vec![1], vec![1.0]).unwrap().with_grad());
        let y = tape.relu(x).unwrap();
        tape.backward(y).unwrap();
        assert!(matches!(tape.backward(y), Err(Error::TapeConsumed)));
    }

    #[test]
    fn backward_on_detached_tensor_is_rejected() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::new(vec![1], vec![1.0]).unwrap());
        let y = tape.relu(x).unwrap();
        assert!(matches!(tape.backward(y), Err(Error::DetachedBackward)));
    }

    #[test]
    fn overflow_in_op_surfaces_as_non_finite() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::new(vec![1, 1], vec![3.0e38]).unwrap());
        let b = tape.leaf(Tensor::new(vec![1, 1], vec![3.0e38]).unwrap());
        assert!(matches!(tape.matmul(a, b), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::new(vec![2, 3], vec![0.0; 6]).unwrap());
        let b = tape.leaf(Tensor::new(vec![2, 3], vec![0.0; 6]).unwrap());
        assert!(matches!(tape.matmul(a, b), Err(Error::ShapeMismatch { .. })));
        let c = tape.leaf(Tensor::new(vec![4], vec![0.0; 4]).unwrap());
        assert!(matches!(tape.add(a, c), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn forward_is_bit_identical_across_runs() {
        let mut rng = crate::rng::stream(3, &[]);
        let x: Vec<f32> = (0..24).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w: Vec<f32> = (0..24 * 5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let run = || {
            let mut tape = Tape::new();
            let xi = tape.leaf(Tensor::new(vec![1, 24], x.clone()).unwrap());
            let wi = tape.leaf(Tensor::new(vec![24, 5], w.clone()).unwrap());
            let h = tape.matmul(xi, wi).unwrap();
            let r = tape.relu(h).unwrap();
            tape.tensor(r).data().to_vec()
        };
        let a = run();
        let b = run();
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn backward_is_linear_in_the_loss() {
        // grad of (l1 + l2) == grad of l1 + grad of l2, evaluated as two
        // separate single-loss tapes plus one seeded joint pass.
        let mut rng = crate::rng::stream(5, &[]);
        let x: Vec<f32> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w1: Vec<f32> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w2: Vec<f32> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();

        let single = |w: &[f32]| {
            let mut tape = Tape::new();
            let xi = tape.leaf(Tensor::new(vec![1, 6], x.clone()).unwrap().with_grad());
            let wi = tape.leaf(Tensor::new(vec![6, 1], w.to_vec()).unwrap());
            let l = tape.matmul(xi, wi).unwrap();
            tape.backward(l).unwrap();
            tape.grad(xi).unwrap().to_vec()
        };
        let g1 = single(&w1);
        let g2 = single(&w2);

        let mut tape = Tape::new();
        let xi = tape.leaf(Tensor::new(vec![1, 6], x.clone()).unwrap().with_grad());
        let wsum: Vec<f32> = w1.iter().zip(&w2).map(|(a, b)| a + b).collect();
        let wi = tape.leaf(Tensor::new(vec![6, 1], wsum).unwrap());
        let l = tape.matmul(xi, wi).unwrap();
        tape.backward(l).unwrap();
        let gsum = tape.grad(xi).unwrap();
        for i in 0..6 {
            assert!(rel_err(gsum[i] as f64, (g1[i] + g2[i]) as f64) < 1e-5);
        }
    }

    // Finite-difference oracle for a 2-layer relu net, with an independent
    // f64 forward implementation.
    fn net_loss_f64(x: &[f32], w1: &[f32], b1: &[f32], w2: &[f32], b2: &[f32], y: usize) -> f64 {
        let (d_in, d_h, d_out) = (x.len(), b1.len(), b2.len());
        let mut h = vec![0.0f64; d_h];
        for j in 0..d_h {
            let mut acc = b1[j] as f64;
            for i in 0..d_in {
                acc += x[i] as f64 * w1[i * d_h + j] as f64;
            }
            h[j] = acc.max(0.0);
        }
        let mut logits = vec![0.0f64; d_out];
        for j in 0..d_out {
            let mut acc = b2[j] as f64;
            for (i, &hi) in h.iter().enumerate() {
                acc += hi * w2[i * d_out + j] as f64;
            }
            logits[j] = acc;
        }
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = logits.iter().map(|v| (v - max).exp()).sum();
        sum.ln() - (logits[y] - max)
    }

    #[test]
    fn input_gradient_matches_central_finite_differences() {
        let mut rng = crate::rng::stream(17, &[]);
        let (d_in, d_h, d_out) = (8, 16, 3);
        for trial in 0..5u64 {
            let mut draw = |n: usize| -> Vec<f32> {
                (0..n).map(|_| rng.random_range(-0.8..0.8)).collect()
            };
            let x = draw(d_in);
            let w1 = draw(d_in * d_h);
            let b1 = draw(d_h);
            let w2 = draw(d_h * d_out);
            let b2 = draw(d_out);
            let y = (trial % d_out as u64) as usize;

            let mut tape = Tape::new();
            let xi = tape.leaf(Tensor::new(vec![1, d_in], x.clone()).unwrap().with_grad());
            let w1i = tape.leaf(Tensor::new(vec![d_in, d_h], w1.clone()).unwrap());
            let b1i = tape.leaf(Tensor::new(vec![d_h], b1.clone()).unwrap());
            let w2i = tape.leaf(Tensor::new(vec![d_h, d_out], w2.clone()).unwrap());
            let b2i = tape.leaf(Tensor::new(vec![d_out], b2.clone()).unwrap());
            let h = tape.matmul(xi, w1i).unwrap();
            let h = tape.add(h, b1i).unwrap();
            let h = tape.relu(h).unwrap();
            let o = tape.matmul(h, w2i).unwrap();
            let o = tape.add(o, b2i).unwrap();
            let l = tape.softmax_ce(o, &[y]).unwrap();
            tape.backward(l).unwrap();
            let analytic = tape.grad(xi).unwrap().to_vec();

            let h_step = 1e-3f32;
            let mut max_err = 0.0f64;
            for i in 0..d_in {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i] += h_step;
                xm[i] -= h_step;
                let fd = (net_loss_f64(&xp, &w1, &b1, &w2, &b2, y)
                    - net_loss_f64(&xm, &w1, &b1, &w2, &b2, y))
                    / (2.0 * h_step as f64);
                max_err = max_err.max(rel_err(analytic[i] as f64, fd));
            }
            assert!(max_err < 1e-3, "max rel err {max_err} on trial {trial}");
        }
    }

    #[test]
    fn linear_mode_network_matches_explicit_linearized_backward() {
        // With every relu in linear backward mode, the input gradient must
        // equal W1 (W2 (softmax - onehot)) computed by hand from the true
        // forward probabilities.
        let mut rng = crate::rng::stream(23, &[]);
        let (d_in, d_h, d_out) = (6, 10, 4);
        let x: Vec<f32> = (0..d_in).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w1: Vec<f32> = (0..d_in * d_h).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w2: Vec<f32> = (0..d_h * d_out).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y = 2usize;

        let mut tape = Tape::new();
        let xi = tape.leaf(Tensor::new(vec![1, d_in], x.clone()).unwrap().with_grad());
        let w1i = tape.leaf(Tensor::new(vec![d_in, d_h], w1.clone()).unwrap());
        let w2i = tape.leaf(Tensor::new(vec![d_h, d_out], w2.clone()).unwrap());
        let h = tape.matmul(xi, w1i).unwrap();
        let hr = tape.relu_with_mode(h, ReluMode::Linear).unwrap();
        let o = tape.matmul(hr, w2i).unwrap();
        let l = tape.softmax_ce(o, &[y]).unwrap();
        let logits = tape.tensor(o).data().to_vec();
        tape.backward(l).unwrap();
        let engine = tape.grad(xi).unwrap().to_vec();

        // explicit linearized chain in f64
        let maxv = logits.iter().cloned().fold(f32::NEG_INFINITY, f32::max) as f64;
        let exps: Vec<f64> = logits.iter().map(|&v| ((v as f64) - maxv).exp()).collect();
        let sum: f64 = exps.iter().sum();
        let mut dlogits: Vec<f64> = exps.iter().map(|e| e / sum).collect();
        dlogits[y] -= 1.0;
        let mut dh = vec![0.0f64; d_h];
        for i in 0..d_h {
            for j in 0..d_out {
                dh[i] += w2[i * d_out + j] as f64 * dlogits[j];
            }
        }
        for i in 0..d_in {
            let mut dx = 0.0f64;
            for j in 0..d_h {
                dx += w1[i * d_h + j] as f64 * dh[j];
            }
            assert!(rel_err(engine[i] as f64, dx) < 1e-4);
        }
    }
}
