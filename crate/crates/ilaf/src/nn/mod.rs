//! Small classifier architectures with a configurable feature/head split.
//!
//! A [`Model`] is an ordered list of [`LayerSpec`]s plus named parameter
//! tensors. [`Model::split`] decomposes it as `f = h ∘ g` at a layer index
//! `k`; the resulting [`SplitModel`] exposes mid-network features, losses,
//! and the gradients the attack and refinement stages need.

pub mod checkpoint;
pub mod dataset;
pub mod train;
pub mod zoo;

pub use dataset::{Dataset, DatasetPair};
pub use train::TrainStats;

use crate::error::{Error, Result};
use crate::tensor::{ReluMode, Tape, Tensor, TensorId};

/// One layer of a sequential classifier.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    Dense { in_dim: usize, out_dim: usize },
    Conv2d { in_c: usize, out_c: usize, kh: usize, kw: usize, stride: usize, same: bool },
    /// `linbp` selects the linear backward rule for this relu by default.
    Relu { linbp: bool },
    MaxPool2d { k: usize, stride: usize },
    Flatten,
}

impl LayerSpec {
    pub fn has_params(&self) -> bool {
        matches!(self, LayerSpec::Dense { .. } | LayerSpec::Conv2d { .. })
    }
}

/// A trained (or freshly initialized) classifier.
#[derive(Debug, Clone)]
pub struct Model {
    arch_id: String,
    seed: u64,
    layers: Vec<LayerSpec>,
    /// Named parameters in layer order: weight then bias per parametric layer.
    params: Vec<(String, Tensor)>,
    /// Per-sample input shape (without the batch dimension).
    input_shape: Vec<usize>,
    classes: usize,
    metadata: Option<TrainStats>,
}

impl Model {
    pub(crate) fn from_parts(
        arch_id: String,
        seed: u64,
        layers: Vec<LayerSpec>,
        params: Vec<(String, Tensor)>,
        input_shape: Vec<usize>,
        classes: usize,
    ) -> Self {
        Self {
            arch_id,
            seed,
            layers,
            params,
            input_shape,
            classes,
            metadata: None,
        }
    }

    pub fn arch_id(&self) -> &str {
        &self.arch_id
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn params(&self) -> &[(String, Tensor)] {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut Vec<(String, Tensor)> {
        &mut self.params
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn input_dim(&self) -> usize {
        self.input_shape.iter().product()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn metadata(&self) -> Option<&TrainStats> {
        self.metadata.as_ref()
    }

    pub(crate) fn set_metadata(&mut self, stats: TrainStats) {
        self.metadata = Some(stats);
    }

    /// A short id like `cnn-small:s1` for reports.
    pub fn model_id(&self) -> String {
        format!("{}:s{}", self.arch_id, self.seed)
    }

    /// FNV-1a over the raw parameter bytes; used to compare checkpoints.
    pub fn params_checksum(&self) -> u64 {
        let mut bytes = Vec::new();
        for (_, t) in &self.params {
            for v in t.data() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        crate::rng::fnv1a(&bytes)
    }

    /// Backward relu mode per layer index, with the last `linbp_last` relus
    /// forced to the linear rule.
    fn relu_modes(&self, linbp_last: usize) -> Vec<ReluMode> {
        let relu_idx: Vec<usize> = self
            .layers
            .iter()
            .enumerate()
            .filter_map(|(i, l)| matches!(l, LayerSpec::Relu { .. }).then_some(i))
            .collect();
        let cut = relu_idx.len().saturating_sub(linbp_last);
        let mut modes = vec![ReluMode::Standard; self.layers.len()];
        for (pos, &i) in relu_idx.iter().enumerate() {
            let flagged = matches!(self.layers[i], LayerSpec::Relu { linbp: true });
            modes[i] = if flagged || pos >= cut {
                ReluMode::Linear
            } else {
                ReluMode::Standard
            };
        }
        modes
    }

    pub fn relu_count(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| matches!(l, LayerSpec::Relu { .. }))
            .count()
    }

    /// Run layers `[from, to)` on the tape starting from `input`. Parameter
    /// leaf ids are appended to `param_ids` in params-table order.
    fn run_layers(
        &self,
        tape: &mut Tape,
        input: TensorId,
        from: usize,
        to: usize,
        params_grad: bool,
        modes: &[ReluMode],
        param_ids: &mut Vec<TensorId>,
    ) -> Result<TensorId> {
        let mut param_cursor = self
            .layers[..from]
            .iter()
            .filter(|l| l.has_params())
            .count()
            * 2;
        let mut cur = input;
        for (i, layer) in self.layers[from..to].iter().enumerate() {
            match layer {
                LayerSpec::Dense { .. } | LayerSpec::Conv2d { .. } => {
                    let mut w = self.params[param_cursor].1.clone();
                    let mut b = self.params[param_cursor + 1].1.clone();
                    param_cursor += 2;
                    if params_grad {
                        w = w.with_grad();
                        b = b.with_grad();
                    }
                    let wid = tape.leaf(w);
                    let bid = tape.leaf(b);
                    param_ids.push(wid);
                    param_ids.push(bid);
                    cur = match layer {
                        LayerSpec::Conv2d { stride, same, .. } => {
                            tape.conv2d(cur, wid, *stride, *same)?
                        }
                        _ => tape.matmul(cur, wid)?,
                    };
                    cur = tape.add(cur, bid)?;
                }
                LayerSpec::Relu { .. } => {
                    let abs = from + i;
                    cur = tape.relu_with_mode(cur, modes[abs])?;
                }
                LayerSpec::MaxPool2d { k, stride } => {
                    cur = tape.maxpool2d(cur, *k, *stride)?;
                }
                LayerSpec::Flatten => {
                    cur = tape.flatten(cur)?;
                }
            }
        }
        Ok(cur)
    }

    fn input_tensor(&self, xs: &[f32], batch: usize) -> Result<Tensor> {
        let mut shape = vec![batch];
        shape.extend_from_slice(&self.input_shape);
        Tensor::new(shape, xs.to_vec())
    }

    /// Logits for a batch of flattened inputs.
    pub fn forward_logits(&self, xs: &[f32], batch: usize) -> Result<Vec<f32>> {
        let mut tape = Tape::new();
        let x = tape.leaf(self.input_tensor(xs, batch)?);
        let modes = self.relu_modes(0);
        let out = self.run_layers(&mut tape, x, 0, self.layers.len(), false, &modes, &mut Vec::new())?;
        Ok(tape.tensor(out).data().to_vec())
    }

    /// Argmax prediction for a single input.
    pub fn predict(&self, x: &[f32]) -> Result<usize> {
        let logits = self.forward_logits(x, 1)?;
        Ok(argmax(&logits))
    }

    /// Mean cross-entropy over a batch, with parameter gradients when asked.
    /// Returns the tape plus the ids needed to read loss and gradients.
    pub(crate) fn loss_tape(
        &self,
        xs: &[f32],
        labels: &[usize],
        params_grad: bool,
        input_grad: bool,
    ) -> Result<(Tape, TensorId, Vec<TensorId>, TensorId)> {
        let mut tape = Tape::new();
        let mut input = self.input_tensor(xs, labels.len())?;
        if input_grad {
            input = input.with_grad();
        }
        let x = tape.leaf(input);
        let modes = self.relu_modes(0);
        let mut param_ids = Vec::new();
        let logits = self.run_layers(&mut tape, x, 0, self.layers.len(), params_grad, &modes, &mut param_ids)?;
        let loss = tape.softmax_ce(logits, labels)?;
        Ok((tape, x, param_ids, loss))
    }

    /// Decompose as `h ∘ g` at layer index `k` (g = layers [0,k)).
    pub fn split(&self, k: usize) -> Result<SplitModel<'_>> {
        if k == 0 || k >= self.layers.len() {
            return Err(Error::SplitOutOfRange {
                k,
                layers: self.layers.len(),
            });
        }
        // Probe the feature shape once with a zero input.
        let zeros = vec![0.0f32; self.input_dim()];
        let mut tape = Tape::new();
        let x = tape.leaf(self.input_tensor(&zeros, 1)?);
        let modes = self.relu_modes(0);
        let feat = self.run_layers(&mut tape, x, 0, k, false, &modes, &mut Vec::new())?;
        let feat_shape = tape.tensor(feat).shape().to_vec();
        Ok(SplitModel {
            model: self,
            k,
            feat_shape,
        })
    }
}

/// One forward evaluation of a split model on a single input.
#[derive(Debug, Clone)]
pub struct StepEval {
    pub loss: f32,
    pub loss_f64: f64,
    /// Flattened mid-network feature g(x), length m.
    pub feature: Vec<f32>,
    /// Input gradient of the prediction loss, when requested.
    pub grad: Option<Vec<f32>>,
}

/// A classifier decomposed as `f = h ∘ g` at split depth `k`.
#[derive(Debug, Clone)]
pub struct SplitModel<'a> {
    model: &'a Model,
    k: usize,
    /// Shape of the g output for batch 1 (unflattened).
    feat_shape: Vec<usize>,
}

impl<'a> SplitModel<'a> {
    pub fn model(&self) -> &Model {
        self.model
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Feature dimension m (g output, flattened).
    pub fn feature_dim(&self) -> usize {
        self.feat_shape.iter().product()
    }

    /// g(x) for a single input, flattened to length m.
    pub fn feature(&self, x: &[f32]) -> Result<Vec<f32>> {
        let mut tape = Tape::new();
        let xid = tape.leaf(self.model.input_tensor(x, 1)?);
        let modes = self.model.relu_modes(0);
        let feat = self
            .model
            .run_layers(&mut tape, xid, 0, self.k, false, &modes, &mut Vec::new())?;
        Ok(tape.tensor(feat).data().to_vec())
    }

    /// Prediction loss and mid-network feature in one pass; optionally the
    /// input gradient of the loss, with the last `linbp_last` relus linear
    /// during backward.
    pub fn eval(
        &self,
        x: &[f32],
        y: usize,
        linbp_last: usize,
        want_grad: bool,
    ) -> Result<StepEval> {
        let mut tape = Tape::new();
        let mut input = self.model.input_tensor(x, 1)?;
        if want_grad {
            input = input.with_grad();
        }
        let xid = tape.leaf(input);
        let modes = self.model.relu_modes(linbp_last);
        let feat = self
            .model
            .run_layers(&mut tape, xid, 0, self.k, false, &modes, &mut Vec::new())?;
        let logits =
            self.model
                .run_layers(&mut tape, feat, self.k, self.model.layers.len(), false, &modes, &mut Vec::new())?;
        let loss = tape.softmax_ce(logits, &[y])?;
        let feature = tape.tensor(feat).data().to_vec();
        let loss_f64 = tape.scalar_f64(loss);
        let loss_f32 = tape.tensor(loss).item();
        let grad = if want_grad {
            tape.backward(loss)?;
            Some(tape.grad(xid).expect("input gradient").to_vec())
        } else {
            None
        };
        Ok(StepEval {
            loss: loss_f32,
            loss_f64,
            feature,
            grad,
        })
    }

    /// Loss and feature, per the split contract: l = CE(h(g(x)), y).
    pub fn loss_and_feature(&self, x: &[f32], y: usize) -> Result<(f32, Vec<f32>)> {
        let e = self.eval(x, y, 0, false)?;
        Ok((e.loss, e.feature))
    }

    /// Forward through g only, then backward from the feature seeded with an
    /// upstream gradient computed from the feature value. Returns the feature
    /// and the input gradient of `seed·g(x)`.
    pub fn feature_grad_seeded(
        &self,
        x: &[f32],
        seed_fn: impl FnOnce(&[f32]) -> Vec<f32>,
    ) -> Result<(Vec<f32>, Vec<f32>)> {
        let mut tape = Tape::new();
        let xid = tape.leaf(self.model.input_tensor(x, 1)?.with_grad());
        let modes = self.model.relu_modes(0);
        let feat = self
            .model
            .run_layers(&mut tape, xid, 0, self.k, false, &modes, &mut Vec::new())?;
        let feature = tape.tensor(feat).data().to_vec();
        let seed = seed_fn(&feature);
        tape.backward_with_seed(feat, &seed)?;
        let grad = tape.grad(xid).expect("input gradient").to_vec();
        Ok((feature, grad))
    }

    /// Logits of the head h applied to a raw feature vector.
    pub fn head_logits(&self, h_feat: &[f32]) -> Result<Vec<f32>> {
        if h_feat.len() != self.feature_dim() {
            return Err(Error::ShapeMismatch {
                op: "head_logits",
                detail: format!("feature length {} vs m {}", h_feat.len(), self.feature_dim()),
            });
        }
        let mut tape = Tape::new();
        let t = Tensor::new(self.feat_shape.clone(), h_feat.to_vec())?;
        let fid = tape.leaf(t);
        let modes = self.model.relu_modes(0);
        let logits =
            self.model
                .run_layers(&mut tape, fid, self.k, self.model.layers.len(), false, &modes, &mut Vec::new())?;
        Ok(tape.tensor(logits).data().to_vec())
    }

    /// Prediction loss of the head on a raw (possibly perturbed) feature.
    pub fn head_loss(&self, h_feat: &[f32], y: usize) -> Result<f32> {
        let logits = self.head_logits(h_feat)?;
        let mut tape = Tape::new();
        let lid = tape.leaf(Tensor::new(vec![1, logits.len()], logits)?);
        let loss = tape.softmax_ce(lid, &[y])?;
        Ok(tape.tensor(loss).item())
    }
}

pub fn argmax(v: &[f32]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::zoo;

    #[test]
    fn build_is_seed_deterministic() {
        let a = zoo::build("mlp-2", 7).unwrap();
        let b = zoo::build("mlp-2", 7).unwrap();
        assert_eq!(a.params_checksum(), b.params_checksum());
        for ((_, ta), (_, tb)) in a.params().iter().zip(b.params()) {
            assert_eq!(ta.data(), tb.data());
        }
    }

    #[test]
    fn forward_zeros_gives_finite_logits() {
        let m = zoo::build("cnn-small", 1).unwrap();
        let logits = m.forward_logits(&vec![0.0; m.input_dim()], 1).unwrap();
        assert_eq!(logits.len(), m.classes());
        assert!(logits.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn zoo_models_have_pairwise_distinct_params() {
        let mut sums = Vec::new();
        for arch in zoo::arch_ids() {
            for seed in [0u64, 1] {
                sums.push(zoo::build(arch, seed).unwrap().params_checksum());
            }
        }
        assert_eq!(sums.len(), 8);
        for i in 0..sums.len() {
            for j in i + 1..sums.len() {
                assert_ne!(sums[i], sums[j], "models {i} and {j} share params");
            }
        }
    }

    #[test]
    fn split_recomposition_is_exact_for_every_k() {
        let mut rng = crate::rng::stream(41, &[]);
        for arch in zoo::arch_ids() {
            let m = zoo::build(arch, 3).unwrap();
            let full: Vec<Vec<f32>> = (0..4)
                .map(|_| {
                    (0..m.input_dim())
                        .map(|_| rand::Rng::random_range(&mut rng, 0.0..1.0))
                        .collect()
                })
                .collect();
            for k in 1..m.layers().len() {
                let split = m.split(k).unwrap();
                for x in &full {
                    let direct = m.forward_logits(x, 1).unwrap();
                    let feat = split.feature(x).unwrap();
                    let recomposed = split.head_logits(&feat).unwrap();
                    assert_eq!(direct, recomposed, "arch {arch} k {k}");
                }
            }
        }
    }

    #[test]
    fn loss_and_feature_matches_full_forward_ce() {
        let m = zoo::build("mlp-3", 5).unwrap();
        let split = m.split(zoo::arch("mlp-3").unwrap().default_split).unwrap();
        let x: Vec<f32> = (0..m.input_dim()).map(|i| (i % 7) as f32 / 7.0).collect();
        let (l, feat) = split.loss_and_feature(&x, 3).unwrap();
        assert_eq!(feat.len(), split.feature_dim());

        let (tape, _, _, loss) = m.loss_tape(&x, &[3], false, false).unwrap();
        assert_eq!(l, tape.tensor(loss).item());
    }

    #[test]
    fn split_k1_on_mlp2_is_first_hidden_width() {
        let m = zoo::build("mlp-2", 0).unwrap();
        let split = m.split(1).unwrap();
        assert_eq!(split.feature_dim(), 128);
    }

    #[test]
    fn split_rejects_out_of_range_k() {
        let m = zoo::build("mlp-2", 0).unwrap();
        assert!(matches!(m.split(0), Err(Error::SplitOutOfRange { .. })));
        assert!(matches!(
            m.split(m.layers().len()),
            Err(Error::SplitOutOfRange { .. })
        ));
    }

    #[test]
    fn feature_dim_is_constant_across_inputs() {
        let m = zoo::build("cnn-wide", 2).unwrap();
        let split = m.split(zoo::arch("cnn-wide").unwrap().default_split).unwrap();
        let mut rng = crate::rng::stream(1, &[]);
        let mut dims = std::collections::HashSet::new();
        for _ in 0..3 {
            let x: Vec<f32> = (0..m.input_dim())
                .map(|_| rand::Rng::random_range(&mut rng, 0.0..1.0))
                .collect();
            dims.insert(split.feature(&x).unwrap().len());
        }
        assert_eq!(dims.len(), 1);
    }

    #[test]
    fn uniform_head_loss_is_ln_classes() {
        // A feature of zeros through a zero-weight head gives uniform logits.
        let mut m = zoo::build("mlp-2", 0).unwrap();
        let n_params = m.params().len();
        for (_, t) in m.params_mut().iter_mut().take(n_params) {
            for v in t.data_mut() {
                *v = 0.0;
            }
        }
        let split = m.split(2).unwrap();
        let l = split.head_loss(&vec![0.0; split.feature_dim()], 0).unwrap();
        assert!((l - (m.classes() as f32).ln()).abs() < 1e-6);
    }
}
