//! The model zoo: four small architectures for 16x16 grayscale inputs,
//! each with a pinned default split depth (the mid-network relu output).

use super::{LayerSpec, Model};
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use rand::Rng;

/// Image side length of the built-in task.
pub const IMAGE_SIDE: usize = 16;
/// Frozen quality gate for trained zoo models (test accuracy).
pub const MIN_TEST_ACCURACY: f32 = 0.90;
/// Number of classes of the built-in task.
pub const CLASSES: usize = 10;

/// Registry entry for one architecture.
pub struct ArchSpec {
    pub id: &'static str,
    /// Default split depth k (g = layers [0, k)).
    pub default_split: usize,
    pub lr: f32,
    pub epochs: usize,
    pub batch: usize,
}

const ARCHS: [ArchSpec; 4] = [
    ArchSpec { id: "mlp-2", default_split: 2, lr: 0.02, epochs: 70, batch: 32 },
    ArchSpec { id: "mlp-3", default_split: 4, lr: 0.005, epochs: 180, batch: 32 },
    ArchSpec { id: "cnn-small", default_split: 2, lr: 0.03, epochs: 16, batch: 32 },
    ArchSpec { id: "cnn-wide", default_split: 2, lr: 0.02, epochs: 28, batch: 32 },
];

pub fn arch_ids() -> [&'static str; 4] {
    ["mlp-2", "mlp-3", "cnn-small", "cnn-wide"]
}

pub fn arch(id: &str) -> Result<&'static ArchSpec> {
    ARCHS
        .iter()
        .find(|a| a.id == id)
        .ok_or_else(|| Error::UnknownArch(id.to_string()))
}

fn layers_of(id: &str) -> Result<(Vec<LayerSpec>, Vec<usize>)> {
    let n = IMAGE_SIDE * IMAGE_SIDE;
    let spec = match id {
        "mlp-2" => (
            vec![
                LayerSpec::Dense { in_dim: n, out_dim: 128 },
                LayerSpec::Relu { linbp: false },
                LayerSpec::Dense { in_dim: 128, out_dim: CLASSES },
            ],
            vec![n],
        ),
        "mlp-3" => (
            vec![
                LayerSpec::Dense { in_dim: n, out_dim: 128 },
                LayerSpec::Relu { linbp: false },
                LayerSpec::Dense { in_dim: 128, out_dim: 64 },
                LayerSpec::Relu { linbp: false },
                LayerSpec::Dense { in_dim: 64, out_dim: CLASSES },
            ],
            vec![n],
        ),
        "cnn-small" => (
            vec![
                LayerSpec::Conv2d { in_c: 1, out_c: 8, kh: 3, kw: 3, stride: 1, same: true },
                LayerSpec::Relu { linbp: false },
                LayerSpec::MaxPool2d { k: 2, stride: 2 },
                LayerSpec::Conv2d { in_c: 8, out_c: 16, kh: 3, kw: 3, stride: 1, same: true },
                LayerSpec::Relu { linbp: false },
                LayerSpec::MaxPool2d { k: 2, stride: 2 },
                LayerSpec::Flatten,
                LayerSpec::Dense { in_dim: 16 * 4 * 4, out_dim: CLASSES },
            ],
            vec![1, IMAGE_SIDE, IMAGE_SIDE],
        ),
        "cnn-wide" => (
            vec![
                LayerSpec::Conv2d { in_c: 1, out_c: 12, kh: 3, kw: 3, stride: 1, same: true },
                LayerSpec::Relu { linbp: false },
                LayerSpec::MaxPool2d { k: 2, stride: 2 },
                LayerSpec::Conv2d { in_c: 12, out_c: 24, kh: 3, kw: 3, stride: 1, same: true },
                LayerSpec::Relu { linbp: false },
                LayerSpec::MaxPool2d { k: 2, stride: 2 },
                LayerSpec::Flatten,
                LayerSpec::Dense { in_dim: 24 * 4 * 4, out_dim: 64 },
                LayerSpec::Relu { linbp: false },
                LayerSpec::Dense { in_dim: 64, out_dim: CLASSES },
            ],
            vec![1, IMAGE_SIDE, IMAGE_SIDE],
        ),
        other => return Err(Error::UnknownArch(other.to_string())),
    };
    Ok(spec)
}

/// Deterministically initialize a model from the registry.
pub fn build(arch_id: &str, seed: u64) -> Result<Model> {
    arch(arch_id)?;
    let (layers, input_shape) = layers_of(arch_id)?;
    let mut params = Vec::new();
    for (li, layer) in layers.iter().enumerate() {
        let mut rng = crate::rng::stream(seed, &[0x1a17, li as u64]);
        match layer {
            LayerSpec::Dense { in_dim, out_dim } => {
                let bound = (6.0 / *in_dim as f32).sqrt();
                let w: Vec<f32> = (0..in_dim * out_dim)
                    .map(|_| rng.random_range(-bound..bound))
                    .collect();
                params.push((
                    format!("layer{li}.weight"),
                    Tensor::new(vec![*in_dim, *out_dim], w)?,
                ));
                params.push((
                    format!("layer{li}.bias"),
                    Tensor::zeros(vec![*out_dim]),
                ));
            }
            LayerSpec::Conv2d { in_c, out_c, kh, kw, .. } => {
                let fan_in = in_c * kh * kw;
                let bound = (6.0 / fan_in as f32).sqrt();
                let w: Vec<f32> = (0..out_c * in_c * kh * kw)
                    .map(|_| rng.random_range(-bound..bound))
                    .collect();
                params.push((
                    format!("layer{li}.weight"),
                    Tensor::new(vec![*out_c, *in_c, *kh, *kw], w)?,
                ));
                params.push((format!("layer{li}.bias"), Tensor::zeros(vec![*out_c])));
            }
            _ => {}
        }
    }
    Ok(Model::from_parts(
        arch_id.to_string(),
        seed,
        layers,
        params,
        input_shape,
        CLASSES,
    ))
}
