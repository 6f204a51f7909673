//! Supervised training: plain SGD with momentum 0.9.

use super::{argmax, Dataset, Model};
use crate::error::{Error, Result};
use crate::rng;
use rand::seq::SliceRandom;

const MOMENTUM: f32 = 0.9;

/// Final accuracies recorded on the model after training.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainStats {
    pub epochs: usize,
    pub lr: f32,
    pub train_accuracy: f32,
    pub test_accuracy: f32,
}

/// Train in place; shuffling is seeded from the model seed so identical
/// seeds give byte-identical checkpoints.
pub fn train(
    model: &mut Model,
    data: &Dataset,
    test: &Dataset,
    epochs: usize,
    lr: f32,
    batch: usize,
) -> Result<TrainStats> {
    if data.is_empty() {
        return Err(Error::InvalidConfig("training dataset is empty".into()));
    }
    if lr <= 0.0 {
        return Err(Error::InvalidConfig(format!("lr must be positive, got {lr}")));
    }
    let n = data.dim();
    let mut velocity: Vec<Vec<f32>> = model
        .params()
        .iter()
        .map(|(_, t)| vec![0.0; t.numel()])
        .collect();

    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..epochs {
        let mut shuffle_rng = rng::stream(model.seed(), &[0x59d0, epoch as u64]);
        order.shuffle(&mut shuffle_rng);
        for chunk in order.chunks(batch) {
            let mut xs = Vec::with_capacity(chunk.len() * n);
            let mut ys = Vec::with_capacity(chunk.len());
            for &i in chunk {
                xs.extend_from_slice(data.image(i));
                ys.push(data.label(i));
            }
            let (mut tape, _, param_ids, loss) = match model.loss_tape(&xs, &ys, true, false) {
                Ok(v) => v,
                Err(Error::NonFinite { .. }) => return Err(Error::Divergence { epoch }),
                Err(e) => return Err(e),
            };
            if !tape.tensor(loss).item().is_finite() {
                return Err(Error::Divergence { epoch });
            }
            tape.backward(loss)?;

            for (pi, &id) in param_ids.iter().enumerate() {
                let Some(g) = tape.grad(id) else { continue };
                if g.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Divergence { epoch });
                }
                let v = &mut velocity[pi];
                for j in 0..g.len() {
                    v[j] = MOMENTUM * v[j] + g[j];
                }
            }
            for (pi, _) in param_ids.iter().enumerate() {
                let v = &velocity[pi];
                let t = &mut model.params_mut()[pi].1;
                let data = t.data_mut();
                for j in 0..v.len() {
                    data[j] -= lr * v[j];
                }
            }
        }
    }

    let stats = TrainStats {
        epochs,
        lr,
        train_accuracy: accuracy(model, data)?,
        test_accuracy: accuracy(model, test)?,
    };
    model.set_metadata(stats);
    Ok(stats)
}

/// Top-1 accuracy over a dataset, evaluated in batches.
pub fn accuracy(model: &Model, data: &Dataset) -> Result<f32> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let n = data.dim();
    let mut correct = 0usize;
    let batch = 64;
    let mut i = 0;
    while i < data.len() {
        let hi = (i + batch).min(data.len());
        let xs = &data.images_flat()[i * n..hi * n];
        let logits = model.forward_logits(xs, hi - i)?;
        let classes = model.classes();
        for b in 0..(hi - i) {
            if argmax(&logits[b * classes..(b + 1) * classes]) == data.label(i + b) {
                correct += 1;
            }
        }
        i = hi;
    }
    Ok(correct as f32 / data.len() as f32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{dataset, zoo};

    #[test]
    fn zero_epochs_leaves_params_unchanged() {
        let pair = dataset::synthetic(1, 40, 20);
        let mut m = zoo::build("mlp-2", 0).unwrap();
        let before = m.params_checksum();
        train(&mut m, &pair.train, &pair.test, 0, 0.1, 32).unwrap();
        assert_eq!(m.params_checksum(), before);
    }

    #[test]
    fn same_seed_trains_to_identical_checkpoints() {
        let pair = dataset::synthetic(2, 60, 20);
        let mut a = zoo::build("mlp-2", 9).unwrap();
        let mut b = zoo::build("mlp-2", 9).unwrap();
        let sa = train(&mut a, &pair.train, &pair.test, 2, 0.05, 16).unwrap();
        let sb = train(&mut b, &pair.train, &pair.test, 2, 0.05, 16).unwrap();
        assert_eq!(a.params_checksum(), b.params_checksum());
        assert_eq!(sa.test_accuracy, sb.test_accuracy);
        assert_eq!(
            crate::nn::checkpoint::to_bytes(&a),
            crate::nn::checkpoint::to_bytes(&b),
            "checkpoints differ byte-for-byte"
        );
    }

    #[test]
    fn training_reduces_loss_on_a_small_set() {
        let pair = dataset::synthetic(3, 200, 50);
        let mut m = zoo::build("mlp-2", 4).unwrap();
        let acc0 = accuracy(&m, &pair.train).unwrap();
        train(&mut m, &pair.train, &pair.test, 3, 0.1, 32).unwrap();
        let acc1 = accuracy(&m, &pair.train).unwrap();
        assert!(acc1 > acc0, "accuracy {acc0} -> {acc1}");
    }

    #[test]
    fn divergence_reports_the_epoch() {
        let pair = dataset::synthetic(4, 60, 20);
        let mut m = zoo::build("mlp-2", 0).unwrap();
        let err = train(&mut m, &pair.train, &pair.test, 3, 1.0e12, 16).unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }), "got {err:?}");
    }

    #[test]
    fn empty_dataset_and_bad_lr_are_config_errors() {
        let pair = dataset::synthetic(5, 20, 10);
        let empty = pair.train.select(&[]);
        let mut m = zoo::build("mlp-2", 0).unwrap();
        assert!(train(&mut m, &empty, &pair.test, 1, 0.1, 8).is_err());
        assert!(train(&mut m, &pair.train, &pair.test, 1, 0.0, 8).is_err());
    }
}
