//! The iterative attacks: I-FGSM, multi-run PGD, and the LinBP variant.

use super::project::{project, sign};
use super::{AttackConfig, Norm, Trajectory, TrajectorySample};
use crate::error::{Error, Result};
use crate::nn::SplitModel;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// I-FGSM: x_{t+1} = project(x_t + alpha * sgn(grad f(x_t, y))) for l-inf;
/// the l2 variant steps along the unit-l2-normalized gradient. Captures
/// p + 1 samples, the first being the benign anchor (0, x, g(x), l0).
pub fn ifgsm(split: &SplitModel, x: &[f32], y: usize, cfg: &AttackConfig) -> Result<Trajectory> {
    cfg.validate()?;
    run_attack(split, x, y, cfg, 0, 0, false)
}

/// R runs of PGD: each starts from x + u with u uniform in the epsilon ball
/// (then clipped into [0,1]), followed by the I-FGSM loop. Runs use distinct
/// sub-seeds of (seed, input index, run index).
pub fn pgd_multirun(
    split: &SplitModel,
    x: &[f32],
    y: usize,
    cfg: &AttackConfig,
) -> Result<Vec<Trajectory>> {
    cfg.validate()?;
    (0..cfg.runs)
        .map(|run| run_attack(split, x, y, cfg, run as u32, 0, cfg.random_init))
        .collect()
}

/// I-FGSM with the last `n_linear_relus` relu layers in linear backward mode.
/// The forward pass (and hence every sampled loss) is unchanged.
pub fn linbp_attack(
    split: &SplitModel,
    x: &[f32],
    y: usize,
    cfg: &AttackConfig,
    n_linear_relus: usize,
) -> Result<Trajectory> {
    cfg.validate()?;
    let available = split.model().relu_count();
    if n_linear_relus > available {
        return Err(Error::InvalidConfig(format!(
            "{n_linear_relus} linear relus requested but the model has {available}"
        )));
    }
    run_attack(split, x, y, cfg, 0, n_linear_relus, false)
}

/// Multi-run LinBP, mirroring `pgd_multirun` with linearized backward relus.
pub fn linbp_multirun(
    split: &SplitModel,
    x: &[f32],
    y: usize,
    cfg: &AttackConfig,
    n_linear_relus: usize,
) -> Result<Vec<Trajectory>> {
    cfg.validate()?;
    let available = split.model().relu_count();
    if n_linear_relus > available {
        return Err(Error::InvalidConfig(format!(
            "{n_linear_relus} linear relus requested but the model has {available}"
        )));
    }
    (0..cfg.runs)
        .map(|run| run_attack(split, x, y, cfg, run as u32, n_linear_relus, cfg.random_init))
        .collect()
}

fn run_attack(
    split: &SplitModel,
    x: &[f32],
    y: usize,
    cfg: &AttackConfig,
    run: u32,
    linbp_last: usize,
    random_init: bool,
) -> Result<Trajectory> {
    let n = x.len();
    let alpha = cfg.step_size();
    let times = cfg.strategy.times(cfg.iterations, cfg.sample_count);

    // Benign anchor sample.
    let benign = split.eval(x, y, linbp_last, false)?;
    let anchor_feature = benign.feature.clone();
    let mut samples = Vec::with_capacity(cfg.sample_count + 1);
    samples.push(TrajectorySample {
        t: 0,
        x: x.to_vec(),
        feature: benign.feature,
        loss: benign.loss,
    });

    // Starting point: benign input, or a random point in the ball for PGD.
    let mut delta = vec![0.0f32; n];
    if random_init {
        let mut rng = crate::rng::stream(cfg.seed, &[cfg.input_index as u64, run as u64]);
        match cfg.norm {
            Norm::Linf => {
                for d in delta.iter_mut() {
                    *d = rng.random_range(-cfg.epsilon..=cfg.epsilon);
                }
            }
            Norm::L2 => {
                let mut g: Vec<f64> = (0..n)
                    .map(|_| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
                    .collect();
                let norm: f64 = g.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
                let radius =
                    cfg.epsilon as f64 * rng.random_range(0.0f64..1.0).powf(1.0 / n as f64);
                for v in g.iter_mut() {
                    *v *= radius / norm;
                }
                for (d, v) in delta.iter_mut().zip(g) {
                    *d = v as f32;
                }
            }
        }
        project(x, &mut delta, cfg.norm, cfg.epsilon);
    }

    let mut cur: Vec<f32> = x.iter().zip(&delta).map(|(a, b)| a + b).collect();
    let mut next_sample = 0usize;
    for t in 1..=cfg.iterations as u32 {
        let eval = split.eval(&cur, y, linbp_last, true)?;
        let grad = eval.grad.expect("gradient requested");
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite { op: "attack gradient" });
        }
        match cfg.norm {
            Norm::Linf => {
                for (d, g) in delta.iter_mut().zip(&grad) {
                    *d += alpha * sign(*g);
                }
            }
            Norm::L2 => {
                let gn: f64 = grad.iter().map(|&g| (g as f64).powi(2)).sum::<f64>().sqrt();
                if gn > 0.0 {
                    let scale = alpha as f64 / gn;
                    for (d, g) in delta.iter_mut().zip(&grad) {
                        *d += (scale * *g as f64) as f32;
                    }
                }
            }
        }
        project(x, &mut delta, cfg.norm, cfg.epsilon);
        for (c, (xv, dv)) in cur.iter_mut().zip(x.iter().zip(&delta)) {
            *c = xv + dv;
        }

        while next_sample < times.len() && times[next_sample] == t {
            let e = split.eval(&cur, y, linbp_last, false)?;
            samples.push(TrajectorySample {
                t,
                x: cur.clone(),
                feature: e.feature,
                loss: e.loss,
            });
            next_sample += 1;
        }
    }

    Ok(Trajectory {
        input_index: cfg.input_index,
        run,
        cfg_hash: cfg.hash(),
        anchor_x: x.to_vec(),
        anchor_feature,
        samples,
        final_x: cur,
    })
}
