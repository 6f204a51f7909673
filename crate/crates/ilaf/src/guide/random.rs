//! Random directional guides: sample random perturbations in input space or
//! feature space, evaluate the resulting losses on the source model, and fit
//! the configured regressor on the (discrepancy, loss) pairs.

use super::{fit_direction, guide_from, DirectionalGuide, DiscrepancyDataset, GuideSpec};
use crate::error::{Error, Result};
use crate::nn::SplitModel;
use rand_distr::{Distribution, StandardNormal};

fn regressor_spec(spec: &GuideSpec) -> Result<GuideSpec> {
    if !spec.rand_regressor.is_regressor() {
        return Err(Error::InvalidConfig(
            "rand_regressor must be a regression method".into(),
        ));
    }
    let mut fit = spec.clone();
    fit.method = spec.rand_regressor;
    Ok(fit)
}

/// Draw p gaussian input perturbations x + N(0, sigma_in^2 I) clipped to
/// [0,1], evaluate features and losses, and fit `spec.rand_regressor`.
pub fn random_guide_input(
    split: &SplitModel,
    x: &[f32],
    y: usize,
    p: usize,
    sigma_in: f32,
    seed: u64,
    spec: &GuideSpec,
) -> Result<DirectionalGuide> {
    if sigma_in <= 0.0 {
        return Err(Error::InvalidConfig("sigma_in must be positive".into()));
    }
    if p == 0 {
        return Err(Error::InvalidConfig("p must be >= 1".into()));
    }
    let fit_spec = regressor_spec(spec)?;
    let benign = split.eval(x, y, 0, false)?;
    let h0 = benign.feature;
    let m = h0.len();

    let mut h = vec![0.0f64; (p + 1) * m];
    let mut r = vec![0.0f64; p + 1];
    r[0] = benign.loss as f64;

    let mut rng = crate::rng::stream(seed, &[0x7a4d, 0]);
    for j in 0..p {
        let xj: Vec<f32> = x
            .iter()
            .map(|&v| {
                let n: f64 = StandardNormal.sample(&mut rng);
                (v + sigma_in * n as f32).clamp(0.0, 1.0)
            })
            .collect();
        let e = split.eval(&xj, y, 0, false)?;
        for (dst, (f, a)) in h[(j + 1) * m..(j + 2) * m]
            .iter_mut()
            .zip(e.feature.iter().zip(&h0))
        {
            *dst = *f as f64 - *a as f64;
        }
        r[j + 1] = e.loss as f64;
    }

    let ds = DiscrepancyDataset::from_rows(h, r, m)?;
    let w = fit_direction(&ds, &fit_spec)?;
    Ok(guide_from(w, h0, spec, vec![seed]))
}

/// Perturb the benign feature h0 with N(0, sigma_feat^2 I), evaluate the
/// head losses, and fit `spec.rand_regressor` on the (delta, loss) pairs.
pub fn random_guide_feature(
    split: &SplitModel,
    x: &[f32],
    y: usize,
    p: usize,
    sigma_feat: f32,
    seed: u64,
    spec: &GuideSpec,
) -> Result<DirectionalGuide> {
    if sigma_feat <= 0.0 {
        return Err(Error::InvalidConfig("sigma_feat must be positive".into()));
    }
    if p == 0 {
        return Err(Error::InvalidConfig("p must be >= 1".into()));
    }
    let fit_spec = regressor_spec(spec)?;
    let benign = split.eval(x, y, 0, false)?;
    let h0 = benign.feature;
    let m = h0.len();

    let mut h = vec![0.0f64; (p + 1) * m];
    let mut r = vec![0.0f64; p + 1];
    r[0] = benign.loss as f64;

    let mut rng = crate::rng::stream(seed, &[0x7a4d, 1]);
    for j in 0..p {
        let delta: Vec<f32> = (0..m)
            .map(|_| {
                let n: f64 = StandardNormal.sample(&mut rng);
                sigma_feat * n as f32
            })
            .collect();
        let perturbed: Vec<f32> = h0.iter().zip(&delta).map(|(a, d)| a + d).collect();
        let loss = split.head_loss(&perturbed, y)?;
        for (dst, &d) in h[(j + 1) * m..(j + 2) * m].iter_mut().zip(&delta) {
            *dst = d as f64;
        }
        r[j + 1] = loss as f64;
    }

    let ds = DiscrepancyDataset::from_rows(h, r, m)?;
    let w = fit_direction(&ds, &fit_spec)?;
    Ok(guide_from(w, h0, spec, vec![seed]))
}
