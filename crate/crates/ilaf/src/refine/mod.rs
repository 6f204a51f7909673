//! Refinement of a benign input against a fitted directional guide:
//! gradient ascent on the projection of the intermediate-level discrepancy
//! onto w, constrained to the norm ball and the [0,1] box. Backpropagation
//! runs through the feature extractor g only; the classifier head plays no
//! part once the guide is fitted.

pub mod batch;

use crate::attack::{project, sign, Norm, Trajectory};
use crate::error::{Error, Result};
use crate::guide::{DirectionalGuide, GuideMethod, GuideSpec};
use crate::nn::SplitModel;

/// Refinement objective: the raw projection (g(x+d) - h0) . w, or the
/// variant with the discrepancy normalized to unit length first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub enum Objective {
    #[default]
    Projection,
    Normalized,
}

impl Objective {
    pub fn as_str(&self) -> &'static str {
        match self {
            Objective::Projection => "projection",
            Objective::Normalized => "normalized",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "projection" => Ok(Objective::Projection),
            "normalized" => Ok(Objective::Normalized),
            other => Err(Error::InvalidConfig(format!("unknown objective `{other}`"))),
        }
    }
}

/// Settings for the refinement stage.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct RefineConfig {
    pub norm: Norm,
    pub epsilon: f32,
    /// Step size; defaults to 1/255 (l-inf) or epsilon/5 (l2).
    pub alpha: Option<f32>,
    /// Iteration count T_r.
    pub iterations: usize,
    pub objective: Objective,
    /// Denominator floor of the normalized objective.
    pub floor: f32,
    /// Start from the baseline final iterate instead of the benign input.
    pub start_from_baseline: bool,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            norm: Norm::Linf,
            epsilon: 8.0 / 255.0,
            alpha: None,
            iterations: 100,
            objective: Objective::Projection,
            floor: 1e-12,
            start_from_baseline: false,
        }
    }
}

impl RefineConfig {
    pub fn step_size(&self) -> f32 {
        self.alpha.unwrap_or(match self.norm {
            Norm::Linf => 1.0 / 255.0,
            Norm::L2 => self.epsilon / 5.0,
        })
    }

    pub fn hash(&self) -> u64 {
        let repr = format!(
            "{}|{:.9}|{:?}|{}|{}|{:.3e}|{}",
            self.norm.as_str(),
            self.epsilon,
            self.alpha,
            self.iterations,
            self.objective.as_str(),
            self.floor,
            self.start_from_baseline,
        );
        crate::rng::fnv1a(repr.as_bytes())
    }
}

/// Upstream gradient of the objective with respect to the feature vector,
/// rescaled to unit max-abs (sign and normalized steps are scale invariant).
fn feature_seed(
    feature: &[f32],
    anchor: &[f32],
    w: &[f32],
    objective: Objective,
    floor: f32,
) -> Vec<f32> {
    match objective {
        Objective::Projection => w.to_vec(),
        Objective::Normalized => {
            let d: Vec<f64> = feature
                .iter()
                .zip(anchor)
                .map(|(f, a)| *f as f64 - *a as f64)
                .collect();
            let n: f64 = d.iter().map(|v| v * v).sum::<f64>().sqrt();
            let mut seed = vec![0.0f64; w.len()];
            if n >= floor as f64 {
                let dw: f64 = d.iter().zip(w).map(|(di, &wi)| di * wi as f64).sum();
                for i in 0..w.len() {
                    seed[i] = w[i] as f64 / n - d[i] * dw / (n * n * n);
                }
            } else {
                for i in 0..w.len() {
                    seed[i] = w[i] as f64 / floor as f64;
                }
            }
            let scale = seed.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
            if scale > 0.0 {
                for v in seed.iter_mut() {
                    *v /= scale;
                }
            }
            seed.into_iter().map(|v| v as f32).collect()
        }
    }
}

/// Refine starting from an explicit point (the benign input by default).
pub fn refine_from(
    split: &SplitModel,
    x: &[f32],
    start: Option<&[f32]>,
    guide: &DirectionalGuide,
    cfg: &RefineConfig,
) -> Result<Vec<f32>> {
    if guide.anchor != split.feature(x)? {
        return Err(Error::AnchorMismatch);
    }
    if guide.is_zero() {
        eprintln!("refine: zero guide direction, returning the input unchanged");
        return Ok(x.to_vec());
    }
    let alpha = cfg.step_size();
    let mut delta: Vec<f32> = match start {
        Some(s) => x.iter().zip(s).map(|(xv, sv)| sv - xv).collect(),
        None => vec![0.0; x.len()],
    };
    project(x, &mut delta, cfg.norm, cfg.epsilon);
    let mut cur: Vec<f32> = x.iter().zip(&delta).map(|(a, b)| a + b).collect();

    for _ in 0..cfg.iterations {
        let (_, grad) = split.feature_grad_seeded(&cur, |feat| {
            feature_seed(feat, &guide.anchor, &guide.w, cfg.objective, cfg.floor)
        })?;
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite { op: "refine gradient" });
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
    }
    Ok(cur)
}

/// Refine the benign input x against a directional guide (ascent on
/// (g(x+d) - h0) . w within the valid set).
pub fn refine(
    split: &SplitModel,
    x: &[f32],
    guide: &DirectionalGuide,
    cfg: &RefineConfig,
) -> Result<Vec<f32>> {
    refine_from(split, x, None, guide, cfg)
}

/// Refine with the normalized-discrepancy objective.
pub fn refine_normalized(
    split: &SplitModel,
    x: &[f32],
    guide: &DirectionalGuide,
    cfg: &RefineConfig,
) -> Result<Vec<f32>> {
    let cfg = RefineConfig {
        objective: Objective::Normalized,
        ..cfg.clone()
    };
    refine_from(split, x, None, guide, &cfg)
}

/// The single-direction special case: refine along w = h_p - h0 taken from
/// the final sampled feature of a baseline trajectory.
pub fn ila_huang(
    split: &SplitModel,
    x: &[f32],
    trajectory: &Trajectory,
    cfg: &RefineConfig,
) -> Result<Vec<f32>> {
    let guide = ila_guide(trajectory)?;
    refine_from(split, x, None, &guide, cfg)
}

/// Build the h_p - h0 guide from a trajectory.
pub fn ila_guide(trajectory: &Trajectory) -> Result<DirectionalGuide> {
    let w = trajectory.final_feature_direction();
    if w.iter().all(|&v| v == 0.0) {
        return Err(Error::DegenerateDirection);
    }
    Ok(DirectionalGuide {
        w,
        anchor: trajectory.anchor_feature.clone(),
        spec: GuideSpec::with_method(GuideMethod::IlaHuang),
        traj_hashes: vec![trajectory.provenance_hash()],
    })
}

/// l2 magnitude of the intermediate-level discrepancy ||g(x_adv) - g(x)||.
pub fn discrepancy_magnitude(split: &SplitModel, x: &[f32], x_adv: &[f32]) -> Result<f64> {
    let a = split.feature(x)?;
    let b = split.feature(x_adv)?;
    Ok(a.iter()
        .zip(&b)
        .map(|(u, v)| (*v as f64 - *u as f64).powi(2))
        .sum::<f64>()
        .sqrt())
}

/// Objective value J at a refined point, for sanity checks and reports.
pub fn objective_value(
    split: &SplitModel,
    x: &[f32],
    x_adv: &[f32],
    guide: &DirectionalGuide,
    cfg: &RefineConfig,
) -> Result<f64> {
    let h0 = split.feature(x)?;
    let feat = split.feature(x_adv)?;
    let d: Vec<f64> = feat
        .iter()
        .zip(&h0)
        .map(|(f, a)| *f as f64 - *a as f64)
        .collect();
    let dw: f64 = d.iter().zip(&guide.w).map(|(di, &wi)| di * wi as f64).sum();
    Ok(match cfg.objective {
        Objective::Projection => dw,
        Objective::Normalized => {
            let n: f64 = d.iter().map(|v| v * v).sum::<f64>().sqrt();
            dw / n.max(cfg.floor as f64)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack::{ifgsm, AttackConfig};
    use crate::guide::{build_dataset, fit_rr_approx};
    use crate::nn::{dataset, zoo};

    fn fixture() -> (crate::nn::Model, Vec<f32>, usize) {
        let pair = dataset::synthetic(23, 80, 10);
        let mut m = zoo::build("mlp-2", 1).unwrap();
        crate::nn::train::train(&mut m, &pair.train, &pair.test, 3, 0.1, 16).unwrap();
        (m, pair.test.image(2).to_vec(), pair.test.label(2))
    }

    #[test]
    fn zero_guide_returns_the_input() {
        let (m, x, _) = fixture();
        let split = m.split(2).unwrap();
        let guide = DirectionalGuide {
            w: vec![0.0; split.feature_dim()],
            anchor: split.feature(&x).unwrap(),
            spec: GuideSpec::default(),
            traj_hashes: vec![],
        };
        let out = refine(&split, &x, &guide, &RefineConfig::default()).unwrap();
        assert_eq!(out, x);
    }

    #[test]
    fn anchor_mismatch_is_rejected() {
        let (m, x, _) = fixture();
        let split = m.split(2).unwrap();
        let mut anchor = split.feature(&x).unwrap();
        anchor[0] += 1.0;
        let guide = DirectionalGuide {
            w: vec![1.0; split.feature_dim()],
            anchor,
            spec: GuideSpec::default(),
            traj_hashes: vec![],
        };
        assert!(matches!(
            refine(&split, &x, &guide, &RefineConfig::default()),
            Err(Error::AnchorMismatch)
        ));
    }

    #[test]
    fn zero_iterations_return_the_input() {
        let (m, x, y) = fixture();
        let split = m.split(2).unwrap();
        let traj = ifgsm(&split, &x, y, &AttackConfig { iterations: 5, sample_count: 5, ..Default::default() }).unwrap();
        let guide = ila_guide(&traj).unwrap();
        let cfg = RefineConfig { iterations: 0, ..Default::default() };
        assert_eq!(refine(&split, &x, &guide, &cfg).unwrap(), x);
    }

    #[test]
    fn refined_points_satisfy_the_constraints() {
        let (m, x, y) = fixture();
        let split = m.split(2).unwrap();
        let traj = ifgsm(&split, &x, y, &AttackConfig { iterations: 10, sample_count: 5, ..Default::default() }).unwrap();
        let ds = build_dataset(&[traj.clone()]).unwrap();
        let mut guide = fit_rr_approx(&ds).unwrap();
        guide.anchor = traj.anchor_feature.clone();
        for norm in [Norm::Linf, Norm::L2] {
            let cfg = RefineConfig {
                norm,
                epsilon: if norm == Norm::Linf { 8.0 / 255.0 } else { 0.5 },
                iterations: 12,
                ..Default::default()
            };
            let out = refine(&split, &x, &guide, &cfg).unwrap();
            for (v, xv) in out.iter().zip(&x) {
                assert!((0.0..=1.0).contains(v));
                if norm == Norm::Linf {
                    assert!((v - xv).abs() <= cfg.epsilon + 1e-6);
                }
            }
            if norm == Norm::L2 {
                let d: f64 = out
                    .iter()
                    .zip(&x)
                    .map(|(v, xv)| ((v - xv) as f64).powi(2))
                    .sum::<f64>()
                    .sqrt();
                assert!(d <= cfg.epsilon as f64 * (1.0 + 1e-6));
            }
        }
    }

    #[test]
    fn ila_equals_approx_guide_on_single_sample_trajectory() {
        // With p = 1 the H^T r direction is (h_1 - h0) * l_1, a positive
        // multiple of the single-direction guide; sign steps make the two
        // refinements identical bit for bit.
        let (m, x, y) = fixture();
        let split = m.split(2).unwrap();
        let cfg_a = AttackConfig { iterations: 8, sample_count: 1, ..Default::default() };
        let traj = ifgsm(&split, &x, y, &cfg_a).unwrap();
        let ds = build_dataset(&[traj.clone()]).unwrap();
        let mut approx = fit_rr_approx(&ds).unwrap();
        approx.anchor = traj.anchor_feature.clone();
        let rcfg = RefineConfig { iterations: 10, ..Default::default() };
        let a = refine(&split, &x, &approx, &rcfg).unwrap();
        let b = ila_huang(&split, &x, &traj, &rcfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn scaling_the_guide_leaves_linf_iterates_bit_identical() {
        let (m, x, y) = fixture();
        let split = m.split(2).unwrap();
        let traj = ifgsm(&split, &x, y, &AttackConfig { iterations: 10, sample_count: 5, ..Default::default() }).unwrap();
        let ds = build_dataset(&[traj.clone()]).unwrap();
        let mut guide = fit_rr_approx(&ds).unwrap();
        guide.anchor = traj.anchor_feature.clone();
        let cfg = RefineConfig { iterations: 10, ..Default::default() };
        let base = refine(&split, &x, &guide, &cfg).unwrap();
        for scale in [0.5f32, 2.0, 1024.0] {
            let mut scaled = guide.clone();
            for v in scaled.w.iter_mut() {
                *v *= scale;
            }
            let out = refine(&split, &x, &scaled, &cfg).unwrap();
            assert!(
                out.iter().zip(&base).all(|(a, b)| a.to_bits() == b.to_bits()),
                "scale {scale} changed the iterate path"
            );
        }
    }

    #[test]
    fn degenerate_direction_is_rejected() {
        let (m, x, y) = fixture();
        let split = m.split(2).unwrap();
        // epsilon = 0 keeps every iterate at x, so h_p == h0.
        let cfg = AttackConfig { epsilon: 0.0, iterations: 3, sample_count: 3, ..Default::default() };
        let traj = ifgsm(&split, &x, y, &cfg).unwrap();
        assert!(matches!(ila_guide(&traj), Err(Error::DegenerateDirection)));
    }

    #[test]
    fn normalized_objective_is_defined_at_zero_delta() {
        let (m, x, y) = fixture();
        let split = m.split(2).unwrap();
        let traj = ifgsm(&split, &x, y, &AttackConfig { iterations: 6, sample_count: 3, ..Default::default() }).unwrap();
        let ds = build_dataset(&[traj.clone()]).unwrap();
        let mut guide = fit_rr_approx(&ds).unwrap();
        guide.anchor = traj.anchor_feature.clone();
        let cfg = RefineConfig { iterations: 5, objective: Objective::Normalized, ..Default::default() };
        let out = refine(&split, &x, &guide, &cfg).unwrap();
        assert!(out.iter().all(|v| v.is_finite()));
        // J at the result should not be below J at delta = 0 (which is 0).
        let j = objective_value(&split, &x, &out, &guide, &cfg).unwrap();
        assert!(j >= 0.0, "objective went negative: {j}");
    }

    #[test]
    fn objective_at_result_is_nonnegative_across_a_batch() {
        // J(0) = 0, so ascent should end at J >= 0 on effectively every
        // input; allow the documented 1% of exceptions.
        let pair = crate::nn::dataset::synthetic(29, 100, 40);
        let mut m = crate::nn::zoo::build("mlp-2", 3).unwrap();
        crate::nn::train::train(&mut m, &pair.train, &pair.test, 3, 0.1, 16).unwrap();
        let split = m.split(2).unwrap();
        let rcfg = RefineConfig { iterations: 15, ..Default::default() };
        let acfg = AttackConfig { iterations: 15, sample_count: 5, ..Default::default() };
        let mut bad = 0usize;
        let mut total = 0usize;
        for i in 0..pair.test.len() {
            let x = pair.test.image(i).to_vec();
            let y = pair.test.label(i);
            let traj = ifgsm(&split, &x, y, &acfg).unwrap();
            let ds = build_dataset(std::slice::from_ref(&traj)).unwrap();
            let Ok(mut guide) = fit_rr_approx(&ds) else { continue };
            guide.anchor = traj.anchor_feature.clone();
            let out = refine(&split, &x, &guide, &rcfg).unwrap();
            let j = objective_value(&split, &x, &out, &guide, &rcfg).unwrap();
            total += 1;
            if j < 0.0 {
                bad += 1;
                eprintln!("input {i}: objective {j} < 0");
            }
        }
        assert!(total >= 30);
        assert!(bad as f64 <= 0.01 * total as f64, "{bad}/{total} negative");
    }

    #[test]
    fn discrepancy_magnitude_basics() {
        let (m, x, y) = fixture();
        let split = m.split(2).unwrap();
        assert_eq!(discrepancy_magnitude(&split, &x, &x).unwrap(), 0.0);
        let traj = ifgsm(&split, &x, y, &AttackConfig { iterations: 6, sample_count: 3, ..Default::default() }).unwrap();
        let a = traj.final_x.clone();
        let mag = discrepancy_magnitude(&split, &x, &a).unwrap();
        assert!(mag > 0.0);
        // triangle inequality against an intermediate point
        let b = traj.samples[1].x.clone();
        let mab = {
            let fa = split.feature(&a).unwrap();
            let fb = split.feature(&b).unwrap();
            fa.iter()
                .zip(&fb)
                .map(|(u, v)| (*u as f64 - *v as f64).powi(2))
                .sum::<f64>()
                .sqrt()
        };
        let mb = discrepancy_magnitude(&split, &x, &b).unwrap();
        assert!(mag <= mb + mab + 1e-9);
    }
}
