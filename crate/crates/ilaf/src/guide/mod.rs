//! Directional-guide fitting: build the discrepancy design matrix H and
//! loss vector r from baseline trajectories, then fit a feature-space
//! direction w* via ridge regression (primal, dual, or the H^T r
//! approximation), ElasticNet, SVR, or random-guide baselines.
//!
//! All regressions are intercept-free (b = 0). Rows of H are the feature
//! discrepancies (h_t - h0)^T; targets are the sampled prediction losses.

pub mod elasticnet;
pub mod file;
mod linalg;
pub mod random;
mod ridge;
mod svr;

pub use elasticnet::fit_elasticnet;
pub use random::{random_guide_feature, random_guide_input};
pub use ridge::{fit_rr, fit_rr_approx, fit_rr_woodbury};
pub use svr::fit_svr;

use crate::attack::Trajectory;
use crate::error::{Error, Result};

/// Guide-fitting method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum GuideMethod {
    Rr,
    RrWoodbury,
    RrApprox,
    ElasticNet,
    Svr,
    RandInput,
    RandFeature,
    /// The single-direction h_p - h0 guide; built from a trajectory, never
    /// fitted from a dataset.
    IlaHuang,
}

impl GuideMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            GuideMethod::Rr => "rr",
            GuideMethod::RrWoodbury => "rr_woodbury",
            GuideMethod::RrApprox => "rr_approx",
            GuideMethod::ElasticNet => "elasticnet",
            GuideMethod::Svr => "svr",
            GuideMethod::RandInput => "rand_input",
            GuideMethod::RandFeature => "rand_feature",
            GuideMethod::IlaHuang => "ila_huang",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "rr" => GuideMethod::Rr,
            "rr_woodbury" => GuideMethod::RrWoodbury,
            "rr_approx" => GuideMethod::RrApprox,
            "elasticnet" => GuideMethod::ElasticNet,
            "svr" => GuideMethod::Svr,
            "rand_input" => GuideMethod::RandInput,
            "rand_feature" => GuideMethod::RandFeature,
            "ila_huang" => GuideMethod::IlaHuang,
            other => return Err(Error::InvalidConfig(format!("unknown guide method `{other}`"))),
        })
    }

    pub fn is_regressor(&self) -> bool {
        !matches!(
            self,
            GuideMethod::RandInput | GuideMethod::RandFeature | GuideMethod::IlaHuang
        )
    }
}

/// Hyper-parameters for guide fitting. The intercept b is fixed at zero
/// throughout.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GuideSpec {
    pub method: GuideMethod,
    /// Ridge strength lambda.
    pub lambda: f64,
    /// ElasticNet l1 strength.
    pub lambda1: f64,
    /// ElasticNet l2 strength.
    pub lambda2: f64,
    /// SVR penalty C (inversely proportional to regularization strength).
    pub c: f64,
    /// SVR tube half-width e.
    pub e: f64,
    /// Std-dev for input-space random guides; calibrated by the caller when
    /// unset.
    pub sigma_in: Option<f32>,
    /// Std-dev for feature-space random guides.
    pub sigma_feat: Option<f32>,
    /// Regressor used by the random-guide methods.
    pub rand_regressor: GuideMethod,
}

impl Default for GuideSpec {
    fn default() -> Self {
        Self {
            method: GuideMethod::Rr,
            lambda: 1e10,
            lambda1: 0.05,
            lambda2: 100.0,
            c: 1e-10,
            e: 0.0,
            sigma_in: None,
            sigma_feat: None,
            rand_regressor: GuideMethod::Rr,
        }
    }
}

impl GuideSpec {
    pub fn with_method(method: GuideMethod) -> Self {
        Self {
            method,
            ..Default::default()
        }
    }

    /// Stable provenance string for hashing.
    pub fn describe(&self) -> String {
        format!(
            "{}|{:.6e}|{:.6e}|{:.6e}|{:.6e}|{:.6e}|{:?}|{:?}|{}",
            self.method.as_str(),
            self.lambda,
            self.lambda1,
            self.lambda2,
            self.c,
            self.e,
            self.sigma_in,
            self.sigma_feat,
            self.rand_regressor.as_str(),
        )
    }
}

/// The stacked discrepancy rows H (N x m, f64) and loss targets r (N).
#[derive(Debug, Clone)]
pub struct DiscrepancyDataset {
    h: Vec<f64>,
    r: Vec<f64>,
    rows: usize,
    m: usize,
}

impl DiscrepancyDataset {
    pub fn from_rows(h: Vec<f64>, r: Vec<f64>, m: usize) -> Result<Self> {
        if r.len() * m != h.len() {
            return Err(Error::ShapeMismatch {
                op: "discrepancy dataset",
                detail: format!("{} entries for {} rows of dim {}", h.len(), r.len(), m),
            });
        }
        if !h.iter().chain(r.iter()).all(|v| v.is_finite()) {
            return Err(Error::NonFinite { op: "discrepancy dataset" });
        }
        Ok(Self {
            rows: r.len(),
            h,
            r,
            m,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn feature_dim(&self) -> usize {
        self.m
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.h[i * self.m..(i + 1) * self.m]
    }

    pub fn target(&self, i: usize) -> f64 {
        self.r[i]
    }

    pub fn targets(&self) -> &[f64] {
        &self.r
    }

    pub(crate) fn matrix(&self) -> &[f64] {
        &self.h
    }

    pub fn is_degenerate(&self) -> bool {
        self.h.iter().all(|&v| v == 0.0)
    }

    /// Rows rescaled to unit l2 length (zero rows stay zero); targets kept.
    /// This is the dataset the normalized-objective ablation fits on.
    pub fn normalized_rows(&self) -> DiscrepancyDataset {
        let mut h = self.h.clone();
        for i in 0..self.rows {
            let row = &mut h[i * self.m..(i + 1) * self.m];
            let n: f64 = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n > 0.0 {
                for v in row.iter_mut() {
                    *v /= n;
                }
            }
        }
        DiscrepancyDataset {
            h,
            r: self.r.clone(),
            rows: self.rows,
            m: self.m,
        }
    }
}

/// Stack trajectories into (H, r) in (run, t) order. All trajectories must
/// share the anchor input and feature dimension.
pub fn build_dataset(trajectories: &[Trajectory]) -> Result<DiscrepancyDataset> {
    let first = trajectories
        .first()
        .ok_or_else(|| Error::DegenerateDataset("no trajectories".into()))?;
    let m = first.feature_dim();
    let anchor = &first.anchor_x;
    let mut h = Vec::new();
    let mut r = Vec::new();
    for traj in trajectories {
        if traj.anchor_x != *anchor {
            return Err(Error::MixedAnchors);
        }
        if traj.feature_dim() != m {
            return Err(Error::MixedFeatureDim {
                a: m,
                b: traj.feature_dim(),
            });
        }
        for s in &traj.samples {
            for (f, a) in s.feature.iter().zip(&traj.anchor_feature) {
                h.push(*f as f64 - *a as f64);
            }
            r.push(s.loss as f64);
        }
    }
    DiscrepancyDataset::from_rows(h, r, m)
}

/// A fitted feature-space direction plus its benign anchor and provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionalGuide {
    pub w: Vec<f32>,
    /// Benign feature anchor h0 = g(x).
    pub anchor: Vec<f32>,
    pub spec: GuideSpec,
    pub traj_hashes: Vec<u64>,
}

impl DirectionalGuide {
    pub fn is_zero(&self) -> bool {
        self.w.iter().all(|&v| v == 0.0)
    }

    pub fn zero_count(&self) -> usize {
        self.w.iter().filter(|&&v| v == 0.0).count()
    }
}

pub(crate) fn guide_from(
    w: Vec<f64>,
    anchor: Vec<f32>,
    spec: &GuideSpec,
    traj_hashes: Vec<u64>,
) -> DirectionalGuide {
    DirectionalGuide {
        w: w.into_iter().map(|v| v as f32).collect(),
        anchor,
        spec: spec.clone(),
        traj_hashes,
    }
}

/// Fit with the regressor selected by `spec.method` on a ready dataset.
/// The anchor is attached afterwards by the caller.
pub fn fit_direction(ds: &DiscrepancyDataset, spec: &GuideSpec) -> Result<Vec<f64>> {
    match spec.method {
        GuideMethod::Rr => ridge::solve_rr_primal(ds, spec.lambda),
        GuideMethod::RrWoodbury => ridge::solve_rr_dual(ds, spec.lambda),
        GuideMethod::RrApprox => ridge::solve_rr_approx(ds),
        GuideMethod::ElasticNet => elasticnet::solve(ds, spec.lambda1, spec.lambda2, None, None),
        GuideMethod::Svr => svr::solve(ds, spec.c, spec.e),
        GuideMethod::RandInput | GuideMethod::RandFeature => Err(Error::InvalidConfig(
            "random guide methods need a model; use random_guide_input/feature".into(),
        )),
        GuideMethod::IlaHuang => Err(Error::InvalidConfig(
            "the ila_huang direction comes from a trajectory, not a dataset fit".into(),
        )),
    }
}

/// Fit a guide from trajectories with the given spec.
pub fn fit_guide(
    trajectories: &[Trajectory],
    spec: &GuideSpec,
    normalized: bool,
) -> Result<DirectionalGuide> {
    let ds = build_dataset(trajectories)?;
    let ds = if normalized { ds.normalized_rows() } else { ds };
    let w = fit_direction(&ds, spec)?;
    let hashes = trajectories.iter().map(|t| t.provenance_hash()).collect();
    Ok(guide_from(
        w,
        trajectories[0].anchor_feature.clone(),
        spec,
        hashes,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack::TrajectorySample;

    pub(crate) fn traj_with(
        anchor_x: Vec<f32>,
        anchor_feature: Vec<f32>,
        feats: &[(u32, Vec<f32>, f32)],
        run: u32,
    ) -> Trajectory {
        let mut samples = vec![TrajectorySample {
            t: 0,
            x: anchor_x.clone(),
            feature: anchor_feature.clone(),
            loss: 0.3,
        }];
        for (t, f, l) in feats {
            samples.push(TrajectorySample {
                t: *t,
                x: anchor_x.clone(),
                feature: f.clone(),
                loss: *l,
            });
        }
        Trajectory {
            input_index: 0,
            run,
            cfg_hash: 1,
            anchor_x,
            anchor_feature,
            samples,
            final_x: vec![],
        }
    }

    #[test]
    fn hyper_parameter_defaults_follow_the_headline_settings() {
        let spec = GuideSpec::default();
        assert_eq!(spec.lambda, 1e10);
        assert_eq!(spec.c, 1e-10);
        assert_eq!(spec.lambda1, 0.05);
        assert_eq!(spec.e, 0.0);
    }

    #[test]
    fn single_run_p10_gives_11_rows() {
        let feats: Vec<(u32, Vec<f32>, f32)> = (1..=10)
            .map(|t| (t, vec![t as f32, 0.0], t as f32 * 0.1))
            .collect();
        let traj = traj_with(vec![0.5; 4], vec![0.0, 0.0], &feats, 0);
        let ds = build_dataset(&[traj]).unwrap();
        assert_eq!(ds.rows(), 11);
        assert_eq!(ds.feature_dim(), 2);
    }

    #[test]
    fn ten_runs_p10_give_110_rows_with_zero_anchor_rows() {
        let trajs: Vec<Trajectory> = (0..10)
            .map(|run| {
                let feats: Vec<(u32, Vec<f32>, f32)> = (1..=10)
                    .map(|t| (t, vec![2.0 * t as f32 + run as f32, 3.0], 0.5))
                    .collect();
                traj_with(vec![0.1; 4], vec![1.0, 1.0], &feats, run)
            })
            .collect();
        let ds = build_dataset(&trajs).unwrap();
        assert_eq!(ds.rows(), 110);
        let zero_rows = (0..ds.rows())
            .filter(|&i| ds.row(i).iter().all(|&v| v == 0.0))
            .count();
        assert_eq!(zero_rows, 10);
        // anchor rows sit at the start of each run block
        for run in 0..10 {
            assert!(ds.row(run * 11).iter().all(|&v| v == 0.0));
            assert_eq!(ds.target(run * 11), 0.3f32 as f64);
        }
    }

    #[test]
    fn mixed_anchors_and_dims_are_rejected() {
        let a = traj_with(vec![0.1; 4], vec![0.0; 2], &[(1, vec![1.0, 0.0], 1.0)], 0);
        let mut b = traj_with(vec![0.2; 4], vec![0.0; 2], &[(1, vec![1.0, 0.0], 1.0)], 1);
        assert!(matches!(
            build_dataset(&[a.clone(), b.clone()]),
            Err(Error::MixedAnchors)
        ));
        b.anchor_x = a.anchor_x.clone();
        b.anchor_feature = vec![0.0; 3];
        for s in &mut b.samples {
            s.feature = vec![0.0; 3];
        }
        assert!(matches!(
            build_dataset(&[a, b]),
            Err(Error::MixedFeatureDim { .. })
        ));
    }

    #[test]
    fn normalized_rows_have_unit_length_or_zero() {
        let feats = vec![(1, vec![3.0, 4.0], 1.0)];
        let traj = traj_with(vec![0.1; 4], vec![0.0, 0.0], &feats, 0);
        let ds = build_dataset(&[traj]).unwrap().normalized_rows();
        assert!(ds.row(0).iter().all(|&v| v == 0.0));
        let n: f64 = ds.row(1).iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((n - 1.0).abs() < 1e-12);
        assert!((ds.row(1)[0] - 0.6).abs() < 1e-12);
    }
}
