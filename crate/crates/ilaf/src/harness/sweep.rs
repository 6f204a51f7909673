//! Hyper-parameter sweeps: re-run the same campaign at each point of one
//! axis, with identical seeds across points.

use super::campaign::{BaselineKind, Campaign, CampaignConfig, GuideChoice, MethodSpec, Zoo};
use crate::error::{Error, Result};
use crate::nn::dataset::DatasetPair;
use crate::harness::report::TransferReport;

/// The swept parameter and its values.
#[derive(Debug, Clone)]
pub enum SweepAxis {
    /// Number of baseline runs R (applies to multi-run baselines).
    Runs(Vec<usize>),
    /// ElasticNet l1 strength.
    Lambda1(Vec<f64>),
    /// Ridge strength.
    Lambda(Vec<f64>),
    /// SVR penalty.
    C(Vec<f64>),
    /// Perturbation budget.
    Epsilon(Vec<f32>),
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::Runs(_) => "runs",
            SweepAxis::Lambda1(_) => "lambda1",
            SweepAxis::Lambda(_) => "lambda",
            SweepAxis::C(_) => "c",
            SweepAxis::Epsilon(_) => "epsilon",
        }
    }

    fn validate_sorted(&self) -> Result<()> {
        fn check<T: PartialOrd + Copy + Into<f64>>(vals: &[T], name: &str) -> Result<()> {
            if vals.is_empty() {
                return Err(Error::InvalidConfig(format!("empty {name} sweep")));
            }
            for v in vals {
                let f: f64 = (*v).into();
                if !f.is_finite() {
                    return Err(Error::InvalidConfig(format!("non-finite {name} sweep value")));
                }
            }
            if vals.windows(2).any(|w| w[0] > w[1]) {
                return Err(Error::InvalidConfig(format!("{name} sweep values must be sorted")));
            }
            Ok(())
        }
        match self {
            SweepAxis::Runs(v) => {
                if v.is_empty() {
                    return Err(Error::InvalidConfig("empty runs sweep".into()));
                }
                if v.windows(2).any(|w| w[0] > w[1]) {
                    return Err(Error::InvalidConfig("runs sweep values must be sorted".into()));
                }
                Ok(())
            }
            SweepAxis::Lambda1(v) => check(v, "lambda1"),
            SweepAxis::Lambda(v) => check(v, "lambda"),
            SweepAxis::C(v) => check(v, "c"),
            SweepAxis::Epsilon(v) => check(v, "epsilon"),
        }
    }

    pub fn points(&self) -> Vec<f64> {
        match self {
            SweepAxis::Runs(v) => v.iter().map(|&r| r as f64).collect(),
            SweepAxis::Lambda1(v) | SweepAxis::Lambda(v) | SweepAxis::C(v) => v.clone(),
            SweepAxis::Epsilon(v) => v.iter().map(|&e| e as f64).collect(),
        }
    }

    /// Specialize (config, methods) for one sweep point.
    fn apply(&self, point: f64, cfg: &mut CampaignConfig, methods: &mut [MethodSpec]) {
        match self {
            SweepAxis::Runs(_) => {
                let runs = point as usize;
                for m in methods.iter_mut() {
                    let baseline = match m {
                        MethodSpec::Baseline(b) => b,
                        MethodSpec::Refined { baseline, .. } => baseline,
                    };
                    match baseline {
                        BaselineKind::Pgd { runs: r } => *r = runs,
                        BaselineKind::LinBp { runs: r } => *r = runs,
                        BaselineKind::IFgsm => {}
                    }
                }
            }
            SweepAxis::Lambda1(_) => {
                cfg.guide.lambda1 = point;
                for m in methods.iter_mut() {
                    if let MethodSpec::Refined {
                        guide: GuideChoice::ElasticNet { lambda1 },
                        ..
                    } = m
                    {
                        *lambda1 = Some(point);
                    }
                }
            }
            SweepAxis::Lambda(_) => cfg.guide.lambda = point,
            SweepAxis::C(_) => cfg.guide.c = point,
            SweepAxis::Epsilon(_) => {
                cfg.attack.epsilon = point as f32;
                cfg.refine.epsilon = point as f32;
            }
        }
    }
}

/// One report per sweep point, all points sharing the base seed.
pub fn run_sweep(
    base: &CampaignConfig,
    methods: &[MethodSpec],
    axis: &SweepAxis,
    zoo: &Zoo,
    data: &DatasetPair,
) -> Result<Vec<(f64, TransferReport)>> {
    axis.validate_sorted()?;
    let mut out = Vec::new();
    for point in axis.points() {
        let mut cfg = base.clone();
        let mut ms = methods.to_vec();
        axis.apply(point, &mut cfg, &mut ms);
        let campaign = Campaign::prepare(cfg, zoo, data)?;
        let report = campaign.run_methods(&ms)?;
        out.push((point, report));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_values_must_be_sorted_and_finite() {
        assert!(SweepAxis::Runs(vec![10, 1]).validate_sorted().is_err());
        assert!(SweepAxis::Lambda1(vec![]).validate_sorted().is_err());
        assert!(SweepAxis::Lambda1(vec![0.05, f64::NAN])
            .validate_sorted()
            .is_err());
        assert!(SweepAxis::Lambda1(vec![0.05, 0.1, 0.5, 1.0])
            .validate_sorted()
            .is_ok());
    }

    #[test]
    fn runs_axis_rewrites_multi_run_baselines() {
        let mut cfg = CampaignConfig::default();
        let mut methods = vec![
            MethodSpec::parse("pgd1+rr").unwrap(),
            MethodSpec::parse("ifgsm").unwrap(),
        ];
        SweepAxis::Runs(vec![1, 10]).apply(10.0, &mut cfg, &mut methods);
        match &methods[0] {
            MethodSpec::Refined { baseline: BaselineKind::Pgd { runs }, .. } => {
                assert_eq!(*runs, 10)
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(methods[1], MethodSpec::Baseline(BaselineKind::IFgsm));
    }
}
