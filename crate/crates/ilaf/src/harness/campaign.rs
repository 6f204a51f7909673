//! Campaign orchestration: train the zoo, filter the evaluation set, run
//! baseline attacks and refinements per method, and evaluate transfer to
//! the victim models.
//!
//! Per-input work is independent and runs in parallel; RNG streams are
//! keyed by (seed, input index, run index) and results are aggregated in
//! input order, so thread count never changes any output.

use crate::attack::{self, AttackConfig, Norm, Trajectory};
use crate::error::{Error, Result};
use crate::guide::{self, GuideMethod, GuideSpec};
use crate::nn::{dataset, train, zoo, Dataset, Model, SplitModel};
use crate::refine::{self, RefineConfig};
use crate::harness::report::{ReportCell, TransferReport};
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::time::Instant;

/// Per-input campaign output: (adversarial example, discrepancy magnitude)
/// for each method.
type MethodOutputs = Vec<(Vec<f32>, f64)>;

/// Which baseline attack produces the trajectories (and baseline examples).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum BaselineKind {
    IFgsm,
    /// Multi-run PGD with random initialization.
    Pgd { runs: usize },
    /// LinBP I-FGSM; multi-run adds random initialization like PGD.
    LinBp { runs: usize },
}

impl BaselineKind {
    pub fn name(&self) -> String {
        match self {
            BaselineKind::IFgsm => "ifgsm".into(),
            BaselineKind::Pgd { runs } => format!("pgd{runs}"),
            BaselineKind::LinBp { runs: 1 } => "linbp".into(),
            BaselineKind::LinBp { runs } => format!("linbp{runs}"),
        }
    }
}

/// Guide source for a refined method.
#[derive(Debug, Clone, PartialEq)]
pub enum GuideChoice {
    /// Ridge regression, solved through the N x N dual system.
    Rr,
    /// The H^T r approximation.
    RrApprox,
    ElasticNet { lambda1: Option<f64> },
    Svr,
    /// Single-direction h_p - h0.
    Ila,
    RandInput { regressor: GuideMethod },
    RandFeature { regressor: GuideMethod },
}

fn regressor_short(m: GuideMethod) -> &'static str {
    match m {
        GuideMethod::Rr | GuideMethod::RrWoodbury => "rr",
        GuideMethod::RrApprox => "rra",
        GuideMethod::ElasticNet => "en",
        GuideMethod::Svr => "svr",
        _ => "rr",
    }
}

fn regressor_parse(s: &str) -> Option<GuideMethod> {
    match s {
        "rr" => Some(GuideMethod::Rr),
        "rra" => Some(GuideMethod::RrApprox),
        "en" => Some(GuideMethod::ElasticNet),
        "svr" => Some(GuideMethod::Svr),
        _ => None,
    }
}

impl GuideChoice {
    pub fn name(&self, defaults: &GuideSpec) -> String {
        match self {
            GuideChoice::Rr => "rr".into(),
            GuideChoice::RrApprox => "rra".into(),
            GuideChoice::ElasticNet { lambda1 } => {
                let l1 = lambda1.unwrap_or(defaults.lambda1);
                if (l1 - defaults.lambda1).abs() < 1e-15 {
                    "en".into()
                } else {
                    format!("en{l1}")
                }
            }
            GuideChoice::Svr => "svr".into(),
            GuideChoice::Ila => "ila".into(),
            GuideChoice::RandInput { regressor } => match regressor {
                GuideMethod::Rr => "rand-in".into(),
                other => format!("rand-in+{}", regressor_short(*other)),
            },
            GuideChoice::RandFeature { regressor } => match regressor {
                GuideMethod::Rr => "rand-feat".into(),
                other => format!("rand-feat+{}", regressor_short(*other)),
            },
        }
    }
}

/// One method column of the transfer matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum MethodSpec {
    Baseline(BaselineKind),
    Refined {
        baseline: BaselineKind,
        guide: GuideChoice,
        normalized: bool,
    },
}

impl MethodSpec {
    pub fn name(&self, defaults: &GuideSpec) -> String {
        match self {
            MethodSpec::Baseline(b) => b.name(),
            MethodSpec::Refined { baseline, guide, normalized } => {
                let base = match guide {
                    // random guides ignore the baseline trajectories
                    GuideChoice::RandInput { .. } | GuideChoice::RandFeature { .. } => {
                        guide.name(defaults)
                    }
                    _ => format!("{}+{}", baseline.name(), guide.name(defaults)),
                };
                if *normalized {
                    format!("{base}-norm")
                } else {
                    base
                }
            }
        }
    }

    /// Parse method names like `ifgsm`, `pgd10+svr`, `ifgsm+rr-norm`,
    /// `linbp10+rr`, `rand-in+rr`, `ifgsm+en0.5`.
    pub fn parse(s: &str) -> Result<Self> {
        let (body, normalized) = match s.strip_suffix("-norm") {
            Some(b) => (b, true),
            None => (s, false),
        };
        let parse_baseline = |b: &str| -> Result<BaselineKind> {
            if b == "ifgsm" {
                Ok(BaselineKind::IFgsm)
            } else if let Some(r) = b.strip_prefix("pgd") {
                let runs = if r.is_empty() { 1 } else { r.parse().map_err(|_| bad(s))? };
                Ok(BaselineKind::Pgd { runs })
            } else if b == "linbp" {
                Ok(BaselineKind::LinBp { runs: 1 })
            } else if let Some(r) = b.strip_prefix("linbp") {
                Ok(BaselineKind::LinBp { runs: r.parse().map_err(|_| bad(s))? })
            } else {
                Err(bad(s))
            }
        };
        fn bad(s: &str) -> Error {
            Error::InvalidConfig(format!("unknown method `{s}`"))
        }
        match body.split_once('+') {
            None => match body {
                "rand-in" => Ok(MethodSpec::Refined {
                    baseline: BaselineKind::IFgsm,
                    guide: GuideChoice::RandInput { regressor: GuideMethod::Rr },
                    normalized,
                }),
                "rand-feat" => Ok(MethodSpec::Refined {
                    baseline: BaselineKind::IFgsm,
                    guide: GuideChoice::RandFeature { regressor: GuideMethod::Rr },
                    normalized,
                }),
                _ if normalized => Err(bad(s)),
                _ => Ok(MethodSpec::Baseline(parse_baseline(body)?)),
            },
            Some(("rand-in", g)) => Ok(MethodSpec::Refined {
                baseline: BaselineKind::IFgsm,
                guide: GuideChoice::RandInput {
                    regressor: regressor_parse(g).ok_or_else(|| bad(s))?,
                },
                normalized,
            }),
            Some(("rand-feat", g)) => Ok(MethodSpec::Refined {
                baseline: BaselineKind::IFgsm,
                guide: GuideChoice::RandFeature {
                    regressor: regressor_parse(g).ok_or_else(|| bad(s))?,
                },
                normalized,
            }),
            Some((b, g)) => {
                let baseline = parse_baseline(b)?;
                let guide = match g {
                    "rr" => GuideChoice::Rr,
                    "rra" => GuideChoice::RrApprox,
                    "en" => GuideChoice::ElasticNet { lambda1: None },
                    "svr" => GuideChoice::Svr,
                    "ila" => GuideChoice::Ila,
                    other => match other.strip_prefix("en") {
                        Some(l1) => GuideChoice::ElasticNet {
                            lambda1: Some(l1.parse().map_err(|_| bad(s))?),
                        },
                        None => return Err(bad(s)),
                    },
                };
                Ok(MethodSpec::Refined { baseline, guide, normalized })
            }
        }
    }
}

/// Campaign-level settings.
#[derive(Debug, Clone)]
pub struct CampaignConfig {
    pub seed: u64,
    pub dataset_seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    /// (arch, seed) pairs; every model is trained, one is the source.
    pub zoo: Vec<(String, u64)>,
    pub source: String,
    pub split_k: Option<usize>,
    pub eval_count: usize,
    pub attack: AttackConfig,
    pub refine: RefineConfig,
    pub linbp_relus: usize,
    pub guide: GuideSpec,
    /// Fraction of the training split each model trains on (seeded
    /// per-model subsets de-align decision boundaries across the zoo).
    pub train_fraction: f64,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        // Three seeds of each MLP and two of each CNN: nine victims spanning
        // four architectures, with enough cross-family diversity that
        // transfer stays well off its ceiling.
        let mut archs = Vec::new();
        for arch in zoo::arch_ids() {
            let seeds: &[u64] = if arch.starts_with("mlp") { &[0, 1, 2] } else { &[0, 1] };
            for &seed in seeds {
                archs.push((arch.to_string(), seed));
            }
        }
        Self {
            seed: 0,
            dataset_seed: 7,
            n_train: 3000,
            n_test: 1000,
            zoo: archs,
            source: "cnn-small:s0".into(),
            split_k: None,
            eval_count: 200,
            attack: AttackConfig::default(),
            refine: RefineConfig::default(),
            linbp_relus: 1,
            guide: GuideSpec::default(),
            train_fraction: 0.8,
        }
    }
}

impl CampaignConfig {
    pub fn hash(&self) -> u64 {
        let repr = format!(
            "{}|{}|{}|{}|{:?}|{}|{:?}|{}|{:x}|{:x}|{}|{}",
            self.seed,
            self.dataset_seed,
            self.n_train,
            self.n_test,
            self.zoo,
            self.source,
            self.split_k,
            self.eval_count,
            self.attack.hash(),
            self.refine.hash(),
            self.linbp_relus,
            self.guide.describe(),
        ) + &format!("|{:.4}", self.train_fraction);
        crate::rng::fnv1a(repr.as_bytes())
    }
}

/// The trained model zoo.
pub struct Zoo {
    pub models: Vec<Model>,
}

impl Zoo {
    /// Train every configured (arch, seed) pair; models train concurrently.
    /// Each model sees its own seeded subset of the training split, which
    /// keeps decision boundaries from aligning across the zoo.
    pub fn train(cfg: &CampaignConfig, data: &dataset::DatasetPair) -> Result<Zoo> {
        if !(0.0..=1.0).contains(&cfg.train_fraction) || cfg.train_fraction == 0.0 {
            return Err(Error::InvalidConfig(format!(
                "train_fraction must be in (0, 1], got {}",
                cfg.train_fraction
            )));
        }
        let models: Result<Vec<Model>> = cfg
            .zoo
            .par_iter()
            .enumerate()
            .map(|(mi, (arch, seed))| {
                let spec = zoo::arch(arch)?;
                let mut m = zoo::build(arch, *seed)?;
                let subset = if cfg.train_fraction < 1.0 {
                    let keep = ((data.train.len() as f64) * cfg.train_fraction).round() as usize;
                    let mut order: Vec<usize> = (0..data.train.len()).collect();
                    let mut rng = crate::rng::stream(cfg.dataset_seed, &[0x5b5e7, mi as u64]);
                    rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
                    order.truncate(keep.max(1));
                    order.sort_unstable();
                    data.train.select(&order)
                } else {
                    data.train.clone()
                };
                train::train(&mut m, &subset, &data.test, spec.epochs, spec.lr, spec.batch)?;
                Ok(m)
            })
            .collect();
        Ok(Zoo { models: models? })
    }

    pub fn find(&self, model_id: &str) -> Result<&Model> {
        self.models
            .iter()
            .find(|m| m.model_id() == model_id)
            .ok_or_else(|| Error::UnknownArch(model_id.to_string()))
    }
}

/// A prepared campaign: source split, victims, and the filtered eval set.
pub struct Campaign<'a> {
    pub cfg: CampaignConfig,
    pub source: &'a Model,
    pub victims: Vec<&'a Model>,
    pub split: SplitModel<'a>,
    /// Evaluation inputs, correctly classified by the source and every
    /// victim.
    pub eval: Dataset,
}

impl<'a> Campaign<'a> {
    /// Filter the test split down to inputs every model classifies
    /// correctly, then take the first `eval_count`.
    pub fn prepare(cfg: CampaignConfig, zoo: &'a Zoo, data: &dataset::DatasetPair) -> Result<Self> {
        for m in &zoo.models {
            if m.metadata().is_none() {
                return Err(Error::InvalidConfig(format!(
                    "model {} is untrained",
                    m.model_id()
                )));
            }
        }
        let source = zoo.find(&cfg.source)?;
        let victims: Vec<&Model> = zoo
            .models
            .iter()
            .filter(|m| m.model_id() != cfg.source)
            .collect();
        if victims.is_empty() {
            return Err(Error::InvalidConfig("no victim models configured".into()));
        }

        let mut keep = Vec::new();
        'inputs: for i in 0..data.test.len() {
            let x = data.test.image(i);
            let y = data.test.label(i);
            if source.predict(x)? != y {
                continue;
            }
            for v in &victims {
                if v.predict(x)? != y {
                    continue 'inputs;
                }
            }
            keep.push(i);
            if keep.len() >= cfg.eval_count {
                break;
            }
        }
        if keep.len() < cfg.eval_count {
            eprintln!(
                "campaign: only {} of the requested {} eval inputs survived filtering",
                keep.len(),
                cfg.eval_count
            );
        }
        if keep.is_empty() {
            return Err(Error::InvalidConfig(
                "no test inputs are correctly classified by all models".into(),
            ));
        }
        let eval = data.test.select(&keep);

        let k = cfg
            .split_k
            .unwrap_or(zoo::arch(source.arch_id())?.default_split);
        let split = source.split(k)?;
        Ok(Campaign {
            cfg,
            source,
            victims,
            split,
            eval,
        })
    }

    fn sigma_in(&self) -> f32 {
        match self.cfg.attack.norm {
            Norm::Linf => self.cfg.attack.epsilon,
            Norm::L2 => self.cfg.attack.epsilon / (self.eval.dim() as f32).sqrt(),
        }
    }

    /// Run the given methods over the eval set and assemble the transfer
    /// report. Baseline trajectories are computed once per distinct
    /// baseline and shared by every method that consumes them.
    pub fn run_methods(&self, methods: &[MethodSpec]) -> Result<TransferReport> {
        let t0 = Instant::now();
        let names: Vec<String> = methods.iter().map(|m| m.name(&self.cfg.guide)).collect();

        let mut baselines: Vec<BaselineKind> = methods
            .iter()
            .map(|m| match m {
                MethodSpec::Baseline(b) => *b,
                MethodSpec::Refined { baseline, .. } => *baseline,
            })
            .collect();
        baselines.sort();
        baselines.dedup();

        let per_input: Result<Vec<MethodOutputs>> = (0..self.eval.len())
            .into_par_iter()
            .map(|i| self.run_input(i, methods, &baselines))
            .collect();
        let per_input = per_input?;
        let attack_secs = t0.elapsed().as_secs_f64();

        let t1 = Instant::now();
        let mut cells = Vec::new();
        for (mi, name) in names.iter().enumerate() {
            // discrepancy stats in input order
            let mags: Vec<f64> = per_input.iter().map(|row| row[mi].1).collect();
            let mean = mags.iter().sum::<f64>() / mags.len() as f64;
            let var = mags.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>()
                / mags.len() as f64;
            let std = var.sqrt();

            let mut all_models: Vec<&Model> = vec![self.source];
            all_models.extend(self.victims.iter().copied());
            for model in all_models {
                let mut wrong = 0usize;
                for (i, row) in per_input.iter().enumerate() {
                    let pred = model.predict(&row[mi].0)?;
                    if pred != self.eval.label(i) {
                        wrong += 1;
                    }
                }
                cells.push(ReportCell {
                    method: name.clone(),
                    norm: self.cfg.attack.norm,
                    epsilon: self.cfg.attack.epsilon,
                    victim: model.model_id(),
                    success_rate: wrong as f64 / per_input.len() as f64,
                    mean_discrepancy: mean,
                    std_discrepancy: std,
                    n_inputs: per_input.len(),
                    seed: self.cfg.seed,
                });
            }
        }
        let eval_secs = t1.elapsed().as_secs_f64();

        Ok(TransferReport {
            source_id: self.source.model_id(),
            seed: self.cfg.seed,
            config_hash: self.cfg.hash(),
            n_inputs: per_input.len(),
            cells,
            stage_secs: vec![
                ("attack+refine".into(), attack_secs),
                ("evaluate".into(), eval_secs),
            ],
        })
    }

    /// Produce (adversarial example, discrepancy magnitude) per method for
    /// one input.
    fn run_input(
        &self,
        index: usize,
        methods: &[MethodSpec],
        baselines: &[BaselineKind],
    ) -> Result<MethodOutputs> {
        let x = self.eval.image(index).to_vec();
        let y = self.eval.label(index);

        let mut trajs: BTreeMap<BaselineKind, Vec<Trajectory>> = BTreeMap::new();
        for &b in baselines {
            let mut acfg = self.cfg.attack.clone();
            acfg.input_index = index as u32;
            let list = match b {
                BaselineKind::IFgsm => {
                    acfg.runs = 1;
                    acfg.random_init = false;
                    vec![attack::ifgsm(&self.split, &x, y, &acfg)?]
                }
                BaselineKind::Pgd { runs } => {
                    acfg.runs = runs;
                    acfg.random_init = true;
                    attack::pgd_multirun(&self.split, &x, y, &acfg)?
                }
                BaselineKind::LinBp { runs } => {
                    acfg.runs = runs;
                    acfg.random_init = runs > 1;
                    attack::linbp_multirun(&self.split, &x, y, &acfg, self.cfg.linbp_relus)?
                }
            };
            trajs.insert(b, list);
        }

        let mut out = Vec::with_capacity(methods.len());
        for method in methods {
            let adv = match method {
                MethodSpec::Baseline(b) => trajs[b][0].final_x.clone(),
                MethodSpec::Refined { baseline, guide, normalized } => {
                    let rcfg = RefineConfig {
                        objective: if *normalized {
                            refine::Objective::Normalized
                        } else {
                            refine::Objective::Projection
                        },
                        ..self.cfg.refine.clone()
                    };
                    let list = &trajs[baseline];
                    let dir = self.fit_choice(index, &x, y, guide, list, *normalized)?;
                    refine::refine(&self.split, &x, &dir, &rcfg)?
                }
            };
            let mag = refine::discrepancy_magnitude(&self.split, &x, &adv)?;
            out.push((adv, mag));
        }
        Ok(out)
    }

    fn fit_choice(
        &self,
        index: usize,
        x: &[f32],
        y: usize,
        choice: &GuideChoice,
        trajs: &[Trajectory],
        normalized: bool,
    ) -> Result<guide::DirectionalGuide> {
        let defaults = &self.cfg.guide;
        let spec = match choice {
            GuideChoice::Rr => {
                let mut s = GuideSpec::with_method(GuideMethod::RrWoodbury);
                s.lambda = defaults.lambda;
                s
            }
            GuideChoice::RrApprox => GuideSpec::with_method(GuideMethod::RrApprox),
            GuideChoice::ElasticNet { lambda1 } => {
                let mut s = GuideSpec::with_method(GuideMethod::ElasticNet);
                s.lambda1 = lambda1.unwrap_or(defaults.lambda1);
                s.lambda2 = defaults.lambda2;
                s
            }
            GuideChoice::Svr => {
                let mut s = GuideSpec::with_method(GuideMethod::Svr);
                s.c = defaults.c;
                s.e = defaults.e;
                s
            }
            GuideChoice::Ila => {
                return refine::ila_guide(&trajs[0]);
            }
            GuideChoice::RandInput { regressor } => {
                let mut s = defaults.clone();
                s.method = GuideMethod::RandInput;
                s.rand_regressor = match regressor {
                    GuideMethod::Rr => GuideMethod::RrWoodbury,
                    other => *other,
                };
                let sigma = defaults.sigma_in.unwrap_or_else(|| self.sigma_in());
                let seed = crate::rng::derive_seed(self.cfg.seed, &[0x7a4d, index as u64]);
                return guide::random_guide_input(
                    &self.split,
                    x,
                    y,
                    self.cfg.attack.sample_count,
                    sigma,
                    seed,
                    &s,
                );
            }
            GuideChoice::RandFeature { regressor } => {
                let mut s = defaults.clone();
                s.method = GuideMethod::RandFeature;
                s.rand_regressor = match regressor {
                    GuideMethod::Rr => GuideMethod::RrWoodbury,
                    other => *other,
                };
                let sigma = match defaults.sigma_feat {
                    Some(v) => v,
                    None => feature_sigma(&trajs[0]),
                };
                let seed = crate::rng::derive_seed(self.cfg.seed, &[0x7a4e, index as u64]);
                return guide::random_guide_feature(
                    &self.split,
                    x,
                    y,
                    self.cfg.attack.sample_count,
                    sigma,
                    seed,
                    &s,
                );
            }
        };
        guide::fit_guide(trajs, &spec, normalized)
    }
}

/// Mean per-component scale of the trajectory's feature discrepancies;
/// calibrates the feature-space random guide.
fn feature_sigma(traj: &Trajectory) -> f32 {
    let m = traj.feature_dim() as f64;
    let mut total = 0.0f64;
    let mut count = 0usize;
    for s in traj.samples.iter().skip(1) {
        let n: f64 = s
            .feature
            .iter()
            .zip(&traj.anchor_feature)
            .map(|(a, b)| (*a as f64 - *b as f64).powi(2))
            .sum::<f64>()
            .sqrt();
        total += n;
        count += 1;
    }
    if count == 0 || total == 0.0 {
        return 0.1;
    }
    ((total / count as f64) / m.sqrt()) as f32
}

/// Accuracy check used by tests and the train subcommand.
pub fn zoo_accuracies(zoo: &Zoo) -> Vec<(String, f32)> {
    zoo.models
        .iter()
        .map(|m| {
            (
                m.model_id(),
                m.metadata().map_or(f32::NAN, |s| s.test_accuracy),
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip_through_parse() {
        let defaults = GuideSpec::default();
        for name in [
            "ifgsm",
            "pgd10",
            "linbp",
            "linbp10",
            "ifgsm+rr",
            "ifgsm+rra",
            "ifgsm+en",
            "ifgsm+en0.5",
            "ifgsm+svr",
            "ifgsm+ila",
            "pgd10+svr",
            "linbp10+rr",
            "ifgsm+rr-norm",
            "ifgsm+svr-norm",
            "rand-in+rr",
            "rand-feat+rr",
        ] {
            let parsed = MethodSpec::parse(name).unwrap();
            // rand guides normalize to their canonical short names
            let canonical = parsed.name(&defaults);
            let reparsed = MethodSpec::parse(&canonical).unwrap();
            assert_eq!(parsed, reparsed, "{name} vs {canonical}");
        }
        assert!(MethodSpec::parse("resnet+rr").is_err());
        assert!(MethodSpec::parse("ifgsm+unknown").is_err());
    }

    #[test]
    fn rand_guide_names_drop_the_baseline() {
        let defaults = GuideSpec::default();
        let m = MethodSpec::parse("rand-in+rr").unwrap();
        assert_eq!(m.name(&defaults), "rand-in");
        let m = MethodSpec::parse("rand-feat").unwrap();
        assert_eq!(m.name(&defaults), "rand-feat");
    }
}
