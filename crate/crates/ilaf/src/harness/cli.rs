//! The file-driven pipeline behind the `ilaf` binary.
//!
//! Subcommands: dataset, train, attack, fit-guide, refine, evaluate, sweep,
//! report. Every flag has a config-file equivalent (see `config::KNOWN_KEYS`);
//! `--config` loads a file and explicit flags override it. Exit codes:
//! 0 success, 2 configuration error, 3 runtime failure.

use super::campaign::{Campaign, CampaignConfig, MethodSpec, Zoo};
use super::config::Config;
use super::report::{emit_reports, emit_series, load_report};
use super::sweep::{run_sweep, SweepAxis};
use crate::attack::{self, Norm, SampleStrategy, Trajectory};
use crate::error::{Error, Result};
use crate::guide::{self};
use crate::nn::{checkpoint, dataset, zoo as nnzoo};
use crate::refine::{self, batch::AdvBatch, batch::AdvRecord};
use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "ilaf", version, about = "Desk-scale intermediate-level transfer attack laboratory")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate the built-in dataset (or ingest IDX files) into a directory.
    Dataset(DatasetArgs),
    /// Train the model zoo and write checkpoints.
    Train(TrainArgs),
    /// Run a baseline attack over the evaluation set, dumping trajectories.
    Attack(AttackArgs),
    /// Fit directional guides from dumped trajectories.
    FitGuide(FitGuideArgs),
    /// Refine inputs against fitted guides into an adversarial batch.
    Refine(RefineArgs),
    /// Evaluate an adversarial batch against the zoo.
    Evaluate(EvaluateArgs),
    /// Drive the full pipeline over a hyper-parameter sweep.
    Sweep(SweepArgs),
    /// Re-emit report files from a stored report.json.
    Report(ReportArgs),
}

#[derive(Args, Clone, Default)]
struct CommonArgs {
    /// Flat key-value config file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed (campaign.seed).
    #[arg(long)]
    seed: Option<u64>,
    /// Dataset seed (dataset.seed).
    #[arg(long)]
    dataset_seed: Option<u64>,
    /// Training-set size (dataset.train).
    #[arg(long)]
    train_count: Option<usize>,
    /// Test-set size (dataset.test).
    #[arg(long)]
    test_count: Option<usize>,
    /// Source model id (campaign.source).
    #[arg(long)]
    source: Option<String>,
    /// Evaluation-set size after filtering (campaign.eval_count).
    #[arg(long)]
    eval_count: Option<usize>,
    /// Split depth override (campaign.split_k).
    #[arg(long)]
    split_k: Option<usize>,
    /// Constraint norm: linf or l2 (attack.norm).
    #[arg(long)]
    norm: Option<String>,
    /// Perturbation budget (attack.epsilon).
    #[arg(long)]
    epsilon: Option<f32>,
    /// Attack step size (attack.alpha).
    #[arg(long)]
    alpha: Option<f32>,
    /// Baseline iterations T (attack.iterations).
    #[arg(long)]
    iterations: Option<usize>,
    /// Trajectory sample count p (attack.samples).
    #[arg(long)]
    samples: Option<usize>,
    /// Sampling strategy: even, first-p, last-p (attack.strategy).
    #[arg(long)]
    strategy: Option<String>,
    /// Baseline runs R (attack.runs).
    #[arg(long)]
    runs_count: Option<usize>,
    /// Relus in linear backward mode for LinBP (attack.linbp_relus).
    #[arg(long)]
    linbp_relus: Option<usize>,
    /// Refinement iterations T_r (refine.iterations).
    #[arg(long)]
    refine_iterations: Option<usize>,
    /// Refinement objective: projection or normalized (refine.objective).
    #[arg(long)]
    objective: Option<String>,
    /// Ridge strength (guide.lambda).
    #[arg(long)]
    lambda: Option<f64>,
    /// ElasticNet l1 strength (guide.lambda1).
    #[arg(long)]
    lambda1: Option<f64>,
    /// ElasticNet l2 strength (guide.lambda2).
    #[arg(long)]
    lambda2: Option<f64>,
    /// SVR penalty (guide.c).
    #[arg(long)]
    c: Option<f64>,
    /// SVR tube half-width (guide.e).
    #[arg(long)]
    e: Option<f64>,
}

impl CommonArgs {
    fn build(&self) -> Result<Config> {
        let mut cfg = match &self.config {
            Some(path) => Config::load(path)?,
            None => Config::new(),
        };
        cfg.validate_keys()?;
        macro_rules! over {
            ($field:expr, $key:literal) => {
                if let Some(v) = &$field {
                    cfg.set($key, v);
                }
            };
        }
        over!(self.seed, "campaign.seed");
        over!(self.dataset_seed, "dataset.seed");
        over!(self.train_count, "dataset.train");
        over!(self.test_count, "dataset.test");
        over!(self.source, "campaign.source");
        over!(self.eval_count, "campaign.eval_count");
        over!(self.split_k, "campaign.split_k");
        over!(self.norm, "attack.norm");
        over!(self.epsilon, "attack.epsilon");
        over!(self.alpha, "attack.alpha");
        over!(self.iterations, "attack.iterations");
        over!(self.samples, "attack.samples");
        over!(self.strategy, "attack.strategy");
        over!(self.runs_count, "attack.runs");
        over!(self.linbp_relus, "attack.linbp_relus");
        over!(self.refine_iterations, "refine.iterations");
        over!(self.objective, "refine.objective");
        over!(self.lambda, "guide.lambda");
        over!(self.lambda1, "guide.lambda1");
        over!(self.lambda2, "guide.lambda2");
        over!(self.c, "guide.c");
        over!(self.e, "guide.e");
        Ok(cfg)
    }
}

/// Build a CampaignConfig from a merged flat config.
pub fn campaign_from_config(cfg: &Config) -> Result<CampaignConfig> {
    let mut out = CampaignConfig::default();
    out.seed = cfg.parse_num("campaign.seed", out.seed)?;
    out.dataset_seed = cfg.parse_num("dataset.seed", out.dataset_seed)?;
    out.n_train = cfg.parse_num("dataset.train", out.n_train)?;
    out.n_test = cfg.parse_num("dataset.test", out.n_test)?;
    let archs: Vec<String> = cfg.parse_list(
        "zoo.archs",
        &nnzoo::arch_ids().map(String::from),
    )?;
    let seeds: Vec<u64> = cfg.parse_list("zoo.seeds", &[0, 1])?;
    out.zoo = archs
        .iter()
        .flat_map(|a| seeds.iter().map(move |s| (a.clone(), *s)))
        .collect();
    out.train_fraction = cfg.parse_num("zoo.train_fraction", out.train_fraction)?;
    out.source = cfg.get_or("campaign.source", &out.source).to_string();
    out.split_k = cfg.parse_opt("campaign.split_k")?;
    out.eval_count = cfg.parse_num("campaign.eval_count", out.eval_count)?;
    out.attack.norm = Norm::parse(cfg.get_or("attack.norm", "linf"))?;
    out.attack.epsilon = cfg.parse_num("attack.epsilon", out.attack.epsilon)?;
    out.attack.alpha = cfg.parse_opt("attack.alpha")?;
    out.attack.iterations = cfg.parse_num("attack.iterations", out.attack.iterations)?;
    out.attack.sample_count = cfg.parse_num("attack.samples", out.attack.sample_count)?;
    out.attack.strategy = SampleStrategy::parse(cfg.get_or("attack.strategy", "even"))?;
    out.attack.runs = cfg.parse_num("attack.runs", out.attack.runs)?;
    out.attack.seed = out.seed;
    out.linbp_relus = cfg.parse_num("attack.linbp_relus", out.linbp_relus)?;
    out.refine.norm = out.attack.norm;
    out.refine.epsilon = out.attack.epsilon;
    out.refine.alpha = cfg.parse_opt("refine.alpha")?;
    out.refine.iterations = cfg.parse_num("refine.iterations", out.refine.iterations)?;
    out.refine.objective =
        refine::Objective::parse(cfg.get_or("refine.objective", "projection"))?;
    out.refine.start_from_baseline =
        cfg.parse_bool("refine.start_from_baseline", false)?;
    out.guide.lambda = cfg.parse_num("guide.lambda", out.guide.lambda)?;
    out.guide.lambda1 = cfg.parse_num("guide.lambda1", out.guide.lambda1)?;
    out.guide.lambda2 = cfg.parse_num("guide.lambda2", out.guide.lambda2)?;
    out.guide.c = cfg.parse_num("guide.c", out.guide.c)?;
    out.guide.e = cfg.parse_num("guide.e", out.guide.e)?;
    out.guide.sigma_in = cfg.parse_opt("guide.sigma_in")?;
    out.guide.sigma_feat = cfg.parse_opt("guide.sigma_feat")?;
    Ok(out)
}

fn methods_from(cfg: &Config, flag: &Option<String>) -> Result<Vec<MethodSpec>> {
    let spec = match flag {
        Some(s) => s.clone(),
        None => cfg
            .get("campaign.methods")
            .unwrap_or("ifgsm,ifgsm+rr,ifgsm+en,ifgsm+svr")
            .to_string(),
    };
    spec.split(',')
        .map(|m| MethodSpec::parse(m.trim()))
        .collect()
}

fn load_data(cfg: &CampaignConfig, data_dir: &Option<PathBuf>) -> Result<dataset::DatasetPair> {
    match data_dir {
        None => Ok(dataset::synthetic(cfg.dataset_seed, cfg.n_train, cfg.n_test)),
        Some(dir) => {
            let train = dataset::load_idx(
                &dir.join("train-images.idx"),
                &dir.join("train-labels.idx"),
            )?;
            let test = dataset::load_idx(
                &dir.join("test-images.idx"),
                &dir.join("test-labels.idx"),
            )?;
            Ok(dataset::DatasetPair { train, test })
        }
    }
}

fn load_zoo(dir: &Path) -> Result<Zoo> {
    let entries = std::fs::read_dir(dir).map_err(|_| {
        Error::InvalidConfig(format!(
            "zoo directory `{}` is missing; run `ilaf train` first",
            dir.display()
        ))
    })?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "ckpt"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "no checkpoints in `{}`; run `ilaf train` first",
            dir.display()
        )));
    }
    let models = paths
        .iter()
        .map(|p| checkpoint::load(p))
        .collect::<Result<Vec<_>>>()?;
    Ok(Zoo { models })
}

// ---------------------------------------------------------------------------

#[derive(Args)]
struct DatasetArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Ingest these IDX images instead of generating.
    #[arg(long, requires = "labels")]
    images: Option<PathBuf>,
    /// Labels that pair with --images.
    #[arg(long, requires = "images")]
    labels: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

fn cmd_dataset(args: &DatasetArgs) -> Result<()> {
    let cfg = campaign_from_config(&args.common.build()?)?;
    let pair = match (&args.images, &args.labels) {
        (Some(images), Some(labels)) => {
            let all = dataset::load_idx(images, labels)?;
            let n_train = cfg.n_train.min(all.len());
            let train_idx: Vec<usize> = (0..n_train).collect();
            let test_idx: Vec<usize> = (n_train..all.len()).collect();
            dataset::DatasetPair {
                train: all.select(&train_idx),
                test: all.select(&test_idx),
            }
        }
        _ => dataset::synthetic(cfg.dataset_seed, cfg.n_train, cfg.n_test),
    };
    dataset::save_idx(
        &pair.train,
        &args.out.join("train-images.idx"),
        &args.out.join("train-labels.idx"),
    )?;
    dataset::save_idx(
        &pair.test,
        &args.out.join("test-images.idx"),
        &args.out.join("test-labels.idx"),
    )?;
    println!(
        "dataset: wrote {} train / {} test samples to {}",
        pair.train.len(),
        pair.test.len(),
        args.out.display()
    );
    Ok(())
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Dataset directory from `ilaf dataset` (generated from seed if absent).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output directory for checkpoints.
    #[arg(long)]
    out: PathBuf,
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let cfg = campaign_from_config(&args.common.build()?)?;
    let data = load_data(&cfg, &args.data)?;
    let zoo = Zoo::train(&cfg, &data)?;
    std::fs::create_dir_all(&args.out)
        .map_err(|e| Error::io(args.out.display().to_string(), e))?;
    for m in &zoo.models {
        let path = args.out.join(format!("{}.ckpt", m.model_id()));
        checkpoint::save(m, &path)?;
        let stats = m.metadata().expect("trained model has stats");
        println!(
            "train: {} -> {} (train acc {:.3}, test acc {:.3})",
            m.model_id(),
            path.display(),
            stats.train_accuracy,
            stats.test_accuracy
        );
    }
    Ok(())
}

#[derive(Args)]
struct AttackArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Zoo directory with checkpoints.
    #[arg(long)]
    zoo: PathBuf,
    /// Baseline method: ifgsm, pgdN, linbp, linbpN.
    #[arg(long, default_value = "ifgsm")]
    method: String,
    /// Also store per-sample inputs in the dumps (out.store_x).
    #[arg(long)]
    store_x: bool,
    /// Output directory for trajectory dumps.
    #[arg(long)]
    out: PathBuf,
}

fn cmd_attack(args: &AttackArgs) -> Result<()> {
    let config = args.common.build()?;
    let cfg = campaign_from_config(&config)?;
    let data = load_data(&cfg, &args.data)?;
    let zoo = load_zoo(&args.zoo)?;
    let method = MethodSpec::parse(&args.method)?;
    let MethodSpec::Baseline(kind) = method else {
        return Err(Error::InvalidConfig(
            "attack expects a baseline method (ifgsm, pgdN, linbp, linbpN)".into(),
        ));
    };
    let campaign = Campaign::prepare(cfg, &zoo, &data)?;
    let store_x = args.store_x || config.parse_bool("out.store_x", false)?;

    std::fs::create_dir_all(&args.out)
        .map_err(|e| Error::io(args.out.display().to_string(), e))?;
    let mut files = 0usize;
    for i in 0..campaign.eval.len() {
        let x = campaign.eval.image(i).to_vec();
        let y = campaign.eval.label(i);
        let mut acfg = campaign.cfg.attack.clone();
        acfg.input_index = i as u32;
        let trajs: Vec<Trajectory> = match kind {
            super::campaign::BaselineKind::IFgsm => {
                acfg.runs = 1;
                acfg.random_init = false;
                vec![attack::ifgsm(&campaign.split, &x, y, &acfg)?]
            }
            super::campaign::BaselineKind::Pgd { runs } => {
                acfg.runs = runs;
                acfg.random_init = true;
                attack::pgd_multirun(&campaign.split, &x, y, &acfg)?
            }
            super::campaign::BaselineKind::LinBp { runs } => {
                acfg.runs = runs;
                acfg.random_init = runs > 1;
                attack::linbp_multirun(&campaign.split, &x, y, &acfg, campaign.cfg.linbp_relus)?
            }
        };
        for traj in &trajs {
            let path = args
                .out
                .join(format!("i{:04}_r{:02}.traj", traj.input_index, traj.run));
            attack::dump::save(traj, &path, store_x)?;
            files += 1;
        }
    }
    println!(
        "attack: {} over {} inputs -> {} trajectory files in {}",
        args.method,
        campaign.eval.len(),
        files,
        args.out.display()
    );
    Ok(())
}

#[derive(Args)]
struct FitGuideArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Directory of trajectory dumps.
    #[arg(long)]
    traj: PathBuf,
    /// Guide method: rr, rr_woodbury, rr_approx, elasticnet, svr, ila_huang.
    #[arg(long, default_value = "rr")]
    method: String,
    /// Fit on unit-normalized discrepancy rows.
    #[arg(long)]
    normalized: bool,
    /// Output directory for guide files.
    #[arg(long)]
    out: PathBuf,
}

fn cmd_fit_guide(args: &FitGuideArgs) -> Result<()> {
    let config = args.common.build()?;
    let cfg = campaign_from_config(&config)?;
    let method = guide::GuideMethod::parse(&args.method)?;

    let mut by_input: std::collections::BTreeMap<u32, Vec<Trajectory>> = Default::default();
    let entries = std::fs::read_dir(&args.traj)
        .map_err(|e| Error::io(args.traj.display().to_string(), e))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "traj"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "no trajectory dumps in `{}`; run `ilaf attack` first",
            args.traj.display()
        )));
    }
    for p in &paths {
        let t = attack::dump::load(p)?;
        by_input.entry(t.input_index).or_default().push(t);
    }

    std::fs::create_dir_all(&args.out)
        .map_err(|e| Error::io(args.out.display().to_string(), e))?;
    for (index, mut trajs) in by_input {
        trajs.sort_by_key(|t| t.run);
        let built = match method {
            guide::GuideMethod::IlaHuang => refine::ila_guide(&trajs[0])?,
            _ => {
                let mut spec = cfg.guide.clone();
                spec.method = method;
                guide::fit_guide(&trajs, &spec, args.normalized)?
            }
        };
        guide::file::save(&built, &args.out.join(format!("i{index:04}.guide")))?;
    }
    println!(
        "fit-guide: {} guides ({}) written to {}",
        paths.len(),
        args.method,
        args.out.display()
    );
    Ok(())
}

#[derive(Args)]
struct RefineArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    zoo: PathBuf,
    /// Directory of fitted guides.
    #[arg(long)]
    guides: PathBuf,
    /// Method label recorded in the batch (e.g. ifgsm+rr).
    #[arg(long, default_value = "ifgsm+rr")]
    method_name: String,
    /// Output batch file.
    #[arg(long)]
    out: PathBuf,
}

fn cmd_refine(args: &RefineArgs) -> Result<()> {
    let config = args.common.build()?;
    let cfg = campaign_from_config(&config)?;
    let data = load_data(&cfg, &args.data)?;
    let zoo = load_zoo(&args.zoo)?;
    let campaign = Campaign::prepare(cfg, &zoo, &data)?;

    let mut records = Vec::new();
    for i in 0..campaign.eval.len() {
        let path = args.guides.join(format!("i{i:04}.guide"));
        if !path.exists() {
            continue;
        }
        let g = guide::file::load(&path)?;
        let x = campaign.eval.image(i).to_vec();
        let adv = refine::refine(&campaign.split, &x, &g, &campaign.cfg.refine)?;
        records.push(AdvRecord {
            index: i as u32,
            label: campaign.eval.label(i) as u32,
            x: adv,
        });
    }
    if records.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "no guides in `{}` matched the evaluation set",
            args.guides.display()
        )));
    }
    let batch = AdvBatch {
        cfg_hash: campaign.cfg.hash(),
        method: args.method_name.clone(),
        source_id: campaign.source.model_id(),
        norm: campaign.cfg.attack.norm,
        epsilon: campaign.cfg.attack.epsilon,
        input_dim: campaign.eval.dim(),
        records,
    };
    refine::batch::save(&batch, &args.out)?;
    println!(
        "refine: {} examples ({}) -> {}",
        batch.records.len(),
        batch.method,
        args.out.display()
    );
    Ok(())
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    zoo: PathBuf,
    /// Adversarial batch file(s), comma separated.
    #[arg(long)]
    batch: String,
    /// Report output directory.
    #[arg(long)]
    out: PathBuf,
    /// Report formats: csv,json,plot.
    #[arg(long, default_value = "csv,json")]
    formats: String,
}

fn cmd_evaluate(args: &EvaluateArgs) -> Result<()> {
    let config = args.common.build()?;
    let cfg = campaign_from_config(&config)?;
    let data = load_data(&cfg, &args.data)?;
    let zoo = load_zoo(&args.zoo)?;
    let campaign = Campaign::prepare(cfg, &zoo, &data)?;

    let mut merged: Option<super::report::TransferReport> = None;
    for path in args.batch.split(',') {
        let batch = refine::batch::load(Path::new(path.trim()))?;
        let report = super::evaluate::evaluate_transfer(
            &batch,
            campaign.source,
            &campaign.split,
            &campaign.victims,
            &campaign.eval,
            campaign.cfg.seed,
        )?;
        merged = Some(match merged.take() {
            None => report,
            Some(mut acc) => {
                acc.cells.extend(report.cells);
                acc
            }
        });
    }
    let report = merged.expect("at least one batch");
    let formats: Vec<&str> = args.formats.split(',').map(str::trim).collect();
    let written = emit_reports(&report, &config.canonical(), &args.out, &formats)?;
    for m in report.methods() {
        println!(
            "evaluate: {} source {:.4} victim-avg {:.4}",
            m,
            report.source_success(&m),
            report.victim_average(&m)
        );
    }
    for w in written {
        println!("evaluate: wrote {}", w.display());
    }
    Ok(())
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Comma-separated run counts; shorthand for --axis runs.
    #[arg(long)]
    runs: Option<String>,
    /// Guide applied to the swept baseline (rr, en, svr, ...).
    #[arg(long)]
    guide: Option<String>,
    /// Sweep axis: runs, lambda1, lambda, c, epsilon.
    #[arg(long)]
    axis: Option<String>,
    /// Comma-separated axis values.
    #[arg(long)]
    values: Option<String>,
    /// Methods to run at each point (defaults derived from --guide).
    #[arg(long)]
    methods: Option<String>,
    /// Report output directory.
    #[arg(long)]
    out: PathBuf,
}

fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let config = args.common.build()?;
    let cfg = campaign_from_config(&config)?;

    let parse_f64s = |s: &str| -> Result<Vec<f64>> {
        s.split(',')
            .map(|v| {
                v.trim()
                    .parse()
                    .map_err(|_| Error::InvalidConfig(format!("bad sweep value `{v}`")))
            })
            .collect()
    };
    let (axis, default_methods) = match (&args.runs, &args.axis) {
        (Some(list), _) => {
            let runs: Vec<usize> = list
                .split(',')
                .map(|v| {
                    v.trim()
                        .parse()
                        .map_err(|_| Error::InvalidConfig(format!("bad run count `{v}`")))
                })
                .collect::<Result<_>>()?;
            let guide = args.guide.clone().unwrap_or_else(|| "rr".into());
            (SweepAxis::Runs(runs), format!("pgd1+{guide}"))
        }
        (None, Some(axis)) => {
            let values = args.values.as_deref().ok_or_else(|| {
                Error::InvalidConfig("--axis requires --values".into())
            })?;
            let guide = args.guide.clone().unwrap_or_else(|| "rr".into());
            let axis = match axis.as_str() {
                "runs" => SweepAxis::Runs(
                    parse_f64s(values)?.into_iter().map(|v| v as usize).collect(),
                ),
                "lambda1" => SweepAxis::Lambda1(parse_f64s(values)?),
                "lambda" => SweepAxis::Lambda(parse_f64s(values)?),
                "c" => SweepAxis::C(parse_f64s(values)?),
                "epsilon" => SweepAxis::Epsilon(
                    parse_f64s(values)?.into_iter().map(|v| v as f32).collect(),
                ),
                other => {
                    return Err(Error::InvalidConfig(format!("unknown sweep axis `{other}`")))
                }
            };
            let default = match &axis {
                SweepAxis::Runs(_) => format!("pgd1+{guide}"),
                SweepAxis::Lambda1(_) => "ifgsm+en".to_string(),
                _ => format!("ifgsm+{guide}"),
            };
            (axis, default)
        }
        (None, None) => {
            return Err(Error::InvalidConfig(
                "sweep needs --runs or --axis/--values".into(),
            ))
        }
    };
    let methods = methods_from(&config, &args.methods.clone().or(Some(default_methods)))?;

    println!("sweep: generating data and training the zoo");
    let data = load_data(&cfg, &None)?;
    let zoo = Zoo::train(&cfg, &data)?;
    let results = run_sweep(&cfg, &methods, &axis, &zoo, &data)?;

    let mut series: Vec<(f64, f64, String)> = Vec::new();
    for (point, report) in &results {
        let sub = args.out.join(format!("{}_{point}", axis.name()));
        emit_reports(report, &config.canonical(), &sub, &["csv", "json"])?;
        for m in report.methods() {
            let avg = report.victim_average(&m);
            println!("sweep: {}={point} {m} victim-avg {:.4}", axis.name(), avg);
            series.push((*point, avg, m));
        }
    }
    let path = emit_series(&args.out, &format!("sweep_{}", axis.name()), &series)?;
    println!("sweep: wrote {}", path.display());
    Ok(())
}

#[derive(Args)]
struct ReportArgs {
    /// Directory containing a report.json from a previous run.
    #[arg(long)]
    from: PathBuf,
    /// Output directory (defaults to --from).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Report formats: csv,json,plot.
    #[arg(long, default_value = "csv,plot")]
    formats: String,
}

fn cmd_report(args: &ReportArgs) -> Result<()> {
    let report = load_report(&args.from.join("report.json"))?;
    let out = args.out.clone().unwrap_or_else(|| args.from.clone());
    let formats: Vec<&str> = args.formats.split(',').map(str::trim).collect();
    let written = emit_reports(&report, "", &out, &formats)?;
    for w in written {
        println!("report: wrote {}", w.display());
    }
    Ok(())
}

/// Exit code classification: configuration errors are 2, runtime failures 3.
fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidConfig(_)
        | Error::UnknownArch(_)
        | Error::SplitOutOfRange { .. }
        | Error::Format { .. }
        | Error::TooFewPoints { .. } => 2,
        Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => 2,
        _ => 3,
    }
}

/// Run the CLI on the given arguments (without the binary name).
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let argv: Vec<String> = std::iter::once("ilaf".to_string())
        .chain(args.into_iter().map(Into::into))
        .collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            // clap handles --help/--version as "errors" with success status
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.cmd {
        Cmd::Dataset(a) => cmd_dataset(a),
        Cmd::Train(a) => cmd_train(a),
        Cmd::Attack(a) => cmd_attack(a),
        Cmd::FitGuide(a) => cmd_fit_guide(a),
        Cmd::Refine(a) => cmd_refine(a),
        Cmd::Evaluate(a) => cmd_evaluate(a),
        Cmd::Sweep(a) => cmd_sweep(a),
        Cmd::Report(a) => cmd_report(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_flags_are_rejected() {
        assert_eq!(run(["dataset", "--out", "/tmp/x", "--bogus-flag"]), 2);
    }

    #[test]
    fn unknown_subcommand_is_rejected() {
        assert_eq!(run(["explode"]), 2);
    }

    #[test]
    fn evaluate_without_a_zoo_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("nozoo");
        let code = run([
            "evaluate",
            "--zoo",
            missing.to_str().unwrap(),
            "--batch",
            "whatever.advb",
            "--out",
            dir.path().to_str().unwrap(),
        ]);
        assert_eq!(code, 2);
    }
}
