//! End-to-end checks of the file-driven pipeline: every subcommand, the
//! config-file/flag equivalence, exit codes, and byte-stable re-emission.

use ilaf::harness::cli::run;
use std::fs;
use std::path::Path;

fn s(p: &Path) -> String {
    p.to_str().unwrap().to_string()
}

/// Tiny campaign settings shared by the pipeline stages.
fn tiny_config(dir: &Path) -> String {
    let cfg = dir.join("tiny.cfg");
    fs::write(
        &cfg,
        "# tiny pipeline settings\n\
         dataset.seed = 11\n\
         dataset.train = 400\n\
         dataset.test = 160\n\
         zoo.archs = mlp-2,cnn-small\n\
         zoo.seeds = 0\n\
         campaign.source = cnn-small:s0\n\
         campaign.eval_count = 6\n\
         attack.iterations = 12\n\
         attack.samples = 4\n\
         refine.iterations = 12\n",
    )
    .unwrap();
    s(&cfg)
}

#[test]
fn full_pipeline_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let data = dir.path().join("data");
    let zoo = dir.path().join("zoo");
    let traj = dir.path().join("traj");
    let guides = dir.path().join("guides");
    let batch = dir.path().join("ifgsm+rr.advb");
    let report = dir.path().join("report");

    assert_eq!(run(["dataset", "--config", &cfg, "--out", &s(&data)]), 0);
    for f in [
        "train-images.idx",
        "train-labels.idx",
        "test-images.idx",
        "test-labels.idx",
    ] {
        assert!(data.join(f).exists(), "missing {f}");
    }

    assert_eq!(run(["train", "--config", &cfg, "--out", &s(&zoo)]), 0);
    assert!(zoo.join("cnn-small:s0.ckpt").exists());
    assert!(zoo.join("mlp-2:s0.ckpt").exists());

    assert_eq!(
        run([
            "attack", "--config", &cfg, "--zoo", &s(&zoo), "--method", "ifgsm", "--out",
            &s(&traj),
        ]),
        0
    );
    let traj_files = fs::read_dir(&traj).unwrap().count();
    assert!(traj_files >= 1, "no trajectory dumps written");

    assert_eq!(
        run([
            "fit-guide", "--config", &cfg, "--traj", &s(&traj), "--method", "rr_woodbury",
            "--out", &s(&guides),
        ]),
        0
    );

    assert_eq!(
        run([
            "refine", "--config", &cfg, "--zoo", &s(&zoo), "--guides", &s(&guides),
            "--method-name", "ifgsm+rr", "--out", &s(&batch),
        ]),
        0
    );
    assert!(batch.exists());

    assert_eq!(
        run([
            "evaluate", "--config", &cfg, "--zoo", &s(&zoo), "--batch", &s(&batch), "--out",
            &s(&report), "--formats", "csv,json,plot",
        ]),
        0
    );
    let csv = fs::read_to_string(report.join("report.csv")).unwrap();
    assert!(csv.starts_with(
        "method,norm,epsilon,victim,success_rate,mean_discrepancy,std_discrepancy,n_inputs,seed"
    ));
    // one row per model (source + victim)
    assert_eq!(csv.lines().count(), 1 + 2);

    // re-emitting from report.json reproduces the CSV byte for byte
    let before = fs::read(report.join("report.csv")).unwrap();
    assert_eq!(
        run(["report", "--from", &s(&report), "--formats", "csv"]),
        0
    );
    let after = fs::read(report.join("report.csv")).unwrap();
    assert_eq!(before, after);

    // the manifest round-trips the config hash
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(report.join("manifest.json")).unwrap()).unwrap();
    assert!(manifest["config_hash"].as_u64().is_some());
}

#[test]
fn flags_are_equivalent_to_config_keys() {
    let dir = tempfile::tempdir().unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let cfg = dir.path().join("gen.cfg");
    fs::write(&cfg, "dataset.seed = 21\ndataset.train = 50\ndataset.test = 30\n").unwrap();

    assert_eq!(run(["dataset", "--config", &s(&cfg), "--out", &s(&out_a)]), 0);
    assert_eq!(
        run([
            "dataset",
            "--dataset-seed",
            "21",
            "--train-count",
            "50",
            "--test-count",
            "30",
            "--out",
            &s(&out_b),
        ]),
        0
    );
    for f in ["train-images.idx", "test-labels.idx"] {
        assert_eq!(
            fs::read(out_a.join(f)).unwrap(),
            fs::read(out_b.join(f)).unwrap(),
            "flag/config divergence in {f}"
        );
    }
}

#[test]
fn benign_batch_scores_zero_on_every_model() {
    // The evaluation set is filtered to inputs every model classifies
    // correctly, so a batch of unmodified inputs cannot fool anyone.
    use ilaf::harness::{evaluate_transfer, Campaign, CampaignConfig, Zoo};
    use ilaf::refine::batch::{AdvBatch, AdvRecord};

    let mut cfg = CampaignConfig::default();
    cfg.n_train = 400;
    cfg.n_test = 160;
    cfg.eval_count = 8;
    cfg.zoo = vec![("mlp-2".into(), 0), ("cnn-small".into(), 0)];
    cfg.source = "cnn-small:s0".into();
    let data = ilaf::nn::dataset::synthetic(cfg.dataset_seed, cfg.n_train, cfg.n_test);
    let zoo = Zoo::train(&cfg, &data).unwrap();
    let campaign = Campaign::prepare(cfg, &zoo, &data).unwrap();

    let records: Vec<AdvRecord> = (0..campaign.eval.len())
        .map(|i| AdvRecord {
            index: i as u32,
            label: campaign.eval.label(i) as u32,
            x: campaign.eval.image(i).to_vec(),
        })
        .collect();
    let batch = AdvBatch {
        cfg_hash: 0,
        method: "benign".into(),
        source_id: campaign.source.model_id(),
        norm: ilaf::attack::Norm::Linf,
        epsilon: 0.0,
        input_dim: campaign.eval.dim(),
        records,
    };
    let report = evaluate_transfer(
        &batch,
        campaign.source,
        &campaign.split,
        &campaign.victims,
        &campaign.eval,
        7,
    )
    .unwrap();
    for cell in &report.cells {
        assert_eq!(cell.success_rate, 0.0, "victim {}", cell.victim);
        assert_eq!(cell.mean_discrepancy, 0.0);
    }
}

#[test]
fn shipped_default_config_is_valid() {
    let text = include_str!("../../../configs/default.cfg");
    let cfg = ilaf::harness::Config::parse(text).unwrap();
    cfg.validate_keys().unwrap();
    assert_eq!(cfg.get("guide.lambda"), Some("1e10"));
    // empty values fall back to defaults
    assert_eq!(cfg.get("attack.alpha"), None);
}

#[test]
fn unknown_config_keys_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "attack.epsilonn = 0.05\n").unwrap();
    assert_eq!(
        run(["dataset", "--config", &s(&cfg), "--out", &s(&dir.path().join("x"))]),
        2
    );
}

#[test]
fn evaluate_without_zoo_exits_2_with_guidance() {
    let dir = tempfile::tempdir().unwrap();
    let code = run([
        "evaluate",
        "--zoo",
        &s(&dir.path().join("missing")),
        "--batch",
        "nothing.advb",
        "--out",
        &s(&dir.path().join("out")),
    ]);
    assert_eq!(code, 2);
}

#[test]
fn ingested_idx_data_trains_too() {
    // generate, then ingest the generated IDX as if it were external data
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let data = dir.path().join("data");
    let data2 = dir.path().join("data2");
    assert_eq!(run(["dataset", "--config", &cfg, "--out", &s(&data)]), 0);
    assert_eq!(
        run([
            "dataset",
            "--config",
            &cfg,
            "--images",
            &s(&data.join("train-images.idx")),
            "--labels",
            &s(&data.join("train-labels.idx")),
            "--out",
            &s(&data2),
        ]),
        0
    );
    assert!(data2.join("train-images.idx").exists());
}
