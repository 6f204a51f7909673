//! Train the model zoo on the built-in synthetic task and save checkpoints.
//!
//! Run with: cargo run --release --example train_zoo

use ilaf::harness::{CampaignConfig, Zoo};
use ilaf::nn::{checkpoint, dataset};
use std::time::Instant;

fn main() -> ilaf::Result<()> {
    let mut cfg = CampaignConfig::default();
    // desk-size defaults are fine; shrink for a quicker demo
    cfg.n_train = 2000;
    cfg.n_test = 600;

    println!("generating {} train / {} test samples", cfg.n_train, cfg.n_test);
    let data = dataset::synthetic(cfg.dataset_seed, cfg.n_train, cfg.n_test);

    let t0 = Instant::now();
    let zoo = Zoo::train(&cfg, &data)?;
    println!("trained {} models in {:.1?}", zoo.models.len(), t0.elapsed());

    let out = std::path::Path::new("target/zoo-demo");
    for m in &zoo.models {
        let stats = m.metadata().expect("trained");
        println!(
            "  {:14} train acc {:.3}  test acc {:.3}",
            m.model_id(),
            stats.train_accuracy,
            stats.test_accuracy
        );
        checkpoint::save(m, &out.join(format!("{}.ckpt", m.model_id())))?;
    }
    println!("checkpoints in {}", out.display());

    // round-trip sanity: reload one checkpoint and compare parameters
    let back = checkpoint::load(&out.join(format!("{}.ckpt", zoo.models[0].model_id())))?;
    assert_eq!(back.params_checksum(), zoo.models[0].params_checksum());
    println!("checkpoint round-trip verified");
    Ok(())
}
