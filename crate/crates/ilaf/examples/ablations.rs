//! The two negative controls: the normalized-discrepancy objective and
//! random directional guides. Both should underperform the learned,
//! magnitude-growing refinement, and the random guides show that a large
//! discrepancy alone is not enough.
//!
//! Run with: cargo run --release --example ablations

use ilaf::harness::{Campaign, CampaignConfig, MethodSpec, Zoo};
use ilaf::nn::dataset;

fn main() -> ilaf::Result<()> {
    let mut cfg = CampaignConfig::default();
    cfg.n_train = 2000;
    cfg.n_test = 600;
    cfg.eval_count = 40;

    let data = dataset::synthetic(cfg.dataset_seed, cfg.n_train, cfg.n_test);
    let zoo = Zoo::train(&cfg, &data)?;
    let campaign = Campaign::prepare(cfg, &zoo, &data)?;

    let methods: Vec<MethodSpec> = [
        "ifgsm",
        "ifgsm+rr",
        "ifgsm+rr-norm",
        "ifgsm+svr",
        "ifgsm+svr-norm",
        "rand-in",
        "rand-feat",
    ]
    .iter()
    .map(|m| MethodSpec::parse(m))
    .collect::<ilaf::Result<_>>()?;
    let report = campaign.run_methods(&methods)?;

    println!("{:16} {:>10} {:>12}", "method", "victim-avg", "mean |disc|");
    for m in report.methods() {
        println!(
            "{:16} {:>10.3} {:>12.3}",
            m,
            report.victim_average(&m),
            report.mean_magnitude(&m)
        );
    }
    println!();
    println!("expected: *-norm underperforms its unnormalized twin, and the");
    println!("random guides trail every learned guide even when their");
    println!("discrepancy magnitude rivals the baseline's.");
    Ok(())
}
