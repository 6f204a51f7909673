//! Discrepancy magnitude vs transferability: run the four core methods and
//! report the Pearson correlation between method-mean feature distortion
//! and victim-average success.
//!
//! Run with: cargo run --release --example correlation

use ilaf::harness::{correlation_report, Campaign, CampaignConfig, MethodSpec, Zoo};
use ilaf::nn::dataset;

fn main() -> ilaf::Result<()> {
    let mut cfg = CampaignConfig::default();
    cfg.n_train = 2000;
    cfg.n_test = 600;
    cfg.eval_count = 40;

    let data = dataset::synthetic(cfg.dataset_seed, cfg.n_train, cfg.n_test);
    let zoo = Zoo::train(&cfg, &data)?;
    let campaign = Campaign::prepare(cfg, &zoo, &data)?;

    let methods: Vec<MethodSpec> = ["ifgsm", "ifgsm+rr", "ifgsm+en", "ifgsm+svr"]
        .iter()
        .map(|m| MethodSpec::parse(m))
        .collect::<ilaf::Result<_>>()?;
    let report = campaign.run_methods(&methods)?;

    let points: Vec<(String, f64, f64)> = report
        .methods()
        .into_iter()
        .map(|m| {
            let mag = report.mean_magnitude(&m);
            let avg = report.victim_average(&m);
            (m, mag, avg)
        })
        .collect();
    let (r, table) = correlation_report(&points)?;
    println!("{table}");
    println!("pearson r = {r:.4}");
    Ok(())
}
