//! The full pipeline in miniature: train a zoo, craft baselines on the
//! source, refine against fitted guides, and print the transfer matrix.
//!
//! Run with: cargo run --release --example refine_and_transfer

use ilaf::harness::{Campaign, CampaignConfig, MethodSpec, Zoo};
use ilaf::nn::dataset;
use std::time::Instant;

fn main() -> ilaf::Result<()> {
    let mut cfg = CampaignConfig::default();
    cfg.n_train = 2000;
    cfg.n_test = 600;
    cfg.eval_count = 40;

    println!("training the zoo (source: {})", cfg.source);
    let data = dataset::synthetic(cfg.dataset_seed, cfg.n_train, cfg.n_test);
    let zoo = Zoo::train(&cfg, &data)?;

    let campaign = Campaign::prepare(cfg, &zoo, &data)?;
    println!("evaluation set: {} filtered inputs", campaign.eval.len());

    let methods: Vec<MethodSpec> = ["ifgsm", "ifgsm+ila", "ifgsm+rr", "ifgsm+svr"]
        .iter()
        .map(|m| MethodSpec::parse(m))
        .collect::<ilaf::Result<_>>()?;
    let t0 = Instant::now();
    let report = campaign.run_methods(&methods)?;
    println!("campaign finished in {:.1?}", t0.elapsed());

    println!("\nsuccess rates (rows: method, columns: victim):");
    print!("{:14}", "");
    for cell in &report.cells[..report.cells.len() / report.methods().len()] {
        print!(" {:>12}", cell.victim);
    }
    println!(" {:>10}", "victim-avg");
    for m in report.methods() {
        print!("{m:14}");
        for c in report.cells.iter().filter(|c| c.method == m) {
            print!(" {:12.3}", c.success_rate);
        }
        println!(" {:10.3}", report.victim_average(&m));
    }
    println!("\nmean feature discrepancy by method:");
    for m in report.methods() {
        println!("  {m:14} {:.3}", report.mean_magnitude(&m));
    }
    Ok(())
}
