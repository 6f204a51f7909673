//! Guide diversification: sweep the number of random-restart baseline runs
//! feeding the regression, and report how the victim average moves.
//!
//! Run with: cargo run --release --example multirun_sweep

use ilaf::harness::{run_sweep, CampaignConfig, MethodSpec, SweepAxis, Zoo};
use ilaf::nn::dataset;

fn main() -> ilaf::Result<()> {
    let mut cfg = CampaignConfig::default();
    cfg.n_train = 2000;
    cfg.n_test = 600;
    cfg.eval_count = 30;

    let data = dataset::synthetic(cfg.dataset_seed, cfg.n_train, cfg.n_test);
    let zoo = Zoo::train(&cfg, &data)?;

    let methods = vec![
        MethodSpec::parse("pgd1+rr")?,
        MethodSpec::parse("pgd1+svr")?,
    ];
    let axis = SweepAxis::Runs(vec![1, 5, 10]);
    let results = run_sweep(&cfg, &methods, &axis, &zoo, &data)?;

    println!("{:>6} {:>12} {:>12}", "runs", "rr", "svr");
    for (point, report) in &results {
        let names = report.methods();
        println!(
            "{:>6} {:>12.3} {:>12.3}",
            point,
            report.victim_average(&names[0]),
            report.victim_average(&names[1]),
        );
    }
    Ok(())
}
