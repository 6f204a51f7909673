//! Build the discrepancy dataset from one baseline trajectory and compare
//! every guide fitter: primal ridge, the dual (Woodbury) route, the H^T r
//! approximation, ElasticNet, and SVR.
//!
//! Run with: cargo run --release --example fit_guides

use ilaf::attack::{ifgsm, AttackConfig};
use ilaf::guide::{
    build_dataset, fit_elasticnet, fit_rr, fit_rr_approx, fit_rr_woodbury, fit_svr,
};
use ilaf::nn::{dataset, train, zoo};
use std::time::Instant;

fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum();
    let na: f64 = a.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    dot / (na * nb).max(1e-300)
}

fn main() -> ilaf::Result<()> {
    let pair = dataset::synthetic(7, 2000, 400);
    let spec = zoo::arch("cnn-small")?;
    let mut model = zoo::build("cnn-small", 0)?;
    train::train(&mut model, &pair.train, &pair.test, spec.epochs, spec.lr, spec.batch)?;
    let split = model.split(spec.default_split)?;

    let x = pair.test.image(0);
    let y = pair.test.label(0);
    let traj = ifgsm(&split, x, y, &AttackConfig::default())?;
    let ds = build_dataset(std::slice::from_ref(&traj))?;
    println!(
        "discrepancy dataset: {} rows x {} features, losses {:.3} .. {:.3}",
        ds.rows(),
        ds.feature_dim(),
        ds.targets().first().unwrap(),
        ds.targets().last().unwrap()
    );

    let t = Instant::now();
    let rr = fit_rr(&ds, 1e10)?;
    let t_primal = t.elapsed();
    let t = Instant::now();
    let rrw = fit_rr_woodbury(&ds, 1e10)?;
    let t_dual = t.elapsed();
    let approx = fit_rr_approx(&ds)?;
    let en = fit_elasticnet(&ds, 0.05, 100.0)?;
    let svr = fit_svr(&ds, 1e-10, 0.0)?;

    println!("primal rr solve: {t_primal:.2?} (m x m), dual: {t_dual:.2?} (N x N)");
    println!("cosine(dual, primal)    = {:.9}", cosine(&rrw.w, &rr.w));
    println!("cosine(H^T r, primal)   = {:.9}", cosine(&approx.w, &rr.w));
    println!("cosine(elasticnet, rr)  = {:.6}", cosine(&en.w, &rr.w));
    println!("cosine(svr, rr)         = {:.6}", cosine(&svr.w, &rr.w));
    println!("elasticnet zero coords: {}/{}", en.zero_count(), en.w.len());
    Ok(())
}
