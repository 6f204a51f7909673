//! Craft baseline adversarial examples (I-FGSM, PGD, LinBP) on a source
//! model and watch the sampled losses climb.
//!
//! Run with: cargo run --release --example baseline_attack

use ilaf::attack::{ifgsm, linbp_attack, pgd_multirun, AttackConfig};
use ilaf::nn::{dataset, train, zoo};

fn main() -> ilaf::Result<()> {
    let pair = dataset::synthetic(7, 2000, 400);
    let spec = zoo::arch("cnn-small")?;
    let mut model = zoo::build("cnn-small", 0)?;
    let stats = train::train(&mut model, &pair.train, &pair.test, spec.epochs, spec.lr, spec.batch)?;
    println!("source cnn-small:s0 test acc {:.3}", stats.test_accuracy);

    let split = model.split(spec.default_split)?;
    let cfg = AttackConfig::default(); // l-inf, eps 8/255, T = 100, p = 10

    let mut flips = [0usize; 3];
    let mut total = 0usize;
    for i in 0..pair.test.len() {
        let x = pair.test.image(i);
        let y = pair.test.label(i);
        if model.predict(x)? != y {
            continue;
        }
        total += 1;
        let traj = ifgsm(&split, x, y, &cfg)?;
        if total == 1 {
            println!("sampled losses of the first input:");
            for s in &traj.samples {
                println!("  t = {:3}  loss {:.4}", s.t, s.loss);
            }
        }
        if model.predict(&traj.final_x)? != y {
            flips[0] += 1;
        }

        let mut pcfg = cfg.clone();
        pcfg.runs = 3;
        pcfg.random_init = true;
        pcfg.input_index = i as u32;
        let runs = pgd_multirun(&split, x, y, &pcfg)?;
        if model.predict(&runs[0].final_x)? != y {
            flips[1] += 1;
        }

        let lin = linbp_attack(&split, x, y, &cfg, 2)?;
        if model.predict(&lin.final_x)? != y {
            flips[2] += 1;
        }
        if total >= 25 {
            break;
        }
    }
    println!("source success over {total} inputs at eps = 8/255:");
    println!("  i-fgsm {}/{total}", flips[0]);
    println!("  pgd x3 {}/{total}  (first run)", flips[1]);
    println!("  linbp  {}/{total}", flips[2]);
    Ok(())
}
