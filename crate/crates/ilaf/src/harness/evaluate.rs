//! Transfer evaluation from persisted adversarial batches, plus the
//! magnitude/success correlation report.

use crate::error::{Error, Result};
use crate::nn::{Dataset, Model, SplitModel};
use crate::refine::batch::AdvBatch;
use crate::refine::discrepancy_magnitude;
use crate::harness::report::{ReportCell, TransferReport};
use std::fmt::Write as _;

/// Evaluate one adversarial batch against the source and victim models.
///
/// Batch indices refer to rows of the filtered evaluation set; labels must
/// agree with it. Discrepancy statistics are recomputed on the source split,
/// so a report cell is reproducible from checkpoints plus the batch file
/// alone.
pub fn evaluate_transfer(
    batch: &AdvBatch,
    source: &Model,
    split: &SplitModel,
    victims: &[&Model],
    eval: &Dataset,
    seed: u64,
) -> Result<TransferReport> {
    if batch.records.is_empty() {
        return Err(Error::InvalidConfig("empty adversarial batch".into()));
    }
    for v in victims.iter().copied().chain([source]) {
        if v.metadata().is_none() {
            return Err(Error::InvalidConfig(format!(
                "model {} is untrained",
                v.model_id()
            )));
        }
    }
    for rec in &batch.records {
        let i = rec.index as usize;
        if i >= eval.len() || eval.label(i) != rec.label as usize {
            return Err(Error::InvalidConfig(format!(
                "batch record {} does not match the evaluation set",
                rec.index
            )));
        }
        if rec.x.len() != eval.dim() {
            return Err(Error::ShapeMismatch {
                op: "evaluate_transfer",
                detail: format!("record dim {} vs eval dim {}", rec.x.len(), eval.dim()),
            });
        }
    }

    let mags: Vec<f64> = batch
        .records
        .iter()
        .map(|rec| discrepancy_magnitude(split, eval.image(rec.index as usize), &rec.x))
        .collect::<Result<_>>()?;
    let mean = mags.iter().sum::<f64>() / mags.len() as f64;
    let std = (mags.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>() / mags.len() as f64)
        .sqrt();

    let mut cells = Vec::new();
    for model in std::iter::once(&source).chain(victims.iter()) {
        let mut wrong = 0usize;
        for rec in &batch.records {
            if model.predict(&rec.x)? != rec.label as usize {
                wrong += 1;
            }
        }
        cells.push(ReportCell {
            method: batch.method.clone(),
            norm: batch.norm,
            epsilon: batch.epsilon,
            victim: model.model_id(),
            success_rate: wrong as f64 / batch.records.len() as f64,
            mean_discrepancy: mean,
            std_discrepancy: std,
            n_inputs: batch.records.len(),
            seed,
        });
    }

    Ok(TransferReport {
        source_id: source.model_id(),
        seed,
        config_hash: batch.cfg_hash,
        n_inputs: batch.records.len(),
        cells,
        stage_secs: Vec::new(),
    })
}

/// Pearson correlation over method-level (magnitude, success) pairs, plus
/// the underlying table.
pub fn correlation_report(points: &[(String, f64, f64)]) -> Result<(f64, String)> {
    if points.len() < 3 {
        return Err(Error::TooFewPoints {
            need: 3,
            got: points.len(),
        });
    }
    let n = points.len() as f64;
    let mean_x = points.iter().map(|p| p.1).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.2).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (_, x, y) in points {
        sxx += (x - mean_x) * (x - mean_x);
        syy += (y - mean_y) * (y - mean_y);
        sxy += (x - mean_x) * (y - mean_y);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::DegenerateVariance);
    }
    let r = sxy / (sxx.sqrt() * syy.sqrt());

    let mut table = String::from("method,mean_magnitude,victim_avg_success\n");
    for (name, x, y) in points {
        let _ = writeln!(table, "{name},{x:.6},{y:.6}");
    }
    Ok((r, table))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(vals: &[(f64, f64)]) -> Vec<(String, f64, f64)> {
        vals.iter()
            .enumerate()
            .map(|(i, &(x, y))| (format!("m{i}"), x, y))
            .collect()
    }

    #[test]
    fn correlation_sign_and_affine_invariance() {
        let base = pts(&[(1.0, 0.1), (2.0, 0.3), (3.0, 0.35), (4.0, 0.6)]);
        let (r, table) = correlation_report(&base).unwrap();
        assert!(r > 0.9);
        assert_eq!(table.lines().count(), 5);

        // positive affine rescaling of magnitudes leaves r unchanged
        let scaled: Vec<_> = base
            .iter()
            .map(|(n, x, y)| (n.clone(), 3.5 * x + 10.0, *y))
            .collect();
        let (r2, _) = correlation_report(&scaled).unwrap();
        assert!((r - r2).abs() < 1e-12);
    }

    #[test]
    fn degenerate_variance_is_an_error() {
        let flat = pts(&[(2.0, 0.1), (2.0, 0.3), (2.0, 0.6)]);
        assert!(matches!(
            correlation_report(&flat),
            Err(Error::DegenerateVariance)
        ));
    }

    #[test]
    fn too_few_points_is_an_error() {
        let two = pts(&[(1.0, 0.1), (2.0, 0.2)]);
        assert!(matches!(
            correlation_report(&two),
            Err(Error::TooFewPoints { .. })
        ));
    }
}
