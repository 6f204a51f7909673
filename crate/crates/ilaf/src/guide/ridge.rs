//! Ridge-regression guides: the m x m primal solve, the N x N dual solve,
//! and the H^T r approximation that drops the solve entirely.

use super::linalg;
use super::{guide_from, DirectionalGuide, DiscrepancyDataset, GuideMethod, GuideSpec};
use crate::error::{Error, Result};

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda <= 0.0 || !lambda.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "ridge lambda must be positive and finite, got {lambda}"
        )));
    }
    Ok(())
}

fn check_degenerate(ds: &DiscrepancyDataset) -> Result<()> {
    if ds.is_degenerate() {
        return Err(Error::DegenerateDataset(
            "all discrepancy rows are zero".into(),
        ));
    }
    Ok(())
}

/// w* = (H^T H + lambda I_m)^-1 H^T r via the m x m primal system.
pub(crate) fn solve_rr_primal(ds: &DiscrepancyDataset, lambda: f64) -> Result<Vec<f64>> {
    check_lambda(lambda)?;
    check_degenerate(ds)?;
    let (rows, m) = (ds.rows(), ds.feature_dim());
    let mut a = linalg::hth(ds.matrix(), rows, m);
    for i in 0..m {
        a[i * m + i] += lambda;
    }
    let b = linalg::ht_r(ds.matrix(), ds.targets(), rows, m);
    linalg::cholesky_solve(&a, m, &b)
}

/// Algebraically equal route through the N x N dual system:
/// w* = H^T (H H^T + lambda I_N)^-1 r. The solve dimension is the number of
/// samples, independent of the feature dimension.
pub(crate) fn solve_rr_dual(ds: &DiscrepancyDataset, lambda: f64) -> Result<Vec<f64>> {
    check_lambda(lambda)?;
    check_degenerate(ds)?;
    let (rows, m) = (ds.rows(), ds.feature_dim());
    let mut g = linalg::hht(ds.matrix(), rows, m);
    for i in 0..rows {
        g[i * rows + i] += lambda;
    }
    let u = linalg::cholesky_solve(&g, rows, ds.targets())?;
    // w = H^T u
    let mut w = vec![0.0; m];
    for (i, &ui) in u.iter().enumerate() {
        if ui == 0.0 {
            continue;
        }
        let row = &ds.matrix()[i * m..(i + 1) * m];
        for (o, &v) in w.iter_mut().zip(row) {
            *o += v * ui;
        }
    }
    Ok(w)
}

/// w ~= H^T r. Only the direction matters downstream, so the missing
/// 1/lambda scale is irrelevant.
pub(crate) fn solve_rr_approx(ds: &DiscrepancyDataset) -> Result<Vec<f64>> {
    let w = linalg::ht_r(ds.matrix(), ds.targets(), ds.rows(), ds.feature_dim());
    if w.iter().all(|&v| v == 0.0) {
        return Err(Error::DegenerateDataset(
            "H^T r vanished (degenerate dataset)".into(),
        ));
    }
    Ok(w)
}

fn with_anchor(ds: &DiscrepancyDataset, w: Vec<f64>, spec: GuideSpec) -> DirectionalGuide {
    // Callers fitting from raw datasets attach a zero anchor; trajectory
    // paths overwrite it via guide_from in mod.rs.
    guide_from(w, vec![0.0; ds.feature_dim()], &spec, Vec::new())
}

/// Closed-form ridge guide from a ready dataset.
pub fn fit_rr(ds: &DiscrepancyDataset, lambda: f64) -> Result<DirectionalGuide> {
    let w = solve_rr_primal(ds, lambda)?;
    let mut spec = GuideSpec::with_method(GuideMethod::Rr);
    spec.lambda = lambda;
    Ok(with_anchor(ds, w, spec))
}

/// Ridge guide through the dual (Woodbury) route.
pub fn fit_rr_woodbury(ds: &DiscrepancyDataset, lambda: f64) -> Result<DirectionalGuide> {
    let w = solve_rr_dual(ds, lambda)?;
    let mut spec = GuideSpec::with_method(GuideMethod::RrWoodbury);
    spec.lambda = lambda;
    Ok(with_anchor(ds, w, spec))
}

/// The H^T r approximation.
pub fn fit_rr_approx(ds: &DiscrepancyDataset) -> Result<DirectionalGuide> {
    let w = solve_rr_approx(ds)?;
    Ok(with_anchor(ds, w, GuideSpec::with_method(GuideMethod::RrApprox)))
}
