//! Intercept-free epsilon-insensitive SVR by dual coordinate descent.
//!
//! Primal: min 1/2 ||w||^2 + C sum_t max(0, |w . H_t - r_t| - e).
//! With beta_t = alpha_t - alpha*_t in [-C, C] the dual is
//! min 1/2 b^T Q b - r^T b + e ||b||_1 over the box, Q = H H^T, and
//! w = H^T beta. Coordinates are swept with soft-threshold updates and a
//! simple shrinking of coordinates pinned at the box bounds; convergence is
//! declared when the max KKT violation falls below tolerance on a full pass.

use super::{guide_from, DirectionalGuide, DiscrepancyDataset, GuideMethod, GuideSpec};
use crate::error::{Error, Result};

const MAX_PASSES: usize = 100_000;
const KKT_TOL: f64 = 1e-8;

fn soft(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

/// KKT violation of coordinate t given smooth-part gradient G. At the box
/// bounds only the inward direction can improve the dual objective.
fn violation(beta: f64, g: f64, e: f64, c: f64) -> f64 {
    if beta == 0.0 {
        (g.abs() - e).max(0.0)
    } else if beta > 0.0 {
        if beta >= c {
            (g + e).max(0.0)
        } else {
            (g + e).abs()
        }
    } else if beta <= -c {
        (e - g).max(0.0)
    } else {
        (g - e).abs()
    }
}

pub(crate) fn solve(ds: &DiscrepancyDataset, c: f64, e: f64) -> Result<Vec<f64>> {
    if c <= 0.0 || !c.is_finite() {
        return Err(Error::InvalidConfig(format!("svr C must be positive, got {c}")));
    }
    if e < 0.0 || !e.is_finite() {
        return Err(Error::InvalidConfig(format!("svr tube e must be >= 0, got {e}")));
    }
    if ds.is_degenerate() {
        return Err(Error::DegenerateDataset(
            "all discrepancy rows are zero".into(),
        ));
    }
    let (rows, m) = (ds.rows(), ds.feature_dim());
    let q = super::linalg::hht(ds.matrix(), rows, m);
    let r = ds.targets();
    let tol = KKT_TOL * r.iter().fold(1.0f64, |a, &b| a.max(b.abs()));

    let mut beta = vec![0.0f64; rows];
    let mut qb = vec![0.0f64; rows]; // Q beta, maintained incrementally
    let mut active = vec![true; rows];

    let mut pass = 0usize;
    loop {
        if pass >= MAX_PASSES {
            let max_v = (0..rows)
                .map(|t| violation(beta[t], qb[t] - r[t], e, c))
                .fold(0.0f64, f64::max)
                ;
            return Err(Error::NonConvergence {
                sweeps: pass,
                gap: max_v,
            });
        }
        pass += 1;
        let mut max_v = 0.0f64;
        for t in 0..rows {
            if !active[t] {
                continue;
            }
            let qtt = q[t * rows + t];
            let g = qb[t] - r[t];
            let v = violation(beta[t], g, e, c);
            max_v = max_v.max(v);
            if v == 0.0 {
                // pinned coordinates with no pull can be skipped until the
                // final full pass
                if beta[t].abs() >= c {
                    active[t] = false;
                }
                continue;
            }
            let new = if qtt > 0.0 {
                (soft(qtt * beta[t] - g, e) / qtt).clamp(-c, c)
            } else if r[t] > e {
                c
            } else if r[t] < -e {
                -c
            } else {
                0.0
            };
            let delta = new - beta[t];
            if delta != 0.0 {
                for i in 0..rows {
                    qb[i] += delta * q[i * rows + t];
                }
                beta[t] = new;
            }
        }
        if max_v < tol {
            // verify on the full coordinate set before declaring victory
            let full_v = (0..rows)
                .map(|t| violation(beta[t], qb[t] - r[t], e, c))
                .fold(0.0f64, f64::max);
            if full_v < tol {
                break;
            }
            active.iter_mut().for_each(|a| *a = true);
        }
    }

    // w = H^T beta
    let mut w = vec![0.0f64; m];
    for (i, &bi) in beta.iter().enumerate() {
        if bi == 0.0 {
            continue;
        }
        let row = &ds.matrix()[i * m..(i + 1) * m];
        for (o, &v) in w.iter_mut().zip(row) {
            *o += v * bi;
        }
    }
    Ok(w)
}

/// SVR guide from a ready dataset. With e at least the largest |r_t| the
/// optimum is w = 0 (every target inside the tube); refinement treats such
/// a guide as degenerate and leaves the input unchanged.
pub fn fit_svr(ds: &DiscrepancyDataset, c: f64, e: f64) -> Result<DirectionalGuide> {
    let w = solve(ds, c, e)?;
    let mut spec = GuideSpec::with_method(GuideMethod::Svr);
    spec.c = c;
    spec.e = e;
    Ok(guide_from(w, vec![0.0; ds.feature_dim()], &spec, Vec::new()))
}
