//! Small dense linear algebra for the guide solvers (f64 throughout).

use crate::error::{Error, Result};

/// H^T r for row-major H (rows x m).
pub fn ht_r(h: &[f64], r: &[f64], rows: usize, m: usize) -> Vec<f64> {
    let mut out = vec![0.0; m];
    for (i, &ri) in r.iter().enumerate().take(rows) {
        if ri == 0.0 {
            continue;
        }
        let row = &h[i * m..(i + 1) * m];
        for (o, &v) in out.iter_mut().zip(row) {
            *o += v * ri;
        }
    }
    out
}

/// Gram matrix H^T H (m x m), dense row-major.
pub fn hth(h: &[f64], rows: usize, m: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * m];
    for i in 0..rows {
        let row = &h[i * m..(i + 1) * m];
        for a in 0..m {
            let ra = row[a];
            if ra == 0.0 {
                continue;
            }
            let dst = &mut out[a * m..(a + 1) * m];
            for (d, &rb) in dst.iter_mut().zip(row) {
                *d += ra * rb;
            }
        }
    }
    out
}

/// Kernel matrix H H^T (rows x rows).
pub fn hht(h: &[f64], rows: usize, m: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * rows];
    for i in 0..rows {
        for j in i..rows {
            let mut acc = 0.0;
            let (ri, rj) = (&h[i * m..(i + 1) * m], &h[j * m..(j + 1) * m]);
            for (a, b) in ri.iter().zip(rj) {
                acc += a * b;
            }
            out[i * rows + j] = acc;
            out[j * rows + i] = acc;
        }
    }
    out
}

#[cfg_attr(not(test), allow(dead_code))]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg_attr(not(test), allow(dead_code))]
pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solve the SPD system (A + jitter I) x = b by Cholesky, escalating the
/// jitter from 1e-12 to 1e-6 (relative to the mean diagonal) if the
/// factorization hits a non-positive pivot. Jitter use is logged to stderr.
pub fn cholesky_solve(a: &[f64], n: usize, b: &[f64]) -> Result<Vec<f64>> {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(b.len(), n);
    let mean_diag = (0..n).map(|i| a[i * n + i].abs()).sum::<f64>() / n as f64;
    let scale = if mean_diag > 0.0 { mean_diag } else { 1.0 };
    for (attempt, rel) in [0.0, 1e-12, 1e-10, 1e-8, 1e-6].iter().enumerate() {
        let jitter = rel * scale;
        if let Some(x) = try_cholesky_solve(a, n, b, jitter) {
            if attempt > 0 {
                eprintln!("ridge solve: applied jitter {jitter:.3e} (attempt {attempt})");
            }
            if x.iter().all(|v| v.is_finite()) {
                return Ok(x);
            }
        }
    }
    Err(Error::NonFinite { op: "cholesky solve" })
}

fn try_cholesky_solve(a: &[f64], n: usize, b: &[f64], jitter: f64) -> Option<Vec<f64>> {
    // Lower-triangular factor, in place over a copy.
    let mut l = a.to_vec();
    for i in 0..n {
        l[i * n + i] += jitter;
    }
    for j in 0..n {
        for k in 0..j {
            let ljk = l[j * n + k];
            if ljk != 0.0 {
                for i in j..n {
                    l[i * n + j] -= l[i * n + k] * ljk;
                }
            }
        }
        let d = l[j * n + j];
        if d <= 0.0 || !d.is_finite() {
            return None;
        }
        let inv = 1.0 / d.sqrt();
        for i in j..n {
            l[i * n + j] *= inv;
        }
    }
    // Forward then backward substitution.
    let mut y = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            y[i] -= l[i * n + k] * y[k];
        }
        y[i] /= l[i * n + i];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            y[i] -= l[k * n + i] * y[k];
        }
        y[i] /= l[i * n + i];
    }
    Some(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_solves_a_known_system() {
        // A = [[4,2],[2,3]], b = [10, 9] -> x = [1.5, 2]
        let a = vec![4.0, 2.0, 2.0, 3.0];
        let x = cholesky_solve(&a, 2, &[10.0, 9.0]).unwrap();
        assert!((x[0] - 1.5).abs() < 1e-12);
        assert!((x[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn jitter_rescues_a_singular_system() {
        // Rank-1 matrix; plain Cholesky fails, jitter makes it solvable.
        let a = vec![1.0, 1.0, 1.0, 1.0];
        let x = cholesky_solve(&a, 2, &[2.0, 2.0]).unwrap();
        assert!(x.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn gram_and_kernel_agree_with_direct_products() {
        let h = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]; // 2x3
        let g = hth(&h, 2, 3);
        assert_eq!(g[0 * 3 + 0], 1.0 + 16.0);
        assert_eq!(g[1 * 3 + 2], 2.0 * 3.0 + 5.0 * 6.0);
        let k = hht(&h, 2, 3);
        assert_eq!(k[0], 14.0);
        assert_eq!(k[1], 32.0);
        assert_eq!(k[3], 77.0);
    }
}
