//! Perturbation projection: norm-ball clamp plus valid-image clipping.

use super::Norm;

/// sign with sign(0) = 0.
pub fn sign(v: f32) -> f32 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Project a perturbation onto the epsilon-ball of the given norm.
pub fn project_ball(delta: &mut [f32], norm: Norm, epsilon: f32) {
    match norm {
        Norm::Linf => {
            for d in delta.iter_mut() {
                *d = d.clamp(-epsilon, epsilon);
            }
        }
        Norm::L2 => {
            let sq: f64 = delta.iter().map(|&d| (d as f64) * (d as f64)).sum();
            let n = sq.sqrt();
            // The 1e-6 slack absorbs f32 rounding of a previous rescale, so
            // projecting twice is bitwise stable.
            if n > epsilon as f64 * (1.0 + 1e-6) && n > 0.0 {
                let scale = (epsilon as f64 / n) as f32;
                for d in delta.iter_mut() {
                    *d *= scale;
                }
            }
        }
    }
}

/// Full projection onto the valid set: epsilon-ball around x, then x + delta
/// clamped into [0,1]. The box clamp works on delta bounds directly
/// (d in [-x, 1-x]) so it is bitwise idempotent and can only shrink delta
/// componentwise, keeping the ball constraint intact.
pub fn project(x: &[f32], delta: &mut [f32], norm: Norm, epsilon: f32) {
    project_ball(delta, norm, epsilon);
    for (d, &xv) in delta.iter_mut().zip(x) {
        *d = d.clamp(-xv, 1.0 - xv);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn inside_ball_is_unchanged() {
        let x = vec![0.5f32; 4];
        let mut d = vec![0.01f32, -0.02, 0.0, 0.015];
        let before = d.clone();
        project(&x, &mut d, Norm::Linf, 0.05);
        assert_eq!(d, before);
        project(&x, &mut d, Norm::L2, 1.0);
        assert_eq!(d, before);
    }

    #[test]
    fn l2_radial_scaling_of_a_3_4_vector() {
        let x = vec![0.0f32; 2];
        let mut d = vec![3.0f32, 4.0];
        project(&x, &mut d, Norm::L2, 1.0);
        assert!((d[0] - 0.6).abs() < 1e-6);
        assert!((d[1] - 0.8).abs() < 1e-6);
    }

    #[test]
    fn sign_of_zero_is_zero() {
        assert_eq!(sign(0.0), 0.0);
        assert_eq!(sign(2.5), 1.0);
        assert_eq!(sign(-0.1), -1.0);
    }

    proptest! {
        #[test]
        fn projection_is_idempotent(
            xs in proptest::collection::vec(0.0f32..1.0, 8),
            ds in proptest::collection::vec(-2.0f32..2.0, 8),
            eps in 0.0f32..0.5,
            linf in proptest::bool::ANY,
        ) {
            let norm = if linf { Norm::Linf } else { Norm::L2 };
            let mut once = ds.clone();
            project(&xs, &mut once, norm, eps);
            let mut twice = once.clone();
            project(&xs, &mut twice, norm, eps);
            prop_assert_eq!(&once, &twice);
        }

        #[test]
        fn projection_lands_in_the_valid_set(
            xs in proptest::collection::vec(0.0f32..1.0, 8),
            ds in proptest::collection::vec(-2.0f32..2.0, 8),
            eps in 0.0f32..0.5,
            linf in proptest::bool::ANY,
        ) {
            let norm = if linf { Norm::Linf } else { Norm::L2 };
            let mut d = ds.clone();
            project(&xs, &mut d, norm, eps);
            for (dv, &xv) in d.iter().zip(&xs) {
                let v = xv + dv;
                prop_assert!((-1e-6..=1.0 + 1e-6).contains(&v));
            }
            match norm {
                Norm::Linf => prop_assert!(d.iter().all(|v| v.abs() <= eps + 1e-6)),
                Norm::L2 => {
                    let n: f64 = d.iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt();
                    prop_assert!(n <= eps as f64 * (1.0 + 1e-6) + 1e-9);
                }
            }
        }
    }
}
