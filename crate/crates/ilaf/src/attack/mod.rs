//! Baseline adversarial-example generation: I-FGSM, multi-run PGD, and the
//! LinBP variant, with norm-ball projection, valid-image clipping, and
//! trajectory capture for the guide-fitting stage.

pub mod dump;
mod ifgsm;
pub mod project;

pub use ifgsm::{ifgsm, linbp_attack, linbp_multirun, pgd_multirun};
pub use project::{project, project_ball, sign};

use crate::error::{Error, Result};

/// Perturbation constraint norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Norm {
    Linf,
    L2,
}

impl Norm {
    pub fn as_str(&self) -> &'static str {
        match self {
            Norm::Linf => "linf",
            Norm::L2 => "l2",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "linf" => Ok(Norm::Linf),
            "l2" => Ok(Norm::L2),
            other => Err(Error::InvalidConfig(format!("unknown norm `{other}`"))),
        }
    }
}

/// Which baseline iterates are kept as trajectory samples (besides t = 0).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub enum SampleStrategy {
    /// p iterates evenly spaced over (0, T], including t = T.
    #[default]
    Even,
    /// The first p iterates.
    FirstP,
    /// The last p iterates.
    LastP,
}

impl SampleStrategy {
    pub fn as_str(&self) -> &'static str {
        match self {
            SampleStrategy::Even => "even",
            SampleStrategy::FirstP => "first-p",
            SampleStrategy::LastP => "last-p",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "even" => Ok(SampleStrategy::Even),
            "first-p" => Ok(SampleStrategy::FirstP),
            "last-p" => Ok(SampleStrategy::LastP),
            other => Err(Error::InvalidConfig(format!(
                "unknown sample strategy `{other}`"
            ))),
        }
    }

    /// Non-anchor sample times within [1, T].
    pub fn times(&self, iterations: usize, p: usize) -> Vec<u32> {
        match self {
            SampleStrategy::Even => (1..=p)
                .map(|i| ((i * iterations) as f64 / p as f64).round() as u32)
                .collect(),
            SampleStrategy::FirstP => (1..=p as u32).collect(),
            SampleStrategy::LastP => {
                ((iterations - p + 1) as u32..=iterations as u32).collect()
            }
        }
    }
}

/// Baseline attack settings.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct AttackConfig {
    pub norm: Norm,
    /// Perturbation budget in image-value units.
    pub epsilon: f32,
    /// Step size; defaults to 1/255 for l-inf and epsilon/5 for l2.
    pub alpha: Option<f32>,
    /// Iteration count T.
    pub iterations: usize,
    /// Sample count p (trajectory keeps p + 1 samples including t = 0).
    pub sample_count: usize,
    pub strategy: SampleStrategy,
    pub random_init: bool,
    /// Number of runs R for multi-run attacks.
    pub runs: usize,
    pub seed: u64,
    /// Index of the attacked input within its campaign; keys the RNG stream.
    pub input_index: u32,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            norm: Norm::Linf,
            epsilon: 8.0 / 255.0,
            alpha: None,
            iterations: 100,
            sample_count: 10,
            strategy: SampleStrategy::Even,
            random_init: false,
            runs: 1,
            seed: 0,
            input_index: 0,
        }
    }
}

impl AttackConfig {
    pub fn step_size(&self) -> f32 {
        self.alpha.unwrap_or(match self.norm {
            Norm::Linf => 1.0 / 255.0,
            Norm::L2 => self.epsilon / 5.0,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.epsilon < 0.0 {
            return Err(Error::InvalidConfig("epsilon must be >= 0".into()));
        }
        if self.step_size() <= 0.0 {
            return Err(Error::InvalidConfig("alpha must be > 0".into()));
        }
        if self.sample_count == 0 || self.sample_count > self.iterations {
            return Err(Error::InvalidConfig(format!(
                "sample count p = {} must satisfy 1 <= p <= T = {}",
                self.sample_count, self.iterations
            )));
        }
        if self.runs == 0 {
            return Err(Error::InvalidConfig("runs R must be >= 1".into()));
        }
        Ok(())
    }

    /// Stable hash of every field, recorded in trajectory and batch files.
    pub fn hash(&self) -> u64 {
        let repr = format!(
            "{}|{:.9}|{:?}|{}|{}|{}|{}|{}|{}|{}",
            self.norm.as_str(),
            self.epsilon,
            self.alpha,
            self.iterations,
            self.sample_count,
            self.strategy.as_str(),
            self.random_init,
            self.runs,
            self.seed,
            self.input_index,
        );
        crate::rng::fnv1a(repr.as_bytes())
    }
}

/// One sampled iterate of a baseline attack.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySample {
    pub t: u32,
    /// Adversarial input at step t (empty when loaded from a dump without x).
    pub x: Vec<f32>,
    /// Mid-network feature g(x_t).
    pub feature: Vec<f32>,
    /// Prediction loss l_t.
    pub loss: f32,
}

/// Sampled iterates of one baseline-attack run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub input_index: u32,
    pub run: u32,
    pub cfg_hash: u64,
    /// The benign input x.
    pub anchor_x: Vec<f32>,
    /// The benign feature h0 = g(x).
    pub anchor_feature: Vec<f32>,
    /// p + 1 samples ordered by t; the first is (0, x, g(x), l0).
    pub samples: Vec<TrajectorySample>,
    /// Final iterate x_T of the run.
    pub final_x: Vec<f32>,
}

impl Trajectory {
    pub fn feature_dim(&self) -> usize {
        self.anchor_feature.len()
    }

    /// Direction h_p - h0 of the final sampled feature.
    pub fn final_feature_direction(&self) -> Vec<f32> {
        let last = &self.samples.last().expect("non-empty trajectory").feature;
        last.iter()
            .zip(&self.anchor_feature)
            .map(|(a, b)| a - b)
            .collect()
    }

    /// FNV hash over provenance and sampled losses; used in guide files.
    pub fn provenance_hash(&self) -> u64 {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&self.input_index.to_le_bytes());
        bytes.extend_from_slice(&self.run.to_le_bytes());
        bytes.extend_from_slice(&self.cfg_hash.to_le_bytes());
        for s in &self.samples {
            bytes.extend_from_slice(&s.t.to_le_bytes());
            bytes.extend_from_slice(&s.loss.to_le_bytes());
        }
        crate::rng::fnv1a(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn even_sampling_matches_the_documented_schedule() {
        let t = SampleStrategy::Even.times(100, 10);
        assert_eq!(t, vec![10, 20, 30, 40, 50, 60, 70, 80, 90, 100]);
    }

    #[test]
    fn l2_step_size_defaults_to_a_fifth_of_epsilon() {
        let cfg = AttackConfig {
            norm: Norm::L2,
            epsilon: 0.5,
            ..Default::default()
        };
        assert!((cfg.step_size() - 0.1).abs() < 1e-7);
        let cfg = AttackConfig::default();
        assert!((cfg.step_size() - 1.0 / 255.0).abs() < 1e-9);
    }

    #[test]
    fn first_and_last_sampling() {
        assert_eq!(SampleStrategy::FirstP.times(100, 3), vec![1, 2, 3]);
        assert_eq!(SampleStrategy::LastP.times(100, 3), vec![98, 99, 100]);
    }

    #[test]
    fn config_validation_catches_bad_fields() {
        let mut cfg = AttackConfig::default();
        cfg.sample_count = 200;
        assert!(cfg.validate().is_err());
        let mut cfg = AttackConfig::default();
        cfg.runs = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = AttackConfig::default();
        cfg.epsilon = -0.1;
        assert!(cfg.validate().is_err());
        assert!(AttackConfig::default().validate().is_ok());
    }

    #[test]
    fn config_hash_tracks_fields() {
        let a = AttackConfig::default();
        let mut b = a.clone();
        b.epsilon = 16.0 / 255.0;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash(), AttackConfig::default().hash());
    }
}
