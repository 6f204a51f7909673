//! Desk-scale laboratory for intermediate-level transfer attacks on small
//! neural classifiers.
//!
//! The pipeline: train a small model zoo on a synthetic image task, craft
//! baseline adversarial examples (I-FGSM, multi-run PGD, LinBP) on a source
//! model, fit linear mappings from intermediate-feature discrepancies to
//! prediction loss (ridge, ElasticNet, SVR, or random baselines), refine
//! examples against the fitted directional guide, and measure how well the
//! results transfer to unseen victim models.
//!
//! See the `examples/` directory for one runnable program per capability and
//! the `ilaf` binary for the file-driven pipeline.

pub mod attack;
pub mod error;
mod fileio;
pub mod guide;
pub mod harness;
pub mod nn;
pub mod refine;
pub mod rng;
pub mod tensor;

pub use attack::{AttackConfig, Norm, Trajectory};
pub use error::{Error, Result};
pub use guide::{DirectionalGuide, DiscrepancyDataset, GuideMethod, GuideSpec};
pub use nn::{Dataset, LayerSpec, Model, SplitModel};
pub use refine::RefineConfig;
pub use tensor::{ReluMode, Tape, Tensor, TensorId};
