//! End-to-end orchestration: zoo training, evaluation-set filtering,
//! attack/refine campaigns, transfer-matrix evaluation, sweeps, and report
//! emission.

pub mod campaign;
pub mod cli;
pub mod config;
pub mod evaluate;
pub mod report;
pub mod sweep;

pub use campaign::{BaselineKind, Campaign, CampaignConfig, GuideChoice, MethodSpec, Zoo};
pub use config::Config;
pub use evaluate::{correlation_report, evaluate_transfer};
pub use report::{ReportCell, TransferReport};
pub use sweep::{run_sweep, SweepAxis};
