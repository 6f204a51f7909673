//! Transfer reports and their on-disk forms: CSV (fixed schema), a JSON
//! manifest with provenance, per-figure plot-data series, and a JSON dump
//! of the report itself for later re-emission.

use crate::attack::Norm;
use crate::error::{Error, Result};
use crate::fileio::write_atomic;
use std::fmt::Write as _;
use std::path::Path;

/// One (method, victim) cell of the transfer matrix.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ReportCell {
    pub method: String,
    pub norm: Norm,
    pub epsilon: f32,
    pub victim: String,
    pub success_rate: f64,
    pub mean_discrepancy: f64,
    pub std_discrepancy: f64,
    pub n_inputs: usize,
    pub seed: u64,
}

/// Success rates, discrepancy statistics, and provenance for one campaign.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TransferReport {
    pub source_id: String,
    pub seed: u64,
    pub config_hash: u64,
    pub n_inputs: usize,
    pub cells: Vec<ReportCell>,
    /// Wall-clock seconds per pipeline stage.
    pub stage_secs: Vec<(String, f64)>,
}

impl TransferReport {
    /// Mean success over victims, excluding the source model.
    pub fn victim_average(&self, method: &str) -> f64 {
        let vals: Vec<f64> = self
            .cells
            .iter()
            .filter(|c| c.method == method && c.victim != self.source_id)
            .map(|c| c.success_rate)
            .collect();
        if vals.is_empty() {
            return f64::NAN;
        }
        vals.iter().sum::<f64>() / vals.len() as f64
    }

    pub fn cell(&self, method: &str, victim: &str) -> Option<&ReportCell> {
        self.cells
            .iter()
            .find(|c| c.method == method && c.victim == victim)
    }

    /// Success rate on the source model itself.
    pub fn source_success(&self, method: &str) -> f64 {
        self.cell(method, &self.source_id.clone())
            .map_or(f64::NAN, |c| c.success_rate)
    }

    pub fn methods(&self) -> Vec<String> {
        let mut seen = Vec::new();
        for c in &self.cells {
            if !seen.contains(&c.method) {
                seen.push(c.method.clone());
            }
        }
        seen
    }

    pub fn mean_magnitude(&self, method: &str) -> f64 {
        self.cells
            .iter()
            .find(|c| c.method == method)
            .map_or(f64::NAN, |c| c.mean_discrepancy)
    }

    /// The fixed-schema CSV body. Byte-deterministic for a given report.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("method,norm,epsilon,victim,success_rate,mean_discrepancy,std_discrepancy,n_inputs,seed\n");
        for c in &self.cells {
            let _ = writeln!(
                out,
                "{},{},{:.8},{},{:.6},{:.6},{:.6},{},{}",
                c.method,
                c.norm.as_str(),
                c.epsilon,
                c.victim,
                c.success_rate,
                c.mean_discrepancy,
                c.std_discrepancy,
                c.n_inputs,
                c.seed
            );
        }
        out
    }
}

/// Manifest written next to every report: config provenance, component
/// version, and stage timings.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct Manifest {
    pub config_hash: u64,
    pub config: String,
    pub seed: u64,
    pub version: String,
    pub stage_secs: Vec<(String, f64)>,
}

/// Emit report.csv, report.json, manifest.json, and plot-data series into
/// `dir`. Writes are atomic; re-emitting the same report reproduces the
/// CSV byte for byte.
pub fn emit_reports(
    report: &TransferReport,
    config_text: &str,
    dir: &Path,
    formats: &[&str],
) -> Result<Vec<std::path::PathBuf>> {
    let mut written = Vec::new();
    for &fmt in formats {
        match fmt {
            "csv" => {
                let path = dir.join("report.csv");
                write_atomic(&path, report.to_csv().as_bytes())?;
                written.push(path);
            }
            "json" => {
                let path = dir.join("report.json");
                let body = serde_json::to_string_pretty(report)
                    .map_err(|e| Error::InvalidConfig(format!("report serialization: {e}")))?;
                write_atomic(&path, body.as_bytes())?;
                written.push(path);

                let manifest = Manifest {
                    config_hash: report.config_hash,
                    config: config_text.to_string(),
                    seed: report.seed,
                    version: env!("CARGO_PKG_VERSION").to_string(),
                    stage_secs: report.stage_secs.clone(),
                };
                let mpath = dir.join("manifest.json");
                let body = serde_json::to_string_pretty(&manifest)
                    .map_err(|e| Error::InvalidConfig(format!("manifest serialization: {e}")))?;
                write_atomic(&mpath, body.as_bytes())?;
                written.push(mpath);
            }
            "plot" => {
                // success-vs-magnitude series, one row per method
                let mut body = String::from("x,y,label\n");
                for method in report.methods() {
                    let _ = writeln!(
                        body,
                        "{:.6},{:.6},{}",
                        report.mean_magnitude(&method),
                        report.victim_average(&method),
                        method
                    );
                }
                let path = dir.join("plot_success_vs_magnitude.csv");
                write_atomic(&path, body.as_bytes())?;
                written.push(path);
            }
            other => {
                return Err(Error::InvalidConfig(format!("unknown report format `{other}`")));
            }
        }
    }
    Ok(written)
}

/// Load a previously emitted report.json.
pub fn load_report(path: &Path) -> Result<TransferReport> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format {
        what: "report.json",
        detail: e.to_string(),
    })
}

/// Emit an x/y series file for a sweep figure.
pub fn emit_series(
    dir: &Path,
    name: &str,
    rows: &[(f64, f64, String)],
) -> Result<std::path::PathBuf> {
    let mut body = String::from("x,y,label\n");
    for (x, y, label) in rows {
        let _ = writeln!(body, "{x:.6},{y:.6},{label}");
    }
    let path = dir.join(format!("plot_{name}.csv"));
    write_atomic(&path, body.as_bytes())?;
    Ok(path)
}
