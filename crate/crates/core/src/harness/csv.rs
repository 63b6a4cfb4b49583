//! CSV and metadata serialization with a pinned schema. Floats print via
//! the shortest round-trip representation, so identical results always
//! produce identical bytes.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;

use super::runner::{DiagRow, ExperimentOutput, MetricRow};

pub const METRICS_HEADER: &str = "estimator,ebn0_db,mse,ber,frames,seed";
pub const DIAGNOSTICS_HEADER: &str = "estimator,ebn0_db,iteration,mean_active,lambda,tau2,mse_iter";

pub fn metrics_csv(rows: &[MetricRow]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.estimator.as_str(),
            r.ebn0_db,
            r.mse,
            r.ber,
            r.frames,
            r.seed
        )
        .expect("string writes cannot fail");
    }
    out
}

pub fn diagnostics_csv(rows: &[DiagRow]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(DIAGNOSTICS_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.estimator.as_str(),
            r.ebn0_db,
            r.iteration,
            r.mean_active,
            r.lambda,
            r.tau2,
            r.mse_iter
        )
        .expect("string writes cannot fail");
    }
    out
}

/// Write `metrics.csv`, `diagnostics.csv`, and `metadata.json` into `dir`,
/// creating it if needed.
pub fn write_outputs(dir: &Path, output: &ExperimentOutput) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("metrics.csv"), metrics_csv(&output.metrics))?;
    std::fs::write(dir.join("diagnostics.csv"), diagnostics_csv(&output.diagnostics))?;
    let mut meta = serde_json::to_string_pretty(&output.metadata)
        .expect("metadata is always serializable");
    meta.push('\n');
    std::fs::write(dir.join("metadata.json"), meta)?;
    Ok(())
}
