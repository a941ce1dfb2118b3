//! JSON and CSV output.
//!
//! Detection reports are JSON documents with a schema version and no
//! timestamp, so identical runs produce identical bytes. Metric tables and
//! diphoragrams are CSV.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::experiment::ExperimentMetrics;
use crate::detect::{ChangePointReport, DetectionParams};
use crate::discrepancy::Diphoragram;
use crate::error::{Error, Result};

/// Version of the JSON report layout.
pub const SCHEMA_VERSION: u32 = 1;

/// Output format.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Csv,
}

/// A detection report with the settings that produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub schema_version: u32,
    pub library_version: String,
    /// Observation count `T`.
    pub observations: usize,
    pub dimension: usize,
    pub params: DetectionParams,
    pub report: ChangePointReport,
    /// Time labels of the change points, when the input had them.
    pub change_point_labels: Option<Vec<String>>,
}

impl ReportDocument {
    pub fn new(params: DetectionParams, report: ChangePointReport, observations: usize, dimension: usize) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            library_version: crate::VERSION.to_owned(),
            observations,
            dimension,
            params,
            report,
            change_point_labels: None,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: Self = serde_json::from_str(s)?;
        if doc.schema_version != SCHEMA_VERSION {
            return Err(Error::Data(format!(
                "unsupported report schema version {}",
                doc.schema_version
            )));
        }
        Ok(doc)
    }
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn csv_bytes(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.into_inner().map_err(|e| Error::Data(e.to_string()))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn join(v: &[usize]) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(" ")
}

/// One row per change point: `index,change_point,label,t_star,ratio`.
pub fn report_csv(doc: &ReportDocument) -> Result<Vec<u8>> {
    let r = &doc.report;
    csv_bytes(
        &["index", "change_point", "label", "t_star", "ratio"],
        r.change_points.iter().enumerate().map(|(k, cp)| {
            vec![
                (k + 1).to_string(),
                cp.to_string(),
                doc.change_point_labels
                    .as_ref()
                    .and_then(|l| l.get(k).cloned())
                    .unwrap_or_default(),
                r.t_star.get(k).map(usize::to_string).unwrap_or_default(),
                r.ratios.get(k).map(f64::to_string).unwrap_or_default(),
            ]
        }),
    )
}

/// Writes a detection report.
pub fn emit_report(doc: &ReportDocument, format: ReportFormat, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    match format {
        ReportFormat::Json => write(path, doc.to_json()?),
        ReportFormat::Csv => write(path, report_csv(doc)?),
    }
}

/// `t,delta` rows for `t = 1..T−τ+1`.
pub fn diphoragram_csv(diph: &Diphoragram) -> Result<Vec<u8>> {
    csv_bytes(
        &["t", "delta"],
        diph.series().map(|(t, v)| vec![t.to_string(), v.to_string()]),
    )
}

pub fn emit_diphoragram(diph: &Diphoragram, path: impl AsRef<Path>) -> Result<()> {
    write(path.as_ref(), diphoragram_csv(diph)?)
}

/// One row per grid cell.
pub fn metrics_csv(metrics: &[ExperimentMetrics]) -> Result<Vec<u8>> {
    csv_bytes(
        &[
            "label",
            "value",
            "replications",
            "failed",
            "confidence",
            "power",
            "mean_signed_error",
            "mean_abs_error",
            "mean_inverse_p_value",
        ],
        metrics.iter().map(|m| {
            vec![
                m.label.clone(),
                m.value.to_string(),
                m.replications.to_string(),
                m.failed.to_string(),
                m.confidence.to_string(),
                m.power.to_string(),
                opt(m.mean_signed_error),
                opt(m.mean_abs_error),
                opt(m.mean_inverse_p_value),
            ]
        }),
    )
}

/// One row per replication of every cell.
pub fn runs_csv(metrics: &[ExperimentMetrics]) -> Result<Vec<u8>> {
    csv_bytes(
        &[
            "label",
            "value",
            "replication",
            "detected",
            "change_points",
            "p_value",
            "k_hat",
            "signed_error",
            "error",
        ],
        metrics.iter().flat_map(|m| {
            m.runs.iter().map(move |r| {
                vec![
                    m.label.clone(),
                    m.value.to_string(),
                    r.replication.to_string(),
                    r.detected.map(|d| d.to_string()).unwrap_or_default(),
                    join(&r.change_points),
                    opt(r.p_value),
                    r.k_hat.map(|k| k.to_string()).unwrap_or_default(),
                    opt(r.signed_error),
                    r.error.clone().unwrap_or_default(),
                ]
            })
        }),
    )
}

/// Writes experiment metrics: the per-cell table as CSV, or everything
/// including per-run records as JSON.
pub fn emit_metrics(metrics: &[ExperimentMetrics], format: ReportFormat, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    match format {
        ReportFormat::Csv => write(path, metrics_csv(metrics)?),
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(metrics)?;
            s.push('\n');
            write(path, s)
        }
    }
}
