//! Monte Carlo experiments over grids of simulation models.

use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::simulate::SimulationSpec;
use crate::detect::{ChangePointReport, DetectionParams, Detector, Method};
use crate::error::Result;

/// One grid cell: a model, detector settings and the grid coordinate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentCell {
    pub label: String,
    /// Value of the varied parameter.
    pub value: f64,
    pub spec: SimulationSpec,
    pub params: DetectionParams,
    pub method: Method,
    /// Score the located change point of every run, detected or not
    /// (single change point only).
    #[serde(default)]
    pub locate_always: bool,
}

/// Outcome of one replication.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub replication: u64,
    /// `None` when the replication failed.
    pub detected: Option<bool>,
    pub change_points: Vec<usize>,
    /// First segment's value of `P(V ≤ Δ̄)`.
    pub p_value: Option<f64>,
    pub k_hat: Option<usize>,
    /// Mean of `θ̂ − θ` over true change points, each matched to the
    /// nearest estimate; only for detecting runs of models with changes.
    pub signed_error: Option<f64>,
    pub abs_error: Option<f64>,
    pub error: Option<String>,
}

/// Aggregates over the replications of one cell. Rates and means exclude
/// failed replications.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentMetrics {
    pub label: String,
    pub value: f64,
    pub replications: usize,
    pub failed: usize,
    pub detector_calls: usize,
    /// Share of runs without a detection.
    pub confidence: f64,
    /// Share of runs with a detection.
    pub power: f64,
    pub mean_signed_error: Option<f64>,
    pub mean_abs_error: Option<f64>,
    /// Mean of `P(V ≤ Δ̄)`, i.e. one minus the conventional p-value.
    pub mean_inverse_p_value: Option<f64>,
    pub runs: Vec<RunRecord>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut s, mut n) = (0.0, 0usize);
    for v in values {
        s += v;
        n += 1;
    }
    (n > 0).then(|| s / n as f64)
}

fn errors(truth: &[usize], estimate: &[usize]) -> (Option<f64>, Option<f64>) {
    if truth.is_empty() || estimate.is_empty() {
        return (None, None);
    }
    let diffs: Vec<f64> = truth
        .iter()
        .map(|&th| {
            let near = estimate
                .iter()
                .min_by_key(|&&e| (e as i64 - th as i64).unsigned_abs())
                .expect("non-empty");
            *near as f64 - th as f64
        })
        .collect();
    (mean(diffs.iter().copied()), mean(diffs.iter().map(|d| d.abs())))
}

fn record(rep: u64, truth: &[usize], located: bool, outcome: Result<ChangePointReport>) -> RunRecord {
    match outcome {
        Ok(r) => {
            let (signed, abs) = if r.detected || located {
                errors(truth, &r.change_points)
            } else {
                (None, None)
            };
            RunRecord {
                replication: rep,
                detected: Some(r.detected),
                p_value: r.p_values.first().copied(),
                k_hat: r.k_hat,
                change_points: r.change_points,
                signed_error: signed,
                abs_error: abs,
                error: None,
            }
        }
        Err(e) => RunRecord {
            replication: rep,
            detected: None,
            change_points: Vec::new(),
            p_value: None,
            k_hat: None,
            signed_error: None,
            abs_error: None,
            error: Some(e.to_string()),
        },
    }
}

impl ExperimentMetrics {
    /// Recomputes the aggregates from per-run records.
    pub fn from_runs(label: String, value: f64, detector_calls: usize, runs: Vec<RunRecord>) -> Self {
        let ok: Vec<&RunRecord> = runs.iter().filter(|r| r.detected.is_some()).collect();
        let hits = ok.iter().filter(|r| r.detected == Some(true)).count();
        let n_ok = ok.len().max(1) as f64;
        let power = if ok.is_empty() { 0.0 } else { hits as f64 / n_ok };
        Self {
            label,
            value,
            replications: runs.len(),
            failed: runs.len() - ok.len(),
            detector_calls,
            confidence: if ok.is_empty() { 0.0 } else { 1.0 - power },
            power,
            mean_signed_error: mean(ok.iter().filter_map(|r| r.signed_error)),
            mean_abs_error: mean(ok.iter().filter_map(|r| r.abs_error)),
            mean_inverse_p_value: mean(ok.iter().filter_map(|r| r.p_value)),
            runs,
        }
    }
}

/// Runs every replication of every cell; replications of a cell run in
/// parallel and are collected in replication order.
pub fn run_experiment(cells: &[ExperimentCell]) -> Result<Vec<ExperimentMetrics>> {
    let mut detectors: Vec<Detector> = Vec::new();
    let mut out = Vec::with_capacity(cells.len());
    for cell in cells {
        cell.spec.validate()?;
        let reuse = detectors.iter().position(|d| {
            let p = d.params();
            p.kernel == cell.params.kernel
                && p.beta == cell.params.beta
                && p.null.nodes == cell.params.null.nodes
                && p.null.eigen_count == cell.params.null.eigen_count
                && d.spectrum().dim() == cell.spec.d
        });
        let det = match reuse {
            Some(i) => Detector::with_spectrum(cell.params.clone(), detectors[i].spectrum().clone())?,
            None => {
                let d = Detector::new(cell.params.clone(), cell.spec.d)?;
                detectors.push(d.clone());
                d
            }
        };
        let calls = AtomicUsize::new(0);
        let runs: Vec<RunRecord> = (0..cell.spec.replications as u64)
            .into_par_iter()
            .map(|rep| {
                let outcome = cell.spec.sample(rep).and_then(|x| {
                    calls.fetch_add(1, Ordering::Relaxed);
                    if cell.locate_always && cell.method == Method::Diphoragram {
                        det.locate_single(&x)
                    } else {
                        det.detect(&x, cell.method)
                    }
                });
                record(rep, &cell.spec.change_points, cell.locate_always, outcome)
            })
            .collect();
        out.push(ExperimentMetrics::from_runs(
            cell.label.clone(),
            cell.value,
            calls.load(Ordering::Relaxed),
            runs,
        ));
    }
    Ok(out)
}
