//! Multiple change points: diphoragram minimizers, iterative readjustment
//! and the smallest accepted model.

use serde::{Deserialize, Serialize};

use super::{ChangePointReport, Detector, Method};
use crate::discrepancy::{nonuniformity_inner, sliding_diphoragram, Diphoragram, EmpiricalMeasure, SampleKernel};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nulldist::{null_test, NullDecision};
use crate::transport::vector_ranks;

/// Change points for a fixed `K`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiEstimate {
    /// Readjusted estimates, ascending.
    pub change_points: Vec<usize>,
    /// Blind estimates `t*ₖ + τ/2`, ascending.
    pub blind: Vec<usize>,
    /// Minimizers `t*ₖ`, ascending.
    pub t_star: Vec<usize>,
    /// Final projection coefficients `λ̂ᵏ₁`.
    pub lambdas: Vec<f64>,
    /// Readjustment rounds performed.
    pub iterations: usize,
    pub warnings: Vec<String>,
}

/// Up to `k` minimizers: each is the smallest argmin of `Δ̂` over the times
/// not within `τ` of an earlier pick.
pub fn select_minimizers(diph: &Diphoragram, k: usize) -> Vec<usize> {
    let tau = diph.tau();
    let values = diph.values();
    let mut allowed = vec![true; values.len()];
    let mut picks = Vec::with_capacity(k);
    for _ in 0..k {
        let best = (0..values.len())
            .filter(|&i| allowed[i])
            .fold(None, |best: Option<usize>, i| match best {
                Some(b) if values[b] <= values[i] => Some(b),
                _ => Some(i),
            });
        let Some(b) = best else { break };
        picks.push(b + 1);
        for (i, a) in allowed.iter_mut().enumerate() {
            if (i as i64 - b as i64).unsigned_abs() as usize <= tau {
                *a = false;
            }
        }
    }
    picks
}

fn segment(lo: usize, hi: usize) -> Option<EmpiricalMeasure> {
    (hi > lo).then(|| EmpiricalMeasure::new(lo + 1, hi).ok()).flatten()
}

/// Projection coefficient of the origin onto the segment between the
/// measures before and after `θ̂ᵏ`, clamped to `[0, 1]`; `None` when a side is
/// empty or the two measures coincide.
fn projection_coefficient(kernel: &SampleKernel, lo: usize, mid: usize, hi: usize) -> Result<Option<f64>> {
    let (Some(prev), Some(next)) = (segment(lo, mid), segment(mid, hi)) else {
        return Ok(None);
    };
    let pp = nonuniformity_inner(kernel, prev, prev)?;
    let pq = nonuniformity_inner(kernel, prev, next)?;
    let qq = nonuniformity_inner(kernel, next, next)?;
    let d2 = pp - 2.0 * pq + qq;
    if d2.is_nan() || d2 <= 0.0 {
        return Ok(None);
    }
    Ok(Some(((qq - pq) / d2).clamp(0.0, 1.0)))
}

/// Jacobi-style readjustment `θ̂ᵏ ← t*ₖ + λ̂ᵏ₁·τ` with surrogate endpoints
/// `0` and `T`, for at most `max_iter` rounds or until no estimate moves.
/// Returns the estimates, the last coefficients and the rounds performed.
pub fn readjust_changepoints(
    kernel: &SampleKernel,
    t_star: &[usize],
    initial: &[usize],
    tau: usize,
    max_iter: usize,
) -> Result<(Vec<usize>, Vec<f64>, usize)> {
    let t = kernel.len();
    let mut theta = initial.to_vec();
    let mut lambdas = vec![0.5; theta.len()];
    let mut rounds = 0;
    for _ in 0..max_iter {
        let mut bounds = Vec::with_capacity(theta.len() + 2);
        bounds.push(0);
        bounds.extend_from_slice(&theta);
        bounds.push(t);
        let mut next = theta.clone();
        for k in 0..theta.len() {
            if let Some(l) = projection_coefficient(kernel, bounds[k], bounds[k + 1], bounds[k + 2])? {
                lambdas[k] = l;
                next[k] = clamp_point(t_star[k] + (l * tau as f64).round() as usize, t);
            }
        }
        rounds += 1;
        let moved = next != theta;
        theta = next;
        if !moved {
            break;
        }
    }
    Ok((theta, lambdas, rounds))
}

fn clamp_point(theta: usize, t: usize) -> usize {
    theta.clamp(2, t - 1)
}

/// Estimates exactly `k` change points from the diphoragram of ranked data.
pub fn multi_changepoints(
    kernel: &SampleKernel,
    diph: &Diphoragram,
    k: usize,
    max_iter: usize,
) -> Result<MultiEstimate> {
    let t = kernel.len();
    let tau = diph.tau();
    if k == 0 {
        return Err(Error::invalid("number of change points must be positive"));
    }
    if k * tau >= t {
        return Err(Error::invalid(format!("K * tau = {} must be below T = {t}", k * tau)));
    }
    let mut warnings = Vec::new();
    let mut t_star = select_minimizers(diph, k);
    if t_star.len() < k {
        warnings.push(format!("only {} of {k} separated minima are available", t_star.len()));
    }
    t_star.sort_unstable();
    let blind: Vec<usize> = t_star.iter().map(|&s| clamp_point(s + tau / 2, t)).collect();
    let (mut change_points, lambdas, iterations) = readjust_changepoints(kernel, &t_star, &blind, tau, max_iter)?;
    let before = change_points.len();
    change_points.dedup();
    if change_points.len() < before {
        warnings.push("readjusted change points collided".into());
    }
    Ok(MultiEstimate {
        change_points,
        blind,
        t_star,
        lambdas,
        iterations,
        warnings,
    })
}

/// Acceptance test of the observations in `(lo, hi]`, re-ranked on their own.
fn test_segment(det: &Detector, x: &Matrix, lo: usize, hi: usize) -> Result<Option<NullDecision>> {
    let len = hi - lo;
    let tau = det.params().tau;
    if len < 4 {
        return Ok(None);
    }
    let ranked = vector_ranks(&x.slice_rows(lo, hi))?;
    let kernel = det.sample_kernel(ranked.y())?;
    if len >= 2 * tau {
        return Ok(Some(det.test_kernel(&kernel)?.decision));
    }
    let h = len / 2;
    let halves = kernel.block_sum(0..h, 0..h) + kernel.block_sum(h..2 * h, h..2 * h);
    let delta_bar = halves / (2 * h) as f64;
    let decision = null_test(delta_bar, det.spectrum(), &det.params().null.with_windows(2))?;
    Ok(Some(decision))
}

/// Smallest accepted model: the first `K̂ = 0, 1, …` for which every segment
/// between consecutive estimates passes the acceptance test.
pub(super) fn sma_estimate(det: &Detector, x: &Matrix) -> Result<ChangePointReport> {
    let params = det.params();
    let t = x.rows();
    params.check_length(t)?;
    det.check_dim(x)?;
    let tau = params.tau;
    let ranked = vector_ranks(x)?;
    let kernel = det.sample_kernel(ranked.y())?;
    let diph = sliding_diphoragram(&kernel, tau)?;

    let mut notes = Vec::new();
    let k_cap = params.k_max.min((t - 1) / tau);
    if k_cap < params.k_max {
        notes.push(format!("K_max lowered to {k_cap} to keep K * tau < T"));
    }

    let mut last: Option<ChangePointReport> = None;
    for k_hat in 0..=k_cap {
        let mut report = ChangePointReport::empty(Method::MultiSma);
        report.warnings = notes.clone();
        let points = if k_hat == 0 {
            Vec::new()
        } else {
            let est = multi_changepoints(&kernel, &diph, k_hat, params.max_iter)?;
            report.warnings.extend(est.warnings.iter().cloned());
            if est.change_points.len() < k_hat {
                break;
            }
            report.t_star = est.t_star;
            est.change_points
        };
        let mut bounds = vec![0];
        bounds.extend_from_slice(&points);
        bounds.push(t);
        let mut all_accept = true;
        for w in bounds.windows(2) {
            match test_segment(det, x, w[0], w[1])? {
                Some(d) => {
                    report.p_values.push(d.p_value);
                    report.statistics.push(d.statistic);
                    all_accept &= !d.reject;
                }
                None => {
                    report.p_values.push(0.0);
                    report.statistics.push(0.0);
                    report
                        .warnings
                        .push(format!("segment ({}, {}] too short to test", w[0], w[1]));
                }
            }
        }
        report.detected = k_hat > 0;
        report.k_hat = Some(k_hat);
        report.set_change_points(points, t);
        if all_accept {
            return Ok(report);
        }
        last = Some(report);
    }
    let mut report = last.expect("K = 0 is always evaluated");
    report.accepted = false;
    report.detected = true;
    report
        .warnings
        .push("no model up to K_max passed every segment test".into());
    Ok(report)
}
