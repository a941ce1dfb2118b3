//! Split statistics over the empirical measures before and after a
//! candidate change point.

use serde::{Deserialize, Serialize};

use crate::discrepancy::{nonuniformity_inner, EmpiricalMeasure, SampleKernel};
use crate::error::{Error, Result};

/// Smallest side length for split statistics.
const MIN_SIDE: usize = 2;

fn split(kernel: &SampleKernel, theta: usize) -> Result<(EmpiricalMeasure, EmpiricalMeasure)> {
    let t = kernel.len();
    if theta < MIN_SIDE || theta + MIN_SIDE > t {
        return Err(Error::invalid(format!(
            "split {theta} outside [{MIN_SIDE}, {}]",
            t.saturating_sub(MIN_SIDE)
        )));
    }
    Ok((EmpiricalMeasure::new(1, theta)?, EmpiricalMeasure::new(theta + 1, t)?))
}

/// `(‖μ⁻‖², ⟨μ⁻, μ⁺⟩, ‖μ⁺‖²)` for the split after observation `theta`.
fn split_inners(kernel: &SampleKernel, theta: usize) -> Result<(f64, f64, f64)> {
    let (pre, post) = split(kernel, theta)?;
    Ok((
        nonuniformity_inner(kernel, pre, pre)?,
        nonuniformity_inner(kernel, pre, post)?,
        nonuniformity_inner(kernel, post, post)?,
    ))
}

/// `‖μ̂⁻ − μ̂⁺‖²` with `μ̂⁻` on `1..=θ` and `μ̂⁺` on `θ+1..=T`.
pub fn distance_statistic(kernel: &SampleKernel, theta: usize) -> Result<f64> {
    let (pp, pq, qq) = split_inners(kernel, theta)?;
    Ok(pp - 2.0 * pq + qq)
}

fn ratio_from(theta: usize, t: usize, pp: f64, qq: f64) -> Result<f64> {
    let (a, b) = (pp.max(0.0).sqrt(), qq.max(0.0).sqrt());
    if a + b <= 0.0 {
        return Err(Error::DegenerateMeasure(format!(
            "both sides of split {theta} have zero norm"
        )));
    }
    Ok(theta as f64 / t as f64 - b / (a + b))
}

/// `ς(θ) = θ/T − ‖μ̂⁺‖ / (‖μ̂⁻‖ + ‖μ̂⁺‖)`.
pub fn ratio_statistic(kernel: &SampleKernel, theta: usize) -> Result<f64> {
    let (pp, _, qq) = split_inners(kernel, theta)?;
    ratio_from(theta, kernel.len(), pp, qq)
}

/// Block sums for every split in one `O(T²)` pass: entry `θ − 1` holds
/// `(Σ_{pre×pre} 𝒦, Σ_{pre×post} 𝒦, Σ_{post×post} 𝒦)` for `θ = 1..T−1`.
fn split_sums(kernel: &SampleKernel) -> Vec<(f64, f64, f64)> {
    let t = kernel.len();
    let row_totals: Vec<f64> = (0..t).map(|i| (0..t).map(|j| kernel.get(i, j)).sum()).collect();
    let total: f64 = row_totals.iter().sum();
    let mut out = Vec::with_capacity(t.saturating_sub(1));
    let (mut pre, mut rows) = (0.0, 0.0);
    for theta in 1..t {
        let new = theta - 1;
        let cross: f64 = (0..new).map(|j| kernel.get(new, j)).sum();
        pre += 2.0 * cross + kernel.get(new, new);
        rows += row_totals[new];
        let between = rows - pre;
        out.push((pre, between, total - 2.0 * between - pre));
    }
    out
}

/// `dist(θ)` for `θ = 1..T−1` (entry `θ − 1`).
pub fn distance_profile(kernel: &SampleKernel) -> Result<Vec<f64>> {
    let t = kernel.len();
    if t < 2 * MIN_SIDE {
        return Err(Error::invalid(format!("sample of length {t} is too short to split")));
    }
    Ok(split_sums(kernel)
        .into_iter()
        .enumerate()
        .map(|(k, (a, c, b))| {
            let (n, m) = ((k + 1) as f64, (t - k - 1) as f64);
            a / (n * n) - 2.0 * c / (n * m) + b / (m * m)
        })
        .collect())
}

/// `ς(θ)` for `θ = 1..T−1` (entry `θ − 1`); degenerate splits are NaN.
pub fn ratio_profile(kernel: &SampleKernel) -> Result<Vec<f64>> {
    let t = kernel.len();
    if t < 2 * MIN_SIDE {
        return Err(Error::invalid(format!("sample of length {t} is too short to split")));
    }
    Ok(split_sums(kernel)
        .into_iter()
        .enumerate()
        .map(|(k, (a, _, b))| {
            let (n, m) = ((k + 1) as f64, (t - k - 1) as f64);
            ratio_from(k + 1, t, a / (n * n), b / (m * m)).unwrap_or(f64::NAN)
        })
        .collect())
}

/// Result of the ratio fixed-point iteration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioIteration {
    /// Last valid iterate `r̂`.
    pub ratio: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Set when a split left one side empty or both norms vanished.
    pub degenerate: bool,
}

/// `r̂ᵐ = ‖μ̂⁺‖ / (‖μ̂⁻‖ + ‖μ̂⁺‖)` with the split at `round(r̂ᵐ⁻¹·T)`,
/// starting from `r̂⁰ = 1/2`.
pub fn iterate_ratio(kernel: &SampleKernel, tol: f64, max_iter: usize) -> Result<RatioIteration> {
    if max_iter == 0 || tol.is_nan() || tol <= 0.0 {
        return Err(Error::invalid("iterate_ratio needs max_iter >= 1 and tol > 0"));
    }
    let t = kernel.len();
    let mut r = 0.5;
    for m in 1..=max_iter {
        let theta = (r * t as f64).round() as usize;
        let step = if theta == 0 || theta >= t {
            None
        } else {
            let pre = EmpiricalMeasure::new(1, theta)?;
            let post = EmpiricalMeasure::new(theta + 1, t)?;
            let a = nonuniformity_inner(kernel, pre, pre)?.max(0.0).sqrt();
            let b = nonuniformity_inner(kernel, post, post)?.max(0.0).sqrt();
            (a + b > 0.0).then(|| b / (a + b))
        };
        let Some(next) = step else {
            return Ok(RatioIteration {
                ratio: r,
                iterations: m - 1,
                converged: false,
                degenerate: true,
            });
        };
        let moved = (next - r).abs();
        r = next;
        if moved < tol {
            return Ok(RatioIteration {
                ratio: r,
                iterations: m,
                converged: true,
                degenerate: false,
            });
        }
    }
    Ok(RatioIteration {
        ratio: r,
        iterations: max_iter,
        converged: false,
        degenerate: false,
    })
}
