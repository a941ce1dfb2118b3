//! Null distribution of the scaled discrepancy.
//!
//! Under the null hypothesis `τ·Δ̂` behaves like `V(λ) = Σᵢ λᵢ Zᵢ²`, a
//! weighted sum of independent χ²₁ variables whose weights are the
//! eigenvalues of the integral operator with kernel `𝒦`. The eigenvalues are
//! approximated by the Nyström method on Sobol nodes and the distribution
//! function by a truncated Gil-Pelaez type series.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::lds::sobol_prefix;
use crate::matrix::Matrix;

/// Eigenvalues below this are treated as zero.
const EIGEN_FLOOR: f64 = 1e-12;
/// Weights whose share of the total is below this are dropped from the CDF.
const WEIGHT_SHARE_FLOOR: f64 = 1e-3;
/// Chernoff tail bound below which the CDF is reported as exactly 1.
const TAIL_CUTOFF: f64 = 1e-13;
const MAX_SERIES_TERMS: usize = 200_000;

/// Leading eigenvalues of the kernel's integral operator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    eigenvalues: Vec<f64>,
    nodes: usize,
    kernel: KernelSpec,
    trace: f64,
}

impl Spectrum {
    /// Rebuilds a spectrum from stored values, e.g. a cached null table.
    pub fn from_parts(kernel: KernelSpec, nodes: usize, eigenvalues: Vec<f64>, trace: f64) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::invalid("spectrum needs at least one eigenvalue"));
        }
        if eigenvalues.iter().any(|l| !l.is_finite() || *l < 0.0) {
            return Err(Error::invalid("eigenvalues must be finite and nonnegative"));
        }
        if eigenvalues.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::invalid("eigenvalues must be in descending order"));
        }
        Ok(Self {
            eigenvalues,
            nodes,
            kernel,
            trace,
        })
    }

    /// Descending, nonnegative.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn dim(&self) -> usize {
        self.kernel.dim()
    }

    /// `(1/m) Σⱼ 𝒦(zⱼ, zⱼ)` over the Nyström nodes.
    pub fn trace(&self) -> f64 {
        self.trace
    }

    /// Eigenvalues that carry at least 0.1% of the total mass.
    pub fn significant(&self) -> Vec<f64> {
        let total: f64 = self.eigenvalues.iter().sum();
        self.eigenvalues
            .iter()
            .copied()
            .filter(|&l| l > 0.0 && l >= WEIGHT_SHARE_FLOOR * total)
            .collect()
    }
}

/// Top `count` eigenvalues of `(1/m)[k(zᵢ, zⱼ)]` over the rows of `nodes`,
/// descending, with values below `1e-12` clamped to zero.
pub fn nystrom_eigenvalues(nodes: &Matrix, count: usize, kernel: impl Fn(&[f64], &[f64]) -> f64) -> Result<Vec<f64>> {
    let m = nodes.rows();
    if count == 0 || count > m {
        return Err(Error::invalid(format!("need 1 <= N <= m, got N = {count}, m = {m}")));
    }
    let scale = 1.0 / m as f64;
    let mut gram = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let v = scale * kernel(nodes.row(i), nodes.row(j));
            gram[(i, j)] = v;
            gram[(j, i)] = v;
        }
    }
    let eig = SymmetricEigen::new(gram);
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericFailure(
            "eigendecomposition produced non-finite values".into(),
        ));
    }
    vals.sort_by(|a, b| b.total_cmp(a));
    vals.truncate(count);
    for v in &mut vals {
        if *v < EIGEN_FLOOR {
            *v = 0.0;
        }
    }
    Ok(vals)
}

/// Nyström approximation of the kernel's spectrum on the first `m` Sobol
/// points, keeping the top `count` eigenvalues.
pub fn nystrom_spectrum(spec: &KernelSpec, m: usize, count: usize) -> Result<Spectrum> {
    if m < count || count == 0 {
        return Err(Error::invalid(format!(
            "Nystrom needs m >= N >= 1, got m = {m}, N = {count}"
        )));
    }
    let nodes = sobol_prefix(m, spec.dim())?;
    let eigenvalues = nystrom_eigenvalues(&nodes, count, |x, y| spec.centered_unchecked(x, y))?;
    let trace = nodes.iter_rows().map(|z| spec.centered_unchecked(z, z)).sum::<f64>() / m as f64;
    Ok(Spectrum {
        eigenvalues,
        nodes: m,
        kernel: spec.clone(),
        trace,
    })
}

fn check_weights(lambdas: &[f64]) -> Result<()> {
    if lambdas.is_empty() {
        return Err(Error::invalid("weight list is empty"));
    }
    if let Some(l) = lambdas.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
        return Err(Error::invalid(format!("weights must be positive and finite, got {l}")));
    }
    Ok(())
}

fn check_series(terms: usize, alpha: f64) -> Result<()> {
    if terms == 0 {
        return Err(Error::invalid("series length K must be positive"));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::invalid(format!(
            "series parameter alpha must lie in (0, 1], got {alpha}"
        )));
    }
    Ok(())
}

/// Chernoff bound `P(V > x) ≤ inf_s exp(−s·x − ½ Σ ln(1 − 2sλᵢ))`.
pub fn chernoff_upper_tail(lambdas: &[f64], x: f64) -> f64 {
    let mean: f64 = lambdas.iter().sum();
    if x <= mean {
        return 1.0;
    }
    let lmax = lambdas.iter().copied().fold(0.0, f64::max);
    let log_bound = |s: f64| -s * x - 0.5 * lambdas.iter().map(|l| (-2.0 * s * l).ln_1p()).sum::<f64>();
    // The exponent is convex in s on [0, 1/(2 λmax)).
    let (mut lo, mut hi) = (0.0, 0.5 / lmax * (1.0 - 1e-12));
    for _ in 0..200 {
        let a = lo + (hi - lo) / 3.0;
        let b = hi - (hi - lo) / 3.0;
        if log_bound(a) < log_bound(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    log_bound(0.5 * (lo + hi)).exp().min(1.0)
}

/// A point beyond which `V` has mass below `1e-10`: the Chernoff exponent
/// at `s = 1/(4 λmax)`, using `−ln(1 − u) ≤ 2u ln 2` for `u ≤ ½`.
fn tail_point(lambdas: &[f64]) -> f64 {
    let lmax = lambdas.iter().copied().fold(0.0, f64::max);
    let spread: f64 = lambdas.iter().map(|l| -(-l / (2.0 * lmax)).ln_1p()).sum();
    4.0 * lmax * (1e10f64.ln() + 0.5 * spread)
}

fn series(lambdas: &[f64], x: f64, terms: usize, alpha: f64) -> f64 {
    let mut sum = 0.0;
    for k in 0..=terms {
        let h = k as f64 + 0.5;
        let t = h * alpha;
        let mut phase = 0.0;
        let mut log_mod = 0.0;
        for &l in lambdas {
            let u = 2.0 * t * l;
            phase += u.atan();
            log_mod += (u * u).ln_1p();
        }
        sum += (0.5 * phase - t * x).sin() / (PI * h * (0.25 * log_mod).exp());
    }
    0.5 - sum
}

/// `P(V ≤ x)` for `V = Σ λᵢ Zᵢ²` by the truncated series
///
/// `½ − Σ_{k=0}^{K} sin(½ Σᵢ arctan(2tλᵢ) − t·x) / (π (k+½) Πᵢ (1 + 4t²λᵢ²)^{1/4})`,
/// `t = (k+½)α`, clamped to `[0, 1]`.
///
/// The series treats `V` as periodic with period `2π/α`, so `α` acts as an
/// upper bound on the step: it is shrunk (keeping the frequency cutoff
/// `(K+½)α`) until the periodic images of `x` fall below 0 and beyond a
/// point carrying tail mass under `1e-10`. Far in the upper tail, where the
/// Chernoff bound is below `1e-13`, the result is 1; for `x ≤ 0` it is 0.
pub fn weighted_chisq_cdf(lambdas: &[f64], x: f64, terms: usize, alpha: f64) -> Result<f64> {
    check_weights(lambdas)?;
    check_series(terms, alpha)?;
    if x.is_nan() {
        return Err(Error::invalid("CDF argument is NaN"));
    }
    if x <= 0.0 {
        return Ok(0.0);
    }
    if chernoff_upper_tail(lambdas, x) < TAIL_CUTOFF {
        return Ok(1.0);
    }
    let step = alpha
        .min(PI / x)
        .min(2.0 * PI / (tail_point(lambdas) - x).max(f64::MIN_POSITIVE));
    let count = if step < alpha {
        let cutoff = (terms as f64 + 0.5) * alpha;
        ((cutoff / step - 0.5).ceil() as usize).min(MAX_SERIES_TERMS)
    } else {
        terms
    };
    Ok(series(lambdas, x, count, step).clamp(0.0, 1.0))
}

/// Smallest-effort bisection for `x` with `|CDF(x) − p| < 1e-4` on
/// `[0, 20 Σλ]`.
pub fn quantile(lambdas: &[f64], p: f64, terms: usize, alpha: f64) -> Result<f64> {
    check_weights(lambdas)?;
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid(format!("probability must lie in (0, 1), got {p}")));
    }
    let (mut lo, mut hi) = (0.0, 20.0 * lambdas.iter().sum::<f64>());
    if weighted_chisq_cdf(lambdas, hi, terms, alpha)? < p {
        return Err(Error::NumericFailure(format!(
            "quantile {p} lies beyond the bracket [0, {hi}]"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let f = weighted_chisq_cdf(lambdas, mid, terms, alpha)?;
        if (f - p).abs() < 1e-4 {
            return Ok(mid);
        }
        if f < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::NumericFailure(format!(
        "quantile bisection for p = {p} did not converge in 200 iterations"
    )))
}

/// Settings of the acceptance test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NullTestParams {
    /// Level `γ`.
    pub gamma: f64,
    /// Series length `K`.
    pub terms: usize,
    /// Series step `α`.
    pub alpha: f64,
    /// Eigenvalue count `N`.
    pub eigen_count: usize,
    /// Nyström node count `m`.
    pub nodes: usize,
    /// Disjoint window count `a = ⌊T/τ⌋`; set per sample.
    pub windows: usize,
    /// Shift the law by the eigenvalue mass missing from the weights.
    #[serde(default = "default_true")]
    pub remainder: bool,
}

fn default_true() -> bool {
    true
}

impl NullTestParams {
    pub fn new(gamma: f64) -> Self {
        Self {
            gamma,
            ..Self::default()
        }
    }

    pub fn with_windows(&self, windows: usize) -> Self {
        Self {
            windows,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::invalid(format!(
                "level gamma must lie in (0, 1), got {}",
                self.gamma
            )));
        }
        check_series(self.terms, self.alpha)?;
        if self.eigen_count == 0 || self.nodes < self.eigen_count {
            return Err(Error::invalid(format!(
                "need m >= N >= 1, got m = {}, N = {}",
                self.nodes, self.eigen_count
            )));
        }
        Ok(())
    }
}

impl Default for NullTestParams {
    fn default() -> Self {
        Self {
            gamma: 0.1,
            terms: 100,
            alpha: 0.5,
            eigen_count: 50,
            nodes: 512,
            windows: 2,
            remainder: true,
        }
    }
}

/// Outcome of the acceptance test.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NullDecision {
    pub statistic: f64,
    pub p_value: f64,
    /// `true` when a change is declared.
    pub reject: bool,
}

/// Weights of the limit law of `Δ̄`: each significant `λ̂ᵢ/a`, repeated `a` times.
pub fn null_weights(spectrum: &Spectrum, windows: usize) -> Vec<f64> {
    let a = windows as f64;
    spectrum
        .significant()
        .into_iter()
        .flat_map(|l| std::iter::repeat_n(l / a, windows))
        .collect()
}

/// Operator trace not carried by [`null_weights`]: the tail beyond the
/// computed eigenvalues and the dropped small ones.
pub fn remainder_mass(spectrum: &Spectrum) -> f64 {
    (spectrum.trace() - spectrum.significant().iter().sum::<f64>()).max(0.0)
}

/// Tests `Δ̄` against `V((λ̂ᵢ/a)) + r`, with `r` the remainder mass when
/// enabled: `p = P(V + r ≤ Δ̄)` and a change is declared when `p ≥ 1 − γ`.
pub fn null_test(delta_bar: f64, spectrum: &Spectrum, params: &NullTestParams) -> Result<NullDecision> {
    params.validate()?;
    if params.windows < 2 {
        return Err(Error::invalid(format!(
            "null test needs at least 2 windows, got {}",
            params.windows
        )));
    }
    if !delta_bar.is_finite() {
        return Err(Error::NumericFailure(format!("statistic is not finite: {delta_bar}")));
    }
    let weights = null_weights(spectrum, params.windows);
    if weights.is_empty() {
        return Err(Error::NumericFailure("spectrum has no positive eigenvalues".into()));
    }
    let shift = if params.remainder {
        remainder_mass(spectrum)
    } else {
        0.0
    };
    let p = weighted_chisq_cdf(&weights, (delta_bar - shift).max(0.0), params.terms, params.alpha)?;
    Ok(NullDecision {
        statistic: delta_bar,
        p_value: p,
        reject: p >= 1.0 - params.gamma,
    })
}
