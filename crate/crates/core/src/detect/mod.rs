//! Change-point detectors built on the sliding diphoragram.

mod alternatives;
mod multi;

pub use alternatives::{
    distance_profile, distance_statistic, iterate_ratio, ratio_profile, ratio_statistic, RatioIteration,
};
pub use multi::{multi_changepoints, readjust_changepoints, MultiEstimate};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::discrepancy::{mean_sliding_discrepancy, sliding_diphoragram, Diphoragram, SampleKernel};
use crate::error::{Error, Result};
use crate::kernels::{KernelFamily, KernelSpec};
use crate::matrix::Matrix;
use crate::nulldist::{null_test, nystrom_spectrum, NullDecision, NullTestParams, Spectrum};
use crate::transport::vector_ranks;

/// Detector settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionParams {
    /// Sliding-window bandwidth `τ`.
    pub tau: usize,
    pub kernel: KernelFamily,
    /// Kernel weight `β`.
    pub beta: f64,
    /// Acceptance-test settings, including the level `γ`.
    pub null: NullTestParams,
    /// Readjustment rounds for multiple change points.
    pub max_iter: usize,
    /// Largest number of change points tried by the smallest accepted model.
    pub k_max: usize,
}

impl DetectionParams {
    pub fn new(tau: usize, gamma: f64, kernel: KernelFamily) -> Self {
        Self {
            tau,
            kernel,
            beta: 1.0,
            null: NullTestParams::new(gamma),
            max_iter: 10,
            k_max: 10,
        }
    }

    pub fn gamma(&self) -> f64 {
        self.null.gamma
    }

    pub fn validate(&self) -> Result<()> {
        if self.tau < 2 {
            return Err(Error::invalid(format!(
                "bandwidth tau must be at least 2, got {}",
                self.tau
            )));
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(Error::invalid(format!(
                "kernel weight beta must be positive, got {}",
                self.beta
            )));
        }
        self.null.validate()
    }

    fn check_length(&self, t: usize) -> Result<()> {
        self.validate()?;
        if t < 2 * self.tau {
            return Err(Error::invalid(format!(
                "sample of length {t} is shorter than 2 * tau = {}",
                2 * self.tau
            )));
        }
        Ok(())
    }
}

/// Which estimator produced a report.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Diphoragram,
    Distance,
    RatioIter,
    MultiSma,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Diphoragram => "diphoragram",
            Method::Distance => "distance",
            Method::RatioIter => "ratio-iter",
            Method::MultiSma => "multi-sma",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "diphoragram" | "single" => Ok(Method::Diphoragram),
            "distance" => Ok(Method::Distance),
            "ratio" | "ratio-iter" => Ok(Method::RatioIter),
            "sma" | "multi" | "multi-sma" => Ok(Method::MultiSma),
            other => Err(Error::invalid(format!("unknown method '{other}'"))),
        }
    }
}

/// Detector output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChangePointReport {
    pub method: Method,
    pub detected: bool,
    /// Estimated change points `θ̂`, ascending; index of the last
    /// observation before each change (1-based).
    pub change_points: Vec<usize>,
    /// Diphoragram minimizers behind each estimate.
    pub t_star: Vec<usize>,
    /// Segment proportions `r̂`: `θ̂¹/T, (θ̂²−θ̂¹)/T, …`.
    pub ratios: Vec<f64>,
    /// One p-value per tested segment.
    pub p_values: Vec<f64>,
    /// Mean sliding discrepancy per tested segment.
    pub statistics: Vec<f64>,
    /// Selected number of change points (smallest accepted model only).
    pub k_hat: Option<usize>,
    /// `false` when no model up to `K_max` passed every segment test.
    pub accepted: bool,
    pub warnings: Vec<String>,
}

impl ChangePointReport {
    fn empty(method: Method) -> Self {
        Self {
            method,
            detected: false,
            change_points: Vec::new(),
            t_star: Vec::new(),
            ratios: Vec::new(),
            p_values: Vec::new(),
            statistics: Vec::new(),
            k_hat: None,
            accepted: true,
            warnings: Vec::new(),
        }
    }

    fn set_change_points(&mut self, points: Vec<usize>, t: usize) {
        let mut prev = 0;
        self.ratios = points
            .iter()
            .map(|&p| {
                let r = (p - prev) as f64 / t as f64;
                prev = p;
                r
            })
            .collect();
        self.change_points = points;
    }
}

/// `θ̂ = t*/(1 − 1/a)` with `a = ⌊T/τ⌋`, rounded half up and clipped to
/// `[τ, T − τ]`.
pub fn estimate_from_t_star(t_star: usize, t: usize, tau: usize) -> Result<usize> {
    if tau == 0 || t < 2 * tau {
        return Err(Error::invalid(format!(
            "need a = floor(T / tau) >= 2; got T = {t}, tau = {tau}"
        )));
    }
    let a = t / tau;
    // t*·a/(a−1) in integer arithmetic.
    let num = 2 * t_star * a + (a - 1);
    let theta = num / (2 * (a - 1));
    Ok(theta.clamp(tau, t - tau))
}

/// `(t*, θ̂)`: the smallest minimizer of the diphoragram and the adjusted
/// change-point estimate.
pub fn single_changepoint_from_diphoragram(diph: &Diphoragram) -> Result<(usize, usize)> {
    let t_star = diph.argmin();
    Ok((t_star, estimate_from_t_star(t_star, diph.sample_len(), diph.tau())?))
}

/// Acceptance test of one ranked sample.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleTest {
    pub diphoragram: Diphoragram,
    pub delta_bar: f64,
    pub decision: NullDecision,
}

/// Change-point detector with a cached null spectrum.
///
/// The spectrum depends only on the kernel and dimension, so one detector
/// serves every sample (and segment) of that dimension.
#[derive(Clone, Debug)]
pub struct Detector {
    params: DetectionParams,
    spectrum: Spectrum,
}

impl Detector {
    /// Builds the Nyström spectrum for `dim`-dimensional data.
    pub fn new(params: DetectionParams, dim: usize) -> Result<Self> {
        params.validate()?;
        let spec = KernelSpec::new(params.kernel, params.beta, dim)?;
        let spectrum = nystrom_spectrum(&spec, params.null.nodes, params.null.eigen_count)?;
        Ok(Self { params, spectrum })
    }

    /// Reuses a precomputed spectrum, which must match the kernel settings.
    pub fn with_spectrum(params: DetectionParams, spectrum: Spectrum) -> Result<Self> {
        params.validate()?;
        let k = spectrum.kernel();
        if k.family() != params.kernel || k.beta() != params.beta {
            return Err(Error::invalid(format!(
                "null table was built for the {} kernel with beta = {}, not {} with beta = {}",
                k.family(),
                k.beta(),
                params.kernel,
                params.beta
            )));
        }
        Ok(Self { params, spectrum })
    }

    pub fn params(&self) -> &DetectionParams {
        &self.params
    }

    pub fn spectrum(&self) -> &Spectrum {
        &self.spectrum
    }

    pub fn kernel(&self) -> &KernelSpec {
        self.spectrum.kernel()
    }

    fn check_dim(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.spectrum.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.spectrum.dim(),
                found: x.cols(),
            });
        }
        Ok(())
    }

    /// Kernel table over ranked points.
    pub fn sample_kernel(&self, ranked: &Matrix) -> Result<SampleKernel> {
        self.check_dim(ranked)?;
        SampleKernel::new(self.kernel(), ranked)
    }

    /// Diphoragram, mean sliding discrepancy and null test of ranked points.
    pub fn test_kernel(&self, kernel: &SampleKernel) -> Result<SampleTest> {
        let t = kernel.len();
        self.params.check_length(t)?;
        let diph = sliding_diphoragram(kernel, self.params.tau)?;
        let delta_bar = mean_sliding_discrepancy(&diph)?;
        let decision = null_test(
            delta_bar,
            &self.spectrum,
            &self.params.null.with_windows(diph.window_count()),
        )?;
        Ok(SampleTest {
            diphoragram: diph,
            delta_bar,
            decision,
        })
    }

    /// Single change point from already ranked points.
    pub fn detect_single_ranked(&self, ranked: &Matrix) -> Result<ChangePointReport> {
        let kernel = self.sample_kernel(ranked)?;
        let test = self.test_kernel(&kernel)?;
        Ok(self.single_report(&test, ranked.rows()))
    }

    fn single_report(&self, test: &SampleTest, t: usize) -> ChangePointReport {
        let mut report = ChangePointReport::empty(Method::Diphoragram);
        report.p_values.push(test.decision.p_value);
        report.statistics.push(test.delta_bar);
        if t < 4 * self.params.tau {
            report.warnings.push(format!(
                "T = {t} is below the recommended 4 * tau = {}",
                4 * self.params.tau
            ));
        }
        if test.decision.reject {
            report.detected = true;
            let (t_star, theta) =
                single_changepoint_from_diphoragram(&test.diphoragram).expect("window count checked by the null test");
            report.t_star.push(t_star);
            report.set_change_points(vec![theta], t);
        }
        report
    }

    /// Ranks `x`, tests for a change and, if one is found, locates it.
    pub fn detect_single(&self, x: &Matrix) -> Result<ChangePointReport> {
        self.params.check_length(x.rows())?;
        self.check_dim(x)?;
        let ranked = vector_ranks(x)?;
        self.detect_single_ranked(ranked.y())
    }

    /// As [`Detector::detect_single`], but attaches `(t*, θ̂)` whatever the
    /// outcome of the test.
    pub fn locate_single(&self, x: &Matrix) -> Result<ChangePointReport> {
        self.params.check_length(x.rows())?;
        self.check_dim(x)?;
        let ranked = vector_ranks(x)?;
        let kernel = self.sample_kernel(ranked.y())?;
        let test = self.test_kernel(&kernel)?;
        let mut report = self.single_report(&test, x.rows());
        if !report.detected {
            let (t_star, theta) = single_changepoint_from_diphoragram(&test.diphoragram)?;
            report.t_star.push(t_star);
            report.set_change_points(vec![theta], x.rows());
        }
        Ok(report)
    }

    /// Null test as for [`Detector::detect_single`], locating the change by
    /// maximizing the distance between the empirical measures before and
    /// after a candidate split in `[τ, T − τ]`.
    pub fn detect_distance(&self, x: &Matrix) -> Result<ChangePointReport> {
        self.params.check_length(x.rows())?;
        self.check_dim(x)?;
        let ranked = vector_ranks(x)?;
        let kernel = self.sample_kernel(ranked.y())?;
        let test = self.test_kernel(&kernel)?;
        let mut report = self.single_report(&test, x.rows());
        report.method = Method::Distance;
        if report.detected {
            let tau = self.params.tau;
            let profile = distance_profile(&kernel)?;
            let theta = argmax_in(&profile, tau, x.rows() - tau);
            report.set_change_points(vec![theta], x.rows());
        }
        Ok(report)
    }

    /// Null test as for [`Detector::detect_single`], locating the change by
    /// the ratio iteration started at `r = 1/2`.
    pub fn detect_ratio(&self, x: &Matrix, tol: f64) -> Result<ChangePointReport> {
        self.params.check_length(x.rows())?;
        self.check_dim(x)?;
        let ranked = vector_ranks(x)?;
        let kernel = self.sample_kernel(ranked.y())?;
        let test = self.test_kernel(&kernel)?;
        let mut report = self.single_report(&test, x.rows());
        report.method = Method::RatioIter;
        if report.detected {
            let it = iterate_ratio(&kernel, tol, self.params.max_iter.max(1))?;
            if it.degenerate {
                report.warnings.push("ratio iteration hit an empty side".into());
            }
            let t = x.rows();
            let theta = ((it.ratio * t as f64).round() as usize).clamp(1, t - 1);
            report.t_star.clear();
            report.set_change_points(vec![theta], t);
        }
        Ok(report)
    }

    /// Dispatches on `method`; the smallest accepted model handles any
    /// number of change points.
    pub fn detect(&self, x: &Matrix, method: Method) -> Result<ChangePointReport> {
        match method {
            Method::Diphoragram => self.detect_single(x),
            Method::Distance => self.detect_distance(x),
            Method::RatioIter => self.detect_ratio(x, 1e-3),
            Method::MultiSma => multi::sma_estimate(self, x),
        }
    }

    /// Smallest accepted model.
    pub fn sma_estimate(&self, x: &Matrix) -> Result<ChangePointReport> {
        multi::sma_estimate(self, x)
    }

    /// Exactly `k` change points with iterative readjustment.
    pub fn multi_changepoints(&self, x: &Matrix, k: usize) -> Result<MultiEstimate> {
        self.params.check_length(x.rows())?;
        self.check_dim(x)?;
        let ranked = vector_ranks(x)?;
        let kernel = self.sample_kernel(ranked.y())?;
        let diph = sliding_diphoragram(&kernel, self.params.tau)?;
        multi_changepoints(&kernel, &diph, k, self.params.max_iter)
    }
}

/// `θ` with the largest value among `profile` entries in `[lo, hi]`; the
/// profile is indexed by `θ − 1`.
fn argmax_in(profile: &[f64], lo: usize, hi: usize) -> usize {
    let mut best = lo;
    for theta in lo..=hi {
        if profile[theta - 1] > profile[best - 1] {
            best = theta;
        }
    }
    best
}

/// One-shot single change-point detection.
pub fn detect_single(x: &Matrix, params: &DetectionParams) -> Result<ChangePointReport> {
    Detector::new(params.clone(), x.cols())?.detect_single(x)
}

/// One-shot smallest-accepted-model detection.
pub fn sma_estimate(x: &Matrix, params: &DetectionParams) -> Result<ChangePointReport> {
    Detector::new(params.clone(), x.cols())?.sma_estimate(x)
}
