//! Ready-made experiment grids for the standard simulation regimes.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::experiment::ExperimentCell;
use super::simulate::{SegmentDistribution, SimulationSpec};
use crate::detect::{DetectionParams, Method};
use crate::error::{Error, Result};
use crate::kernels::KernelFamily;

/// Named experiment grids.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// No change, standard normal, dimension 1..=12, T = 200, τ = 30.
    Calibration,
    /// Mean shift 0.2..=1.0 at θ = 100, T = 200, d = 3, τ = 30.
    MeanPower,
    /// Variance 2..=10 after θ = 100, T = 200, d = 5, τ = 30.
    VariancePower,
    /// Mean shift 5 at θ = 1000, T = 2000, d = 5, τ = 100.
    Single,
    /// Normal then uniform on [−1, 1]², θ = rT, r = 1/2 down to 13/60, T = 300, τ = 50.
    Midpoint,
    /// N(3·1, I), U[10, 20]³, N(−3·1, I) with θ = (120, 240), T = 300, τ = 50.
    Multi,
}

impl Preset {
    pub const ALL: [Preset; 6] = [
        Preset::Calibration,
        Preset::MeanPower,
        Preset::VariancePower,
        Preset::Single,
        Preset::Midpoint,
        Preset::Multi,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Calibration => "calibration",
            Preset::MeanPower => "mean-power",
            Preset::VariancePower => "variance-power",
            Preset::Single => "single",
            Preset::Midpoint => "midpoint",
            Preset::Multi => "multi",
        }
    }

    /// The grid with `replications` runs per cell.
    pub fn cells(self, kernel: KernelFamily, replications: usize, seed: u64) -> Vec<ExperimentCell> {
        match self {
            Preset::Calibration => (1..=12)
                .map(|d| calibration_cell(200, d, 30, 0.1, kernel, replications, seed + d as u64))
                .collect(),
            Preset::MeanPower => grid(0.2, 1.0, 0.1)
                .into_iter()
                .enumerate()
                .map(|(i, s)| mean_shift_cell(200, 3, 100, s, 30, 0.1, kernel, replications, seed + i as u64))
                .collect(),
            Preset::VariancePower => grid(2.0, 10.0, 0.5)
                .into_iter()
                .enumerate()
                .map(|(i, v)| {
                    let spec = SimulationSpec {
                        t: 200,
                        d: 5,
                        segments: vec![
                            SegmentDistribution::standard_normal(5),
                            SegmentDistribution::gaussian_scaled(5, v),
                        ],
                        change_points: vec![100],
                        seed: seed + i as u64,
                        replications,
                    };
                    cell(
                        format!("variance-{kernel}"),
                        v,
                        spec,
                        30,
                        0.1,
                        kernel,
                        Method::Diphoragram,
                    )
                })
                .collect(),
            Preset::Single => vec![mean_shift_cell(
                2000,
                5,
                1000,
                5.0,
                100,
                0.1,
                kernel,
                replications,
                seed,
            )],
            Preset::Midpoint => (13..=30)
                .rev()
                .map(|k| midpoint_cell(k as f64 / 60.0, kernel, replications, seed + k as u64))
                .collect(),
            Preset::Multi => vec![multi_cell(kernel, replications, seed)],
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown preset '{s}'")))
    }
}

/// `lo, lo + step, …, hi` without accumulating rounding error.
pub fn grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).round() as usize;
    (0..=n).map(|i| lo + i as f64 * step).collect()
}

fn cell(
    label: String,
    value: f64,
    spec: SimulationSpec,
    tau: usize,
    gamma: f64,
    kernel: KernelFamily,
    method: Method,
) -> ExperimentCell {
    ExperimentCell {
        label,
        value,
        spec,
        params: DetectionParams::new(tau, gamma, kernel),
        method,
        locate_always: false,
    }
}

/// Standard normal observations without a change.
pub fn calibration_cell(
    t: usize,
    d: usize,
    tau: usize,
    gamma: f64,
    kernel: KernelFamily,
    replications: usize,
    seed: u64,
) -> ExperimentCell {
    let spec = SimulationSpec::stationary(t, d, SegmentDistribution::standard_normal(d), seed, replications);
    cell(
        format!("null-{kernel}"),
        d as f64,
        spec,
        tau,
        gamma,
        kernel,
        Method::Diphoragram,
    )
}

/// `N(0, I)` up to `theta`, `N(shift·1, I)` after.
#[allow(clippy::too_many_arguments)]
pub fn mean_shift_cell(
    t: usize,
    d: usize,
    theta: usize,
    shift: f64,
    tau: usize,
    gamma: f64,
    kernel: KernelFamily,
    replications: usize,
    seed: u64,
) -> ExperimentCell {
    let spec = SimulationSpec {
        t,
        d,
        segments: vec![
            SegmentDistribution::standard_normal(d),
            SegmentDistribution::gaussian_shift(d, shift),
        ],
        change_points: vec![theta],
        seed,
        replications,
    };
    cell(
        format!("mean-{kernel}"),
        shift,
        spec,
        tau,
        gamma,
        kernel,
        Method::Diphoragram,
    )
}

/// `N(0, I₂)` for the first `r·300` observations, uniform on `[−1, 1]²` after;
/// every run's located change point is scored.
pub fn midpoint_cell(r: f64, kernel: KernelFamily, replications: usize, seed: u64) -> ExperimentCell {
    let t = 300;
    let spec = SimulationSpec {
        t,
        d: 2,
        segments: vec![
            SegmentDistribution::standard_normal(2),
            SegmentDistribution::uniform_cube(2, -1.0, 1.0),
        ],
        change_points: vec![(r * t as f64).round() as usize],
        seed,
        replications,
    };
    let mut c = cell(
        format!("midpoint-{kernel}"),
        r,
        spec,
        50,
        0.1,
        kernel,
        Method::Diphoragram,
    );
    c.locate_always = true;
    c
}

/// Three regimes with changes at 120 and 240, smallest accepted model.
pub fn multi_cell(kernel: KernelFamily, replications: usize, seed: u64) -> ExperimentCell {
    let spec = SimulationSpec {
        t: 300,
        d: 3,
        segments: vec![
            SegmentDistribution::gaussian_shift(3, 3.0),
            SegmentDistribution::uniform_cube(3, 10.0, 20.0),
            SegmentDistribution::gaussian_shift(3, -3.0),
        ],
        change_points: vec![120, 240],
        seed,
        replications,
    };
    cell(format!("multi-{kernel}"), 2.0, spec, 50, 0.1, kernel, Method::MultiSma)
}
