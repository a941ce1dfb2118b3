//! Seeded synthetic data with piecewise-constant distributions.
//!
//! Randomness comes from ChaCha8 seeded with the master seed; replication
//! `r` uses stream `r` of that generator, so every replication is
//! reproducible on its own and in any order.

use nalgebra::{Cholesky, DMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Covariance of a Gaussian segment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Covariance {
    /// `σ²·I`.
    Scalar(f64),
    /// Row-major symmetric positive-definite matrix.
    Full(Vec<Vec<f64>>),
}

/// Distribution of one segment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SegmentDistribution {
    Gaussian {
        mean: Vec<f64>,
        covariance: Covariance,
    },
    /// Independent uniform coordinates on the box `[lower, upper]`.
    Uniform {
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
}

impl SegmentDistribution {
    pub fn standard_normal(d: usize) -> Self {
        Self::gaussian_shift(d, 0.0)
    }

    /// `N(shift·1, I)`.
    pub fn gaussian_shift(d: usize, shift: f64) -> Self {
        SegmentDistribution::Gaussian {
            mean: vec![shift; d],
            covariance: Covariance::Scalar(1.0),
        }
    }

    /// `N(0, σ²I)`.
    pub fn gaussian_scaled(d: usize, variance: f64) -> Self {
        SegmentDistribution::Gaussian {
            mean: vec![0.0; d],
            covariance: Covariance::Scalar(variance),
        }
    }

    /// Uniform on `[lo, hi]^d`.
    pub fn uniform_cube(d: usize, lo: f64, hi: f64) -> Self {
        SegmentDistribution::Uniform {
            lower: vec![lo; d],
            upper: vec![hi; d],
        }
    }
}

/// A piecewise-stationary simulation model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationSpec {
    /// Sample length `T`.
    pub t: usize,
    pub d: usize,
    /// One distribution per segment.
    pub segments: Vec<SegmentDistribution>,
    /// Change points `θ`; segment `s` occupies indices `(θ_{s−1}, θ_s]`.
    pub change_points: Vec<usize>,
    pub seed: u64,
    pub replications: usize,
}

enum Sampler {
    Gaussian { mean: Vec<f64>, factor: Factor },
    Uniform { lower: Vec<f64>, width: Vec<f64> },
}

enum Factor {
    Scalar(f64),
    Lower(DMatrix<f64>),
}

impl Sampler {
    fn new(dist: &SegmentDistribution, d: usize) -> Result<Self> {
        let check = |v: &[f64], what: &str| -> Result<()> {
            if v.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: v.len(),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::invalid(format!("{what} has non-finite entries")));
            }
            Ok(())
        };
        match dist {
            SegmentDistribution::Gaussian { mean, covariance } => {
                check(mean, "mean")?;
                let factor = match covariance {
                    Covariance::Scalar(s) => {
                        if !(s.is_finite() && *s > 0.0) {
                            return Err(Error::invalid(format!("variance must be positive, got {s}")));
                        }
                        Factor::Scalar(s.sqrt())
                    }
                    Covariance::Full(rows) => {
                        if rows.len() != d {
                            return Err(Error::DimensionMismatch {
                                expected: d,
                                found: rows.len(),
                            });
                        }
                        for r in rows {
                            check(r, "covariance")?;
                        }
                        let m = DMatrix::from_fn(d, d, |i, j| rows[i][j]);
                        if (0..d).any(|i| (0..i).any(|j| m[(i, j)] != m[(j, i)])) {
                            return Err(Error::invalid("covariance matrix is not symmetric"));
                        }
                        let chol = Cholesky::new(m)
                            .ok_or_else(|| Error::invalid("covariance matrix is not positive definite"))?;
                        Factor::Lower(chol.l())
                    }
                };
                Ok(Sampler::Gaussian {
                    mean: mean.clone(),
                    factor,
                })
            }
            SegmentDistribution::Uniform { lower, upper } => {
                check(lower, "lower bound")?;
                check(upper, "upper bound")?;
                if lower
                    .iter()
                    .zip(upper)
                    .any(|(l, u)| u.partial_cmp(l) != Some(std::cmp::Ordering::Greater))
                {
                    return Err(Error::invalid("uniform box needs lower < upper in every coordinate"));
                }
                Ok(Sampler::Uniform {
                    lower: lower.clone(),
                    width: upper.iter().zip(lower).map(|(u, l)| u - l).collect(),
                })
            }
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        match self {
            Sampler::Gaussian { mean, factor } => {
                let z: Vec<f64> = (0..out.len()).map(|_| rng.sample(StandardNormal)).collect();
                match factor {
                    Factor::Scalar(s) => {
                        for ((o, m), zi) in out.iter_mut().zip(mean).zip(&z) {
                            *o = m + s * zi;
                        }
                    }
                    Factor::Lower(l) => {
                        for (i, o) in out.iter_mut().enumerate() {
                            *o = mean[i] + (0..=i).map(|j| l[(i, j)] * z[j]).sum::<f64>();
                        }
                    }
                }
            }
            Sampler::Uniform { lower, width } => {
                for ((o, l), w) in out.iter_mut().zip(lower).zip(width) {
                    *o = l + w * rng.random::<f64>();
                }
            }
        }
    }
}

impl SimulationSpec {
    /// `T` observations from a single distribution.
    pub fn stationary(t: usize, d: usize, dist: SegmentDistribution, seed: u64, replications: usize) -> Self {
        Self {
            t,
            d,
            segments: vec![dist],
            change_points: Vec::new(),
            seed,
            replications,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.t < 2 || self.d == 0 {
            return Err(Error::invalid(format!(
                "need T >= 2 and d >= 1, got T = {}, d = {}",
                self.t, self.d
            )));
        }
        if self.segments.len() != self.change_points.len() + 1 {
            return Err(Error::invalid(format!(
                "{} segments do not match {} change points",
                self.segments.len(),
                self.change_points.len()
            )));
        }
        let mut prev = 0;
        for &c in &self.change_points {
            if c <= prev || c >= self.t {
                return Err(Error::invalid(format!(
                    "change points must be strictly ascending inside (0, {}), got {:?}",
                    self.t, self.change_points
                )));
            }
            prev = c;
        }
        for s in &self.segments {
            Sampler::new(s, self.d)?;
        }
        Ok(())
    }

    /// Observations of replication `rep`.
    pub fn sample(&self, rep: u64) -> Result<Matrix> {
        self.validate()?;
        let samplers = self
            .segments
            .iter()
            .map(|s| Sampler::new(s, self.d))
            .collect::<Result<Vec<_>>>()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(rep);
        let mut out = Matrix::zeros(self.t, self.d);
        let mut seg = 0;
        for i in 0..self.t {
            while seg < self.change_points.len() && i >= self.change_points[seg] {
                seg += 1;
            }
            samplers[seg].draw(&mut rng, out.row_mut(i));
        }
        Ok(out)
    }
}

/// First replication of `spec`.
pub fn simulate(spec: &SimulationSpec) -> Result<Matrix> {
    spec.sample(0)
}
