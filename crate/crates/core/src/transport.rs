//! Empirical Monge–Kantorovich vector ranks.
//!
//! Observations are matched one-to-one with the Sobol prefix of the same
//! length by an exact minimum-cost assignment under squared Euclidean cost.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lds::sobol_prefix;
use crate::matrix::Matrix;

/// Optimal permutation together with its total cost.
#[derive(Clone, Debug, PartialEq)]
pub struct Assignment {
    /// `sigma[i]` is the column assigned to row `i`.
    pub sigma: Vec<usize>,
    pub cost: f64,
}

/// Exact minimum-cost perfect matching on a square cost matrix.
///
/// Shortest augmenting paths with dual potentials, `O(n³)` worst case. Ties
/// go to the lowest column index, so results are reproducible.
pub fn optimal_assignment(cost: &Matrix) -> Result<Assignment> {
    let n = cost.rows();
    if n != cost.cols() {
        return Err(Error::invalid(format!(
            "cost matrix must be square, got {}x{}",
            cost.rows(),
            cost.cols()
        )));
    }
    cost.check_finite()?;
    let sigma = solve(n, cost.as_slice());
    let total = sigma.iter().enumerate().map(|(i, &j)| cost.row(i)[j]).sum();
    Ok(Assignment { sigma, cost: total })
}

fn solve(n: usize, a: &[f64]) -> Vec<usize> {
    // Index 0 is a virtual column/row; real ones are 1..=n.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![0.0f64; n + 1];
    let mut used = vec![false; n + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        minv.iter_mut().for_each(|m| *m = f64::INFINITY);
        used.iter_mut().for_each(|b| *b = false);
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let row = &a[(i0 - 1) * n..i0 * n];
            let ui = u[i0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = row[j - 1] - ui - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut sigma = vec![0; n];
    for j in 1..=n {
        sigma[owner[j] - 1] = j - 1;
    }
    sigma
}

/// Vector ranks of a sample: `Y[i] = u[sigma[i]]` where `u` is the Sobol
/// prefix of length `T`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedSample {
    y: Matrix,
    sigma: Vec<usize>,
    cost: f64,
}

impl RankedSample {
    /// Ranked points, one row per observation in the original time order.
    pub fn y(&self) -> &Matrix {
        &self.y
    }

    /// 0-based indices into the Sobol prefix.
    pub fn sigma(&self) -> &[usize] {
        &self.sigma
    }

    /// `Σᵢ ‖Xᵢ − u_{σ(i)}‖²`.
    pub fn cost(&self) -> f64 {
        self.cost
    }

    pub fn len(&self) -> usize {
        self.y.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.y.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.y.cols()
    }

    pub fn into_points(self) -> Matrix {
        self.y
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Squared Euclidean cost between every observation and every reference point.
pub fn transport_cost_matrix(x: &Matrix, reference: &Matrix) -> Result<Matrix> {
    if x.cols() != reference.cols() {
        return Err(Error::DimensionMismatch {
            expected: reference.cols(),
            found: x.cols(),
        });
    }
    let mut data = Vec::with_capacity(x.rows() * reference.rows());
    for xi in x.iter_rows() {
        data.extend(reference.iter_rows().map(|u| squared_distance(xi, u)));
    }
    Matrix::from_vec(x.rows(), reference.rows(), data)
}

/// Empirical vector ranks of `x` against the Sobol prefix.
pub fn vector_ranks(x: &Matrix) -> Result<RankedSample> {
    if x.rows() < 2 {
        return Err(Error::invalid(format!(
            "vector ranks need at least 2 observations, got {}",
            x.rows()
        )));
    }
    x.check_finite()?;
    let u = sobol_prefix(x.rows(), x.cols())?;
    let cost = transport_cost_matrix(x, &u)?;
    let sigma = solve(x.rows(), cost.as_slice());
    let mut y = Matrix::zeros(x.rows(), x.cols());
    let mut total = 0.0;
    for (i, &j) in sigma.iter().enumerate() {
        y.row_mut(i).copy_from_slice(u.row(j));
        total += squared_distance(x.row(i), u.row(j));
    }
    Ok(RankedSample { y, sigma, cost: total })
}
