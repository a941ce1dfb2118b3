//! Squared quadratic discrepancy, Gram matrices, the sliding diphoragram and
//! inner products of empirical measures in the space of nonuniformities.
//!
//! Everything here is a quadratic form in the centred kernel `𝒦`: for a
//! point set `y₁..yₙ` the squared discrepancy is `(1/n²) Σᵢⱼ 𝒦(yᵢ, yⱼ)`, and
//! the inner product of two empirical measures is the cross block average.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::matrix::Matrix;

/// Samples up to this length get a dense `T × T` kernel table; longer ones
/// evaluate `𝒦` on demand.
pub const DENSE_GRAM_LIMIT: usize = 8000;

fn check_points(spec: &KernelSpec, points: &Matrix) -> Result<()> {
    if points.rows() == 0 {
        return Err(Error::invalid("point set is empty"));
    }
    if points.cols() != spec.dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.dim(),
            found: points.cols(),
        });
    }
    Ok(())
}

/// Symmetric `n × n` table of `𝒦(yᵢ, yⱼ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GramMatrix {
    n: usize,
    data: Vec<f64>,
}

impl GramMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    /// Sum of every entry, accumulated row by row.
    pub fn total(&self) -> f64 {
        (0..self.n).map(|i| self.row(i).iter().sum::<f64>()).sum()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Gram matrix of the centred kernel over `points`.
///
/// Rows are filled in parallel; every entry is computed independently, so
/// the result does not depend on scheduling.
pub fn gram_matrix(spec: &KernelSpec, points: &Matrix) -> Result<GramMatrix> {
    check_points(spec, points)?;
    let n = points.rows();
    let marg: Vec<f64> = points.iter_rows().map(|p| spec.marginal_unchecked(p)).collect();
    let mut data = vec![0.0; n * n];
    data.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        for (j, out) in row.iter_mut().enumerate() {
            // Evaluate with the lower index first so (i, j) and (j, i) agree.
            let (a, b) = if i <= j { (i, j) } else { (j, i) };
            *out = spec.centered_with_marginals(points.row(a), points.row(b), marg[a], marg[b]);
        }
    });
    Ok(GramMatrix { n, data })
}

/// Kernel values over one sample: a dense table for short samples,
/// otherwise evaluated on demand from cached marginals.
#[derive(Clone, Debug)]
pub struct SampleKernel {
    spec: KernelSpec,
    points: Matrix,
    marginals: Vec<f64>,
    dense: Option<GramMatrix>,
}

impl SampleKernel {
    pub fn new(spec: &KernelSpec, points: &Matrix) -> Result<Self> {
        Self::with_limit(spec, points, DENSE_GRAM_LIMIT)
    }

    /// As [`SampleKernel::new`] with an explicit dense-table cutoff.
    pub fn with_limit(spec: &KernelSpec, points: &Matrix, dense_limit: usize) -> Result<Self> {
        check_points(spec, points)?;
        let dense = if points.rows() <= dense_limit {
            Some(gram_matrix(spec, points)?)
        } else {
            None
        };
        Ok(Self {
            spec: spec.clone(),
            points: points.clone(),
            marginals: points.iter_rows().map(|p| spec.marginal_unchecked(p)).collect(),
            dense,
        })
    }

    pub fn len(&self) -> usize {
        self.points.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.rows() == 0
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn points(&self) -> &Matrix {
        &self.points
    }

    pub fn is_dense(&self) -> bool {
        self.dense.is_some()
    }

    /// `𝒦(yᵢ, yⱼ)`, 0-based.
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        match &self.dense {
            Some(g) => g.get(i, j),
            None => {
                let (a, b) = if i <= j { (i, j) } else { (j, i) };
                self.spec.centered_with_marginals(
                    self.points.row(a),
                    self.points.row(b),
                    self.marginals[a],
                    self.marginals[b],
                )
            }
        }
    }

    /// `Σ_{i ∈ a} Σ_{j ∈ b} 𝒦(yᵢ, yⱼ)` over 0-based half-open ranges.
    pub fn block_sum(&self, a: std::ops::Range<usize>, b: std::ops::Range<usize>) -> f64 {
        a.map(|i| b.clone().map(|j| self.get(i, j)).sum::<f64>()).sum()
    }
}

/// `(1/n²) Σᵢⱼ 𝒦(yᵢ, yⱼ)`.
pub fn squared_discrepancy(spec: &KernelSpec, points: &Matrix) -> Result<f64> {
    check_points(spec, points)?;
    let n = points.rows();
    let marg: Vec<f64> = points.iter_rows().map(|p| spec.marginal_unchecked(p)).collect();
    let mut total = 0.0;
    for i in 0..n {
        let mut row = 0.0;
        for j in 0..n {
            let (a, b) = if i <= j { (i, j) } else { (j, i) };
            row += spec.centered_with_marginals(points.row(a), points.row(b), marg[a], marg[b]);
        }
        total += row;
    }
    Ok(total / (n * n) as f64)
}

/// The same quantity through the uncentred kernel:
/// `∫∫η − (2/n) Σᵢ ∫η(·, yᵢ) + (1/n²) Σᵢⱼ η(yᵢ, yⱼ)`.
pub fn squared_discrepancy_three_term(spec: &KernelSpec, points: &Matrix) -> Result<f64> {
    check_points(spec, points)?;
    let n = points.rows() as f64;
    let cross: f64 = points.iter_rows().map(|p| spec.marginal_unchecked(p)).sum();
    let mut quad = 0.0;
    for x in points.iter_rows() {
        quad += points.iter_rows().map(|y| spec.eta_unchecked(x, y)).sum::<f64>();
    }
    Ok(spec.m_pow_d() - 2.0 * cross / n + quad / (n * n))
}

/// Windowed squared discrepancies `Δ̂ₜ` of a ranked sample.
///
/// Window `t` (1-based) holds the `τ` points `t, …, t+τ−1`, so there are
/// `T − τ + 1` values and disjoint windows tile the sample exactly when
/// `τ` divides `T`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diphoragram {
    values: Vec<f64>,
    tau: usize,
    sample_len: usize,
}

impl Diphoragram {
    /// Wraps precomputed values; `values.len()` must equal `T − τ + 1`.
    pub fn from_values(values: Vec<f64>, tau: usize, sample_len: usize) -> Result<Self> {
        if tau < 1 || tau > sample_len || values.len() != sample_len - tau + 1 {
            return Err(Error::invalid(format!(
                "{} diphoragram values do not fit T = {sample_len}, tau = {tau}",
                values.len()
            )));
        }
        Ok(Self {
            values,
            tau,
            sample_len,
        })
    }

    /// `Δ̂` indexed from 0; entry `k` is window `t = k + 1`.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn tau(&self) -> usize {
        self.tau
    }

    pub fn sample_len(&self) -> usize {
        self.sample_len
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Number of disjoint windows `⌊T/τ⌋`.
    pub fn window_count(&self) -> usize {
        self.sample_len / self.tau
    }

    /// `(t, Δ̂ₜ)` with 1-based `t`.
    pub fn series(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.values.iter().enumerate().map(|(k, &v)| (k + 1, v))
    }

    /// Smallest 1-based `t` attaining the minimum.
    pub fn argmin(&self) -> usize {
        let mut best = 0;
        for (k, &v) in self.values.iter().enumerate() {
            if v < self.values[best] {
                best = k;
            }
        }
        best + 1
    }
}

/// Sliding diphoragram via the difference recurrence: moving the window by
/// one drops the row of the leaving point and adds the row of the entering
/// point, `O(τ)` kernel lookups per step.
pub fn sliding_diphoragram(kernel: &SampleKernel, tau: usize) -> Result<Diphoragram> {
    let n = kernel.len();
    if tau < 2 || tau > n {
        return Err(Error::invalid(format!(
            "bandwidth must satisfy 1 < tau <= T; got tau = {tau}, T = {n}"
        )));
    }
    let norm = (tau * tau) as f64;
    let mut values = Vec::with_capacity(n - tau + 1);
    let mut sum = kernel.block_sum(0..tau, 0..tau);
    values.push(sum / norm);
    for s in 0..n - tau {
        let leave: f64 = (s..s + tau).map(|i| kernel.get(s, i)).sum();
        let enter: f64 = (s + 1..=s + tau).map(|i| kernel.get(s + tau, i)).sum();
        sum += (2.0 * enter - kernel.get(s + tau, s + tau)) - (2.0 * leave - kernel.get(s, s));
        values.push(sum / norm);
    }
    Diphoragram::from_values(values, tau, n)
}

/// Convenience wrapper building the kernel table first.
pub fn sliding_diphoragram_of(spec: &KernelSpec, points: &Matrix, tau: usize) -> Result<Diphoragram> {
    sliding_diphoragram(&SampleKernel::new(spec, points)?, tau)
}

/// `Δ̂ₜ` recomputed from scratch (1-based `t`).
pub fn window_discrepancy(kernel: &SampleKernel, t: usize, tau: usize) -> Result<f64> {
    if t == 0 || tau == 0 || t + tau - 1 > kernel.len() {
        return Err(Error::invalid(format!("window t = {t}, tau = {tau} out of range")));
    }
    let r = t - 1..t - 1 + tau;
    Ok(kernel.block_sum(r.clone(), r) / (tau * tau) as f64)
}

/// Mean sliding discrepancy `Δ̄`: the average of `τ·Δ̂` over the `⌊T/τ⌋`
/// disjoint windows starting at `1, 1+τ, 1+2τ, …`. A ragged tail shorter
/// than `τ` is ignored.
pub fn mean_sliding_discrepancy(diph: &Diphoragram) -> Result<f64> {
    let a = diph.window_count();
    if a < 2 {
        return Err(Error::invalid(format!(
            "mean sliding discrepancy needs at least 2 disjoint windows; T = {}, tau = {} gives {a}",
            diph.sample_len, diph.tau
        )));
    }
    let tau = diph.tau as f64;
    let sum: f64 = (0..a).map(|j| tau * diph.values[j * diph.tau]).sum();
    Ok(sum / a as f64)
}

/// Uniform empirical measure on the sample indices `lo..=hi` (1-based).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmpiricalMeasure {
    lo: usize,
    hi: usize,
}

impl EmpiricalMeasure {
    pub fn new(lo: usize, hi: usize) -> Result<Self> {
        if lo == 0 || hi < lo {
            return Err(Error::invalid(format!("empty or invalid index range [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    pub fn lo(&self) -> usize {
        self.lo
    }

    pub fn hi(&self) -> usize {
        self.hi
    }

    pub fn len(&self) -> usize {
        self.hi - self.lo + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn range(&self) -> std::ops::Range<usize> {
        self.lo - 1..self.hi
    }
}

/// `⟨μ̂_a, μ̂_b⟩ = (1/|a||b|) Σ_{i∈a} Σ_{j∈b} 𝒦(yᵢ, yⱼ)`.
pub fn nonuniformity_inner(kernel: &SampleKernel, a: EmpiricalMeasure, b: EmpiricalMeasure) -> Result<f64> {
    let n = kernel.len();
    if a.hi > n || b.hi > n {
        return Err(Error::invalid(format!("measure range exceeds sample length {n}")));
    }
    Ok(kernel.block_sum(a.range(), b.range()) / (a.len() * b.len()) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelFamily;
    use crate::lds::sobol_prefix;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn uniform(n: usize, d: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_vec(n, d, (0..n * d).map(|_| rng.random::<f64>()).collect()).unwrap()
    }

    #[test]
    fn single_point_midpoint() {
        let s = KernelSpec::with_defaults(KernelFamily::Centered, 1);
        let p = Matrix::from_rows(&[[0.5]]).unwrap();
        assert!((squared_discrepancy(&s, &p).unwrap() - 1.0 / 12.0).abs() < 1e-15);
        let g = gram_matrix(&s, &p).unwrap();
        assert!((g.get(0, 0) - 1.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn empty_input_rejected() {
        let s = KernelSpec::with_defaults(KernelFamily::Star, 2);
        let p = Matrix::from_vec(0, 2, vec![]).unwrap();
        assert!(squared_discrepancy(&s, &p).is_err());
        let wrong = uniform(3, 3, 1);
        assert!(matches!(gram_matrix(&s, &wrong), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn three_term_form_agrees() {
        for fam in [KernelFamily::Star, KernelFamily::Centered] {
            let s = KernelSpec::new(fam, 0.9, 3).unwrap();
            let p = uniform(50, 3, 7);
            let a = squared_discrepancy(&s, &p).unwrap();
            let b = squared_discrepancy_three_term(&s, &p).unwrap();
            assert!((a - b).abs() < 1e-10, "{fam}: {a} vs {b}");
        }
    }

    #[test]
    fn gram_is_symmetric_and_sums_to_discrepancy() {
        let s = KernelSpec::with_defaults(KernelFamily::Star, 4);
        let p = uniform(40, 4, 3);
        let g = gram_matrix(&s, &p).unwrap();
        for i in 0..40 {
            for j in 0..40 {
                assert_eq!(g.get(i, j).to_bits(), g.get(j, i).to_bits());
            }
        }
        let d = squared_discrepancy(&s, &p).unwrap();
        assert!((g.total() / 1600.0 - d).abs() < 1e-14);
    }

    #[test]
    fn sobol_prefix_discrepancy_decays() {
        for fam in [KernelFamily::Star, KernelFamily::Centered] {
            let s = KernelSpec::with_defaults(fam, 2);
            let vals: Vec<f64> = [16, 64, 256]
                .iter()
                .map(|&n| squared_discrepancy(&s, &sobol_prefix(n, 2).unwrap()).unwrap())
                .collect();
            assert!(vals[0] > vals[1] && vals[1] > vals[2], "{fam}: {vals:?}");
        }
    }

    #[test]
    fn one_dimensional_star_decay_on_sobol() {
        let s = KernelSpec::with_defaults(KernelFamily::Star, 1);
        let mut prev = f64::INFINITY;
        for m in 1..=9 {
            let v = squared_discrepancy(&s, &sobol_prefix(1 << m, 1).unwrap()).unwrap();
            assert!(v < prev, "n = 2^{m}");
            prev = v;
        }
    }

    #[test]
    fn full_window_equals_whole_sample() {
        let s = KernelSpec::with_defaults(KernelFamily::Centered, 2);
        let p = uniform(30, 2, 11);
        let diph = sliding_diphoragram_of(&s, &p, 30).unwrap();
        assert_eq!(diph.len(), 1);
        let d = squared_discrepancy(&s, &p).unwrap();
        assert!((diph.values()[0] - d).abs() < 1e-12);
    }

    #[test]
    fn incremental_matches_direct() {
        let s = KernelSpec::with_defaults(KernelFamily::Star, 3);
        let p = uniform(400, 3, 5);
        let k = SampleKernel::new(&s, &p).unwrap();
        let diph = sliding_diphoragram(&k, 40).unwrap();
        assert_eq!(diph.len(), 361);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let t = rng.random_range(1..=diph.len());
            let direct = window_discrepancy(&k, t, 40).unwrap();
            assert!((direct - diph.values()[t - 1]).abs() < 1e-9);
        }
        assert!(diph.values().iter().all(|&v| v >= -1e-9));
    }

    #[test]
    fn streaming_kernel_matches_dense() {
        let s = KernelSpec::with_defaults(KernelFamily::Centered, 2);
        let p = uniform(120, 2, 2);
        let dense = SampleKernel::new(&s, &p).unwrap();
        let lazy = SampleKernel::with_limit(&s, &p, 10).unwrap();
        assert!(dense.is_dense() && !lazy.is_dense());
        let a = sliding_diphoragram(&dense, 25).unwrap();
        let b = sliding_diphoragram(&lazy, 25).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn bandwidth_bounds() {
        let s = KernelSpec::with_defaults(KernelFamily::Star, 1);
        let k = SampleKernel::new(&s, &uniform(10, 1, 0)).unwrap();
        assert!(sliding_diphoragram(&k, 1).is_err());
        assert!(sliding_diphoragram(&k, 11).is_err());
        assert!(sliding_diphoragram(&k, 10).is_ok());
    }

    #[test]
    fn mean_sliding_discrepancy_arithmetic() {
        let d = Diphoragram::from_values(vec![0.3; 6], 5, 10).unwrap();
        assert!((mean_sliding_discrepancy(&d).unwrap() - 1.5).abs() < 1e-15);
        let short = Diphoragram::from_values(vec![0.3; 4], 7, 10).unwrap();
        assert!(mean_sliding_discrepancy(&short).is_err());
        // Ragged tail: T = 23, tau = 5 uses windows 1, 6, 11, 16.
        let mut v = vec![0.0; 19];
        for (j, t) in [0usize, 5, 10, 15].iter().enumerate() {
            v[*t] = j as f64;
        }
        let d = Diphoragram::from_values(v, 5, 23).unwrap();
        assert!((mean_sliding_discrepancy(&d).unwrap() - 5.0 * 1.5).abs() < 1e-15);
    }

    #[test]
    fn argmin_prefers_smallest_index() {
        let d = Diphoragram::from_values(vec![3.0, 1.0, 2.0, 1.0], 2, 5).unwrap();
        assert_eq!(d.argmin(), 2);
    }

    #[test]
    fn inner_of_window_with_itself_is_window_discrepancy() {
        let s = KernelSpec::with_defaults(KernelFamily::Star, 2);
        let p = uniform(60, 2, 4);
        let k = SampleKernel::new(&s, &p).unwrap();
        let w = EmpiricalMeasure::new(11, 30).unwrap();
        let direct = squared_discrepancy(&s, &p.slice_rows(10, 30)).unwrap();
        assert!((nonuniformity_inner(&k, w, w).unwrap() - direct).abs() < 1e-13);
        assert!((window_discrepancy(&k, 11, 20).unwrap() - direct).abs() < 1e-13);
        assert!(EmpiricalMeasure::new(5, 4).is_err());
        assert!(EmpiricalMeasure::new(0, 4).is_err());
        let too_long = EmpiricalMeasure::new(50, 61).unwrap();
        assert!(nonuniformity_inner(&k, too_long, w).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn inner_product_is_symmetric_and_cauchy_schwarz(
            seed in 0u64..1000,
            a in (1usize..=40, 1usize..=40),
            b in (1usize..=40, 1usize..=40),
        ) {
            let s = KernelSpec::with_defaults(KernelFamily::Centered, 2);
            let k = SampleKernel::new(&s, &uniform(40, 2, seed)).unwrap();
            let ma = EmpiricalMeasure::new(a.0.min(a.1), a.0.max(a.1)).unwrap();
            let mb = EmpiricalMeasure::new(b.0.min(b.1), b.0.max(b.1)).unwrap();
            let ab = nonuniformity_inner(&k, ma, mb).unwrap();
            let ba = nonuniformity_inner(&k, mb, ma).unwrap();
            prop_assert!((ab - ba).abs() < 1e-12);
            let aa = nonuniformity_inner(&k, ma, ma).unwrap();
            let bb = nonuniformity_inner(&k, mb, mb).unwrap();
            prop_assert!(ab * ab <= aa * bb + 1e-12);
            prop_assert!(aa >= -1e-12 && bb >= -1e-12);
        }
    }
}
