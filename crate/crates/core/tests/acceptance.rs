//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use rankdisc::detect::estimate_from_t_star;
use rankdisc::discrepancy::{sliding_diphoragram, window_discrepancy};
use rankdisc::harness::{
    calibration_cell, load_csv, mean_shift_cell, midpoint_cell, multi_cell, run_experiment, CsvSchema, ReportDocument,
    SegmentDistribution, SimulationSpec,
};
use rankdisc::kernels::scale_constant;
use rankdisc::lds::{sobol_prefix, MAX_DIM};
use rankdisc::nulldist::{nystrom_spectrum, quantile, weighted_chisq_cdf};
use rankdisc::transport::{optimal_assignment, vector_ranks};
use rankdisc::{DetectionParams, Detector, KernelFamily, KernelSpec, Matrix, Method, SampleKernel};

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut out = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            for &k in &idx[i..=j] {
                out[k] = (i + j) as f64 / 2.0;
            }
            i = j + 1;
        }
        out
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

fn estimator_arithmetic() -> Outcome {
    let theta = estimate_from_t_star(950, 2000, 100).unwrap();
    outcome(
        theta == 1000,
        format!("t* = 950, T = 2000, tau = 100 -> theta = {theta}"),
    )
}

fn assignment_optimality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut perm: Vec<usize> = (0..8).collect();
    let mut all = Vec::with_capacity(40320);
    heap_permutations(8, &mut perm, &mut all);
    let mut mismatches = 0;
    for _ in 0..100 {
        let cost = Matrix::from_vec(8, 8, (0..64).map(|_| rng.random::<f64>()).collect()).unwrap();
        let total = |p: &[usize]| -> f64 { p.iter().enumerate().map(|(i, &j)| cost.row(i)[j]).sum() };
        let best = all.iter().map(|p| total(p)).fold(f64::INFINITY, f64::min);
        let got = optimal_assignment(&cost).unwrap();
        if total(&got.sigma) != best {
            mismatches += 1;
        }
    }
    outcome(
        mismatches == 0,
        format!("{mismatches}/100 instances differ from the 8! brute force"),
    )
}

fn heap_permutations(k: usize, a: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if k == 1 {
        out.push(a.clone());
        return;
    }
    for i in 0..k {
        heap_permutations(k - 1, a, out);
        if k % 2 == 0 {
            a.swap(i, k - 1);
        } else {
            a.swap(0, k - 1);
        }
    }
}

/// Gauss-Legendre nodes and weights on `[0, 1]`.
fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    (1..=n)
        .map(|i| {
            let mut x = (std::f64::consts::PI * (i as f64 - 0.25) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let step = p1 / dp;
                x -= step;
                if step.abs() < 1e-16 {
                    break;
                }
            }
            ((1.0 - x) / 2.0, 1.0 / ((1.0 - x * x) * dp * dp))
        })
        .collect()
}

/// Integral over `[0, 1]^d` of `f`, exact for functions that are quadratic
/// in each coordinate between the given breakpoints.
fn cube_integral(d: usize, breaks: &[Vec<f64>], f: &dyn Fn(&[f64]) -> f64) -> f64 {
    let gl = gauss_legendre(6);
    let axis = |j: usize| -> Vec<(f64, f64)> {
        let mut cuts = vec![0.0, 1.0];
        cuts.extend(breaks[j].iter().copied().filter(|b| *b > 0.0 && *b < 1.0));
        cuts.sort_by(f64::total_cmp);
        cuts.windows(2)
            .flat_map(|w| {
                gl.iter()
                    .map(move |&(x, wt)| (w[0] + (w[1] - w[0]) * x, (w[1] - w[0]) * wt))
            })
            .collect()
    };
    let axes: Vec<Vec<(f64, f64)>> = (0..d).map(axis).collect();
    let mut total = 0.0;
    let mut idx = vec![0usize; d];
    let mut point = vec![0.0; d];
    loop {
        let mut w = 1.0;
        for j in 0..d {
            point[j] = axes[j][idx[j]].0;
            w *= axes[j][idx[j]].1;
        }
        total += w * f(&point);
        let mut j = 0;
        while j < d {
            idx[j] += 1;
            if idx[j] < axes[j].len() {
                break;
            }
            idx[j] = 0;
            j += 1;
        }
        if j == d {
            return total;
        }
    }
}

fn kernel_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut centering, mut zero_mean) = (0.0f64, 0.0f64);
    for family in [KernelFamily::Star, KernelFamily::Centered] {
        for beta in [1.0, 0.6] {
            for d in 1..=2 {
                let spec = KernelSpec::new(family, beta, d).unwrap();
                let halves = vec![vec![0.5]; d];
                let g = |x: &[f64]| {
                    let br: Vec<Vec<f64>> = x.iter().map(|&xi| vec![0.5, xi]).collect();
                    cube_integral(d, &br, &|z| spec.eta(x, z).unwrap())
                };
                let m_d = cube_integral(d, &halves, &|x| g(x));
                for _ in 0..5 {
                    let x: Vec<f64> = (0..d).map(|_| rng.random()).collect();
                    let y: Vec<f64> = (0..d).map(|_| rng.random()).collect();
                    let quad = spec.eta(&x, &y).unwrap() - g(&x) - g(&y) + m_d;
                    centering = centering.max((quad - spec.centered_kernel(&x, &y).unwrap()).abs());
                    let br: Vec<Vec<f64>> = y.iter().map(|&yi| vec![0.5, yi]).collect();
                    let int = cube_integral(d, &br, &|z| spec.centered_kernel(z, &y).unwrap());
                    zero_mean = zero_mean.max(int.abs());
                }
            }
        }
    }
    let m_star = scale_constant(KernelFamily::Star, 1.0);
    let m_cent = scale_constant(KernelFamily::Centered, 1.0);
    let m_err = (m_star - 2.0 / 3.0).abs().max((m_cent - 11.0 / 12.0).abs());
    outcome(
        centering <= 1e-6 && zero_mean <= 1e-8 && m_err <= 1e-10,
        format!("centering error {centering:.1e}, |int K dx| {zero_mean:.1e}, M error {m_err:.1e}"),
    )
}

fn null_distribution() -> Outcome {
    let spectrum = nystrom_spectrum(&KernelSpec::with_defaults(KernelFamily::Star, 2), 512, 20).unwrap();
    let lambdas = spectrum.eigenvalues().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut draws: Vec<f64> = (0..200_000)
        .map(|_| {
            lambdas
                .iter()
                .map(|l| {
                    let z: f64 = rng.sample(StandardNormal);
                    l * z * z
                })
                .sum()
        })
        .collect();
    draws.sort_by(f64::total_cmp);
    let sup = (1..200)
        .map(|k| {
            let x = draws[k * draws.len() / 200];
            let mc = draws.partition_point(|&v| v <= x) as f64 / draws.len() as f64;
            (weighted_chisq_cdf(&lambdas, x, 100, 0.5).unwrap() - mc).abs()
        })
        .fold(0.0, f64::max);
    let q = quantile(&[1.0], 0.95, 100, 0.5).unwrap();
    outcome(
        sup <= 0.02 && (q - 3.841).abs() <= 0.02,
        format!("sup |CDF - MC| = {sup:.4}, chi2(1) 95% quantile = {q:.4}"),
    )
}

fn calibration() -> Outcome {
    let cell = calibration_cell(200, 3, 30, 0.1, KernelFamily::Star, 100, 500);
    let m = run_experiment(&[cell]).unwrap();
    outcome(
        m[0].failed == 0 && m[0].power <= 0.2,
        format!("false alarm rate {:.2} over 100 null runs", m[0].power),
    )
}

fn power_trend() -> Outcome {
    let shifts: Vec<f64> = (2..=10).map(|k| k as f64 / 10.0).collect();
    let power = |family| -> Vec<f64> {
        let cells: Vec<_> = shifts
            .iter()
            .enumerate()
            .map(|(i, &s)| mean_shift_cell(200, 3, 100, s, 30, 0.1, family, 20, 600 + i as u64))
            .collect();
        run_experiment(&cells).unwrap().iter().map(|c| c.power).collect()
    };
    let star = power(KernelFamily::Star);
    let centered = power(KernelFamily::Centered);
    let rho = spearman(&shifts, &star);
    let top = (6..9).filter(|&i| star[i] >= centered[i]).count();
    outcome(
        rho > 0.0 && top >= 2,
        format!("star power {star:?} (rho {rho:.2}), centered {centered:?}, star >= centered in {top}/3 top cells"),
    )
}

fn single_accuracy() -> Outcome {
    let cell = mean_shift_cell(2000, 5, 1000, 5.0, 100, 0.1, KernelFamily::Star, 20, 700);
    let m = &run_experiment(&[cell]).unwrap()[0];
    let detecting: Vec<_> = m.runs.iter().filter(|r| r.detected == Some(true)).collect();
    let close = detecting
        .iter()
        .filter(|r| r.change_points.first().is_some_and(|&c| c.abs_diff(1000) <= 50))
        .count();
    let rate = detecting.len() as f64 / 20.0;
    let share = close as f64 / detecting.len().max(1) as f64;
    outcome(
        rate >= 0.9 && share >= 0.9,
        format!(
            "detection rate {rate:.2}, {close}/{} detections within 50",
            detecting.len()
        ),
    )
}

fn midpoint_bias() -> Outcome {
    let ratios = [0.5, 0.45, 0.4, 0.35, 0.3];
    let cells: Vec<_> = ratios
        .iter()
        .enumerate()
        .map(|(i, &r)| midpoint_cell(r, KernelFamily::Star, 20, 800 + i as u64))
        .collect();
    let m = run_experiment(&cells).unwrap();
    let signed: Vec<f64> = m.iter().map(|c| c.mean_signed_error.unwrap_or(f64::NAN)).collect();
    let rho = spearman(&ratios, &signed);
    let toward_middle = signed[1..].iter().all(|&e| e >= 0.0);
    outcome(
        signed.iter().all(|e| e.is_finite()) && rho < 0.0 && toward_middle,
        format!("mean signed error {signed:.1?} for r = {ratios:?} (rho {rho:.2})"),
    )
}

fn multi_improvement(family: KernelFamily) -> (usize, usize) {
    let cell = multi_cell(family, 20, 900);
    let det = Detector::new(cell.params.clone(), 3).unwrap();
    let err = |v: &[usize]| (v[0].abs_diff(120) + v[1].abs_diff(240)) as f64 / 2.0;
    let (mut better, mut two) = (0, 0);
    for rep in 0..20 {
        let x = cell.spec.sample(rep).unwrap();
        let est = det.multi_changepoints(&x, 2).unwrap();
        if err(&est.change_points) < err(&est.blind) {
            better += 1;
        }
        if det.sma_estimate(&x).unwrap().k_hat == Some(2) {
            two += 1;
        }
    }
    (better, two)
}

fn multi_changepoints() -> Outcome {
    let (better, two) = multi_improvement(KernelFamily::Centered);
    let (star_better, star_two) = multi_improvement(KernelFamily::Star);
    outcome(
        better >= 14 && two >= 14,
        format!(
            "centered kernel: correction beats blind in {better}/20, K = 2 in {two}/20 \
             (star kernel: {star_better}/20 and {star_two}/20)"
        ),
    )
}

fn structural_invariants() -> Outcome {
    let mut notes = Vec::new();

    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let y = Matrix::from_vec(200, 3, (0..600).map(|_| rng.random::<f64>()).collect()).unwrap();
    let spec = KernelSpec::with_defaults(KernelFamily::Star, 3);
    let mut diph_err = 0.0f64;
    for limit in [usize::MAX, 0] {
        let k = SampleKernel::with_limit(&spec, &y, limit).unwrap();
        let diph = sliding_diphoragram(&k, 20).unwrap();
        for (t, v) in diph.series() {
            diph_err = diph_err.max((v - window_discrepancy(&k, t, 20).unwrap()).abs());
        }
    }
    let diph_ok = diph_err <= 1e-9;
    notes.push(format!("diphoragram error {diph_err:.1e}"));

    let mut affine_ok = true;
    for _ in 0..50 {
        let t = rng.random_range(2..=64);
        let d = rng.random_range(1..=5);
        let x = Matrix::from_vec(t, d, (0..t * d).map(|_| rng.sample(StandardNormal)).collect()).unwrap();
        let s = rng.random_range(0.1..10.0);
        let c: Vec<f64> = (0..d).map(|_| rng.random_range(-5.0..5.0)).collect();
        let mut z = x.clone();
        for i in 0..t {
            for (v, cj) in z.row_mut(i).iter_mut().zip(&c) {
                *v = s * *v + cj;
            }
        }
        affine_ok &= vector_ranks(&x).unwrap().sigma() == vector_ranks(&z).unwrap().sigma();
    }
    notes.push(format!(
        "affine invariance {}",
        if affine_ok { "holds" } else { "broken" }
    ));

    let mut balance_ok = true;
    for m in 0..=10u32 {
        let n = 1usize << m;
        let p = sobol_prefix(n, MAX_DIM).unwrap();
        for j in 0..MAX_DIM {
            let mut seen = vec![false; n];
            for row in p.iter_rows() {
                let cell = (row[j] * n as f64) as usize;
                balance_ok &= !std::mem::replace(&mut seen[cell], true);
            }
        }
        for k in 0..=m {
            let (nx, ny) = (1usize << k, 1usize << (m - k));
            let mut seen = vec![false; n];
            for row in p.iter_rows() {
                let cell = (row[0] * nx as f64) as usize * ny + (row[1] * ny as f64) as usize;
                balance_ok &= !std::mem::replace(&mut seen[cell], true);
            }
        }
    }
    notes.push(format!(
        "dyadic balance {}",
        if balance_ok { "holds" } else { "broken" }
    ));

    let render = || {
        let spec = SimulationSpec {
            t: 240,
            d: 2,
            segments: vec![
                SegmentDistribution::standard_normal(2),
                SegmentDistribution::gaussian_shift(2, 2.0),
            ],
            change_points: vec![150],
            seed: 99,
            replications: 1,
        };
        let x = spec.sample(0).unwrap();
        let params = DetectionParams::new(30, 0.1, KernelFamily::Star);
        let report = Detector::new(params.clone(), 2)
            .unwrap()
            .detect(&x, Method::MultiSma)
            .unwrap();
        ReportDocument::new(params, report, 240, 2).to_json().unwrap()
    };
    let same = render() == render();
    notes.push(format!("report bytes {}", if same { "identical" } else { "differ" }));

    outcome(diph_ok && affine_ok && balance_ok && same, notes.join(", "))
}

fn financial_shape_run() -> Outcome {
    let spec = SimulationSpec {
        t: 1091,
        d: 5,
        segments: vec![
            SegmentDistribution::gaussian_scaled(5, 4.0),
            SegmentDistribution::gaussian_shift(5, 1.0),
            SegmentDistribution::gaussian_scaled(5, 1.0),
        ],
        change_points: vec![300, 700],
        seed: 1925,
        replications: 1,
    };
    let x = spec.sample(0).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("returns.csv");
    let mut text = String::from("date,finance,manufacturing,retail,utilities,other\n");
    for (i, row) in x.iter_rows().enumerate() {
        let (year, month) = (1925 + (i + 6) / 12, (i + 6) % 12 + 1);
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.4}")).collect();
        text.push_str(&format!("{year}-{month:02},{}\n", cells.join(",")));
    }
    std::fs::write(&path, text).unwrap();

    let data = load_csv(
        &path,
        CsvSchema {
            has_header: None,
            time_column: true,
        },
    )
    .unwrap();
    let params = DetectionParams::new(50, 0.2, KernelFamily::Star);
    let det = Detector::new(params.clone(), data.observations.cols()).unwrap();
    let report = det.detect(&data.observations, Method::MultiSma).unwrap();
    let mut doc = ReportDocument::new(params, report, data.observations.rows(), data.observations.cols());
    doc.change_point_labels = Some(doc.report.change_points.iter().map(|&c| data.label(c)).collect());
    let json = doc.to_json().unwrap();
    let back = ReportDocument::from_json(&json).unwrap();
    let cps = &back.report.change_points;
    let ok = data.observations.rows() == 1091
        && data.observations.cols() == 5
        && back == doc
        && back.report.k_hat == Some(cps.len())
        && cps.windows(2).all(|w| w[0] < w[1])
        && cps.iter().all(|&c| (1..1091).contains(&c));
    outcome(
        ok,
        format!(
            "1091 x 5 with dates: K = {:?}, at {:?}",
            back.report.k_hat,
            back.change_point_labels.unwrap_or_default()
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("1 estimator arithmetic", estimator_arithmetic),
        ("2 assignment optimality", assignment_optimality),
        ("3 kernel correctness", kernel_correctness),
        ("4 null distribution", null_distribution),
        ("5 calibration", calibration),
        ("6 power trend", power_trend),
        ("7 single change point accuracy", single_accuracy),
        ("8 midpoint bias trend", midpoint_bias),
        ("9 multiple change points", multi_changepoints),
        ("10 structural invariants", structural_invariants),
        ("format-level run", financial_shape_run),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let result = check();
        println!(
            "{} {name}: {} [{:.1} s]",
            if result.pass { "PASS" } else { "FAIL" },
            result.detail,
            start.elapsed().as_secs_f64()
        );
        failed += usize::from(!result.pass);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
