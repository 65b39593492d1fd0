//! Limit objects for normalized eigenvalues: Poisson arrival times, the limit
//! point set, the Fréchet law of the top point, ratio and trace statistics, and
//! Kolmogorov-Smirnov distances.

use rand::Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter_spectrum::KSpectrum;
use crate::noise::row_rng;

/// Default number of series terms kept in [`trace_limit_sample`].
pub const DEFAULT_TRUNCATION: usize = 10_000;

/// `Gamma_1 < ... < Gamma_N`, arrival times of a unit-rate Poisson process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaSequence {
    pub values: Vec<f64>,
    pub seed: u64,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 4.0 {
        Ok(())
    } else {
        Err(Error::TailIndexOutOfRange { alpha })
    }
}

/// Cumulative sums of `len` iid standard exponentials drawn from `rng`.
pub fn arrival_times<R: Rng + ?Sized>(rng: &mut R, len: usize) -> Vec<f64> {
    let mut acc = 0.0;
    (0..len)
        .map(|_| {
            let e: f64 = rng.sample(Exp1);
            acc += e;
            acc
        })
        .collect()
}

pub fn sample_gamma_sequence(len: usize, seed: u64) -> Result<GammaSequence> {
    if len == 0 {
        return Err(Error::EmptySample);
    }
    let mut rng = row_rng(seed, 0);
    Ok(GammaSequence { values: arrival_times(&mut rng, len), seed })
}

/// The `top` largest of `{Gamma_i^{-q/alpha} w_j}` where `q` and `w_j` come
/// from the kernel kind (`q = 4`, `w_j = v_j^2` for `P`).
pub fn limit_eigen_points(kspec: &KSpectrum, gammas: &GammaSequence, alpha: f64, top: usize) -> Result<Vec<f64>> {
    check_alpha(alpha)?;
    let expo = -(kspec.kind.norm_power() as f64) / alpha;
    let scale: Vec<f64> = gammas.values.iter().map(|g| g.powf(expo)).collect();
    let weights = kspec.positive_values();
    // each column j is descending in i: merge the heads
    let mut heads = vec![0usize; weights.len()];
    let mut out = Vec::with_capacity(top);
    while out.len() < top {
        let best = (0..weights.len())
            .filter(|&j| heads[j] < scale.len())
            .map(|j| (weights[j] * scale[heads[j]], j))
            .fold(None, |acc: Option<(f64, usize)>, c| match acc {
                Some(a) if a.0 >= c.0 => Some(a),
                _ => Some(c),
            });
        match best {
            Some((v, j)) => {
                out.push(v);
                heads[j] += 1;
            }
            None => break,
        }
    }
    Ok(out)
}

/// `P(Gamma_1^{-4/alpha} v_1^2 <= x) = exp(-x^{-alpha/4} (v_1^2)^{alpha/4})`.
pub fn frechet_cdf(x: f64, alpha: f64, v1_sq: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::Domain(format!("Fréchet cdf needs x > 0, got {x}")));
    }
    if !(alpha > 0.0) || !(v1_sq > 0.0) {
        return Err(Error::Domain(format!("Fréchet cdf needs alpha > 0 and v1^2 > 0, got {alpha}, {v1_sq}")));
    }
    let theta = alpha / 4.0;
    Ok((-(v1_sq / x).powf(theta)).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioStatistics {
    /// `lambda_{i+1} / lambda_i` for `i = 1..=kmax`.
    pub ratios: Vec<f64>,
    /// 1-based index of the smallest ratio; the first one on ties.
    pub argmin: usize,
}

pub fn ratio_statistics(lambda: &[f64], kmax: usize) -> Result<RatioStatistics> {
    if kmax == 0 {
        return Err(Error::Domain("ratio statistics need kmax >= 1".into()));
    }
    if lambda.len() < kmax + 1 {
        return Err(Error::LengthMismatch { left: lambda.len(), right: kmax + 1 });
    }
    if let Some(bad) = lambda[..=kmax].iter().find(|v| !(**v > 0.0)) {
        return Err(Error::Domain(format!("ratio statistics need positive eigenvalues, got {bad}")));
    }
    let ratios: Vec<f64> = (0..kmax).map(|i| lambda[i + 1] / lambda[i]).collect();
    let mut argmin = 0;
    for (i, r) in ratios.iter().enumerate() {
        if *r < ratios[argmin] {
            argmin = i;
        }
    }
    Ok(RatioStatistics { ratios, argmin: argmin + 1 })
}

/// `reps` draws of `((Gamma_i / Gamma_{i+1})^{4/alpha})_{i=1..=kmax}`: the ratio limit for a rank-one kernel.
pub fn limit_ratio_sample(kmax: usize, alpha: f64, seed: u64, reps: usize) -> Result<Vec<Vec<f64>>> {
    check_alpha(alpha)?;
    let q = 4.0 / alpha;
    Ok((0..reps)
        .into_par_iter()
        .map(|r| {
            let g = arrival_times(&mut row_rng(seed, r as u64), kmax + 1);
            (0..kmax).map(|i| (g[i] / g[i + 1]).powf(q)).collect()
        })
        .collect())
}

/// Ratio draws computed from the full limit point set of `kspec`.
pub fn limit_point_ratio_sample(
    kspec: &KSpectrum,
    kmax: usize,
    alpha: f64,
    seed: u64,
    reps: usize,
) -> Result<Vec<Vec<f64>>> {
    check_alpha(alpha)?;
    (0..reps)
        .into_par_iter()
        .map(|r| {
            // the top kmax + 1 points only involve the first kmax + 1 arrivals
            let g = GammaSequence { values: arrival_times(&mut row_rng(seed, r as u64), kmax + 1), seed };
            let pts = limit_eigen_points(kspec, &g, alpha, kmax + 1)?;
            Ok((0..kmax).map(|i| pts[i + 1] / pts[i]).collect())
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceLimitSample {
    /// Truncated series `sum_j w_j sum_{i<=N} Gamma_i^{-q/alpha}`.
    pub series: Vec<f64>,
    /// `w_1 Gamma_1^{-q/alpha} / series`, in `(0, 1]`.
    pub self_normalized: Vec<f64>,
    /// Omitted tail with `Gamma_i` replaced by `i`.
    pub tail_bound: f64,
    pub truncation: usize,
}

pub fn trace_limit_sample(
    kspec: &KSpectrum,
    alpha: f64,
    truncation: usize,
    seed: u64,
    reps: usize,
) -> Result<TraceLimitSample> {
    check_alpha(alpha)?;
    if truncation == 0 {
        return Err(Error::Domain("series truncation must be at least 1".into()));
    }
    let q = kspec.kind.norm_power() as f64 / alpha;
    let weights = kspec.positive_values();
    let wsum: f64 = weights.iter().sum();
    let w1 = weights.first().copied().unwrap_or(0.0);
    let pairs: Vec<(f64, f64)> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let g = arrival_times(&mut row_rng(seed, r as u64), truncation);
            let inner: f64 = g.iter().map(|x| x.powf(-q)).sum();
            let series = wsum * inner;
            (series, w1 * g[0].powf(-q) / series)
        })
        .collect();
    let tail_bound = if q > 1.0 { wsum * (truncation as f64).powf(1.0 - q) / (q - 1.0) } else { f64::INFINITY };
    let (series, self_normalized) = pairs.into_iter().unzip();
    Ok(TraceLimitSample { series, self_normalized, tail_bound, truncation })
}

/// `sup_x |F_n(x) - F(x)|` against a continuous or stepped `cdf`.
pub fn ks_distance<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let above = (i + 1) as f64 / n - cdf(x);
        let below = cdf(x.next_down()) - i as f64 / n;
        d = d.max(above).max(below);
    }
    Ok(d.clamp(0.0, 1.0))
}

/// Two-sample statistic `sup_x |F_a(x) - F_b(x)|`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(f64::total_cmp);
    xb.sort_by(f64::total_cmp);
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < xa.len() && j < xb.len() {
        let x = xa[i].min(xb[j]);
        while i < xa.len() && xa[i] <= x {
            i += 1;
        }
        while j < xb.len() && xb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// Asymptotic critical value of the KS statistic at `level` for sample sizes
/// `n` and `m` (`m = None` for the one-sample test).
pub fn ks_critical_value(n: usize, m: Option<usize>, level: f64) -> f64 {
    let c = (-0.5 * (level / 2.0).ln()).sqrt();
    let eff = match m {
        Some(m) => (n * m) as f64 / (n + m) as f64,
        None => n as f64,
    };
    c / eff.sqrt()
}

/// Outcome of a distributional check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestRecord {
    pub statistic: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl TestRecord {
    pub fn below(statistic: f64, threshold: f64) -> Self {
        Self { statistic, threshold, pass: statistic < threshold }
    }

    pub fn above(statistic: f64, threshold: f64) -> Self {
        Self { statistic, threshold, pass: statistic > threshold }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter_spectrum::KernelKind;
    use nalgebra::{DMatrix, DVector};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn kspec(values: Vec<f64>) -> KSpectrum {
        let r = values.len();
        let rank = values.iter().filter(|v| **v > 0.0).count();
        KSpectrum {
            s1: 0,
            s2: 0,
            kind: KernelKind::Power,
            block: DMatrix::from_diagonal(&DVector::from_vec(values.clone())),
            row_offset: 0,
            values,
            vectors: DMatrix::identity(r, r),
            rank,
        }
    }

    fn brute_points(w: &[f64], g: &[f64], alpha: f64, top: usize) -> Vec<f64> {
        let mut all: Vec<f64> = g.iter().flat_map(|x| w.iter().map(move |v| x.powf(-4.0 / alpha) * v)).collect();
        all.sort_by(|a, b| b.total_cmp(a));
        all.truncate(top);
        all
    }

    #[test]
    fn arrivals_increase() {
        for seed in 0..20 {
            let g = sample_gamma_sequence(50, seed).unwrap();
            assert!(g.values.windows(2).all(|w| w[0] < w[1]));
            assert!(g.values[0] > 0.0);
        }
        assert!(sample_gamma_sequence(0, 1).is_err());
    }

    #[test]
    fn arrival_means() {
        let reps = 100_000;
        let mut sums = [0.0; 5];
        for r in 0..reps {
            let g = arrival_times(&mut row_rng(3, r), 5);
            for i in 0..5 {
                sums[i] += g[i];
            }
        }
        for (i, s) in sums.iter().enumerate() {
            let k = (i + 1) as f64;
            // Var Gamma_i = i
            let se = (k / reps as f64).sqrt();
            assert!((s / reps as f64 - k).abs() < 3.0 * se, "Gamma_{} mean {}", i + 1, s / reps as f64);
        }
    }

    #[test]
    fn first_ratio_is_uniform() {
        let u: Vec<f64> = (0..10_000)
            .map(|r| {
                let g = arrival_times(&mut row_rng(11, r), 2);
                g[0] / g[1]
            })
            .collect();
        assert!(ks_distance(&u, |x| x.clamp(0.0, 1.0)).unwrap() < 0.05);
    }

    #[test]
    fn limit_points_examples() {
        let g = GammaSequence { values: vec![0.5, 2.0], seed: 0 };
        assert_eq!(limit_eigen_points(&kspec(vec![1.0]), &g, 2.0, 2).unwrap(), vec![4.0, 0.25]);
        let g = GammaSequence { values: vec![0.3, 0.9, 1.7, 4.0], seed: 0 };
        let pts = limit_eigen_points(&kspec(vec![7.0, 0.0]), &g, 1.5, 4).unwrap();
        let want: Vec<f64> = g.values.iter().map(|x| 7.0 * x.powf(-4.0 / 1.5)).collect();
        assert_eq!(pts, want);
        assert!(limit_eigen_points(&kspec(vec![1.0]), &g, 4.0, 1).is_err());
        assert!(limit_eigen_points(&kspec(vec![1.0]), &g, 0.0, 1).is_err());
        // fewer points than requested
        assert_eq!(limit_eigen_points(&kspec(vec![1.0, 0.5]), &g, 2.0, 20).unwrap().len(), 8);
    }

    #[test]
    fn limit_points_match_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let r = rng.random_range(1..=5);
            let mut w: Vec<f64> = (0..r).map(|_| rng.random_range(0.1..50.0)).collect();
            w.sort_by(|a, b| b.total_cmp(a));
            let len = rng.random_range(1..30);
            let g = arrival_times(&mut rng, len);
            let alpha = rng.random_range(0.3..3.9);
            let top = rng.random_range(1..40);
            let got = limit_eigen_points(&kspec(w.clone()), &GammaSequence { values: g.clone(), seed: 0 }, alpha, top)
                .unwrap();
            let want = brute_points(&w, &g, alpha, top);
            assert_eq!(got.len(), want.len());
            for (a, b) in got.iter().zip(&want) {
                assert!((a - b).abs() <= 1e-10 * b.abs());
            }
        }
    }

    #[test]
    fn frechet_examples() {
        assert!((frechet_cdf(1.0, 2.0, 1.0).unwrap() - (-1f64).exp()).abs() < 1e-15);
        assert!((frechet_cdf(4.0, 2.0, 1.0).unwrap() - (-0.5f64).exp()).abs() < 1e-15);
        let xs = [0.01, 0.1, 1.0, 10.0, 1e3, 1e9];
        let vals: Vec<f64> = xs.iter().map(|x| frechet_cdf(*x, 1.0, 3.0).unwrap()).collect();
        assert!(vals.windows(2).all(|w| w[0] < w[1]));
        assert!(vals[5] > 0.99);
        assert!(frechet_cdf(0.0, 1.0, 1.0).is_err());
        assert!(frechet_cdf(-1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn frechet_is_law_of_top_point() {
        let (alpha, v1) = (1.3, 2.5);
        let tops: Vec<f64> = (0..100_000)
            .map(|r| {
                let g: f64 = row_rng(8, r).sample(Exp1);
                v1 * g.powf(-4.0 / alpha)
            })
            .collect();
        assert!(ks_distance(&tops, |x| if x > 0.0 { frechet_cdf(x, alpha, v1).unwrap() } else { 0.0 }).unwrap() < 0.02);
    }

    #[test]
    fn ratio_examples() {
        let r = ratio_statistics(&[10.0, 5.0, 4.0, 1.0], 3).unwrap();
        assert_eq!(r.ratios, vec![0.5, 0.8, 0.25]);
        assert_eq!(r.argmin, 3);
        let geo: Vec<f64> = (1..=6).map(|i| 0.5f64.powi(i)).collect();
        let r = ratio_statistics(&geo, 5).unwrap();
        assert!(r.ratios.iter().all(|x| *x == 0.5));
        assert_eq!(r.argmin, 1);
        assert!(ratio_statistics(&[1.0, 0.0], 1).is_err());
        assert!(ratio_statistics(&[1.0, 0.5], 2).is_err());
    }

    #[test]
    fn ratio_limit_laws() {
        let alpha = 1.5;
        let reps = 10_000;
        let s = limit_ratio_sample(3, alpha, 21, reps).unwrap();
        assert!(s.iter().flatten().all(|x| *x > 0.0 && *x < 1.0));
        let mut cols: Vec<Vec<f64>> = (0..3).map(|_| Vec::with_capacity(reps)).collect();
        for row in &s {
            for i in 0..3 {
                cols[i].push(-((i + 1) as f64) * (alpha / 4.0) * row[i].ln());
            }
        }
        for c in &cols {
            assert!(ks_distance(c, |x| if x > 0.0 { 1.0 - (-x).exp() } else { 0.0 }).unwrap() < 0.05);
        }
        let corr = |a: &[f64], b: &[f64]| {
            let n = a.len() as f64;
            let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
            let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
            let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
            let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
            cov / (va * vb).sqrt()
        };
        assert!(corr(&cols[0], &cols[1]).abs() < 0.05);
        assert!(corr(&cols[1], &cols[2]).abs() < 0.05);
        assert!(corr(&cols[0], &cols[2]).abs() < 0.05);
    }

    #[test]
    fn rank_one_point_ratios_reduce_to_arrival_ratios() {
        let a = limit_ratio_sample(3, 2.0, 4, 50).unwrap();
        let b = limit_point_ratio_sample(&kspec(vec![9.0]), 3, 2.0, 4, 50).unwrap();
        for (x, y) in a.iter().flatten().zip(b.iter().flatten()) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn trace_series_properties() {
        let k = kspec(vec![4.0, 1.0]);
        let short = trace_limit_sample(&k, 1.0, 10, 6, 200).unwrap();
        let long = trace_limit_sample(&k, 1.0, 1000, 6, 200).unwrap();
        assert!(short.self_normalized.iter().all(|x| *x > 0.0 && *x <= 1.0));
        for (a, b) in short.series.iter().zip(&long.series) {
            assert!(b > a);
        }
        assert!(long.tail_bound < short.tail_bound);
        // Gamma_i ~ i: truncation error shrinks like N^{1-4/alpha}
        assert!((short.tail_bound - 5.0 * 10f64.powi(-3) / 3.0).abs() < 1e-15);
        let one = trace_limit_sample(&kspec(vec![2.0]), 2.0, 1, 0, 10).unwrap();
        assert!(one.self_normalized.iter().all(|x| (*x - 1.0).abs() < 1e-15));
    }

    #[test]
    fn trace_tail_exponent() {
        let alpha = 2.0;
        let t = trace_limit_sample(&kspec(vec![1.0]), alpha, 200, 9, 100_000).unwrap();
        let mut xs = t.series.clone();
        xs.sort_by(|a, b| b.total_cmp(a));
        let n = xs.len() as f64;
        // survival levels 1e-2 .. 1e-4
        let pts: Vec<(f64, f64)> = (10..1000).map(|i| (xs[i - 1].ln(), (i as f64 / n).ln())).collect();
        let m = pts.len() as f64;
        let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / m, pts.iter().map(|p| p.1).sum::<f64>() / m);
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let slope = sxy / sxx;
        assert!((slope + alpha / 4.0).abs() < 0.1, "slope {slope}");
    }

    #[test]
    fn ks_examples() {
        let normal_cdf = |x: f64| 0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2);
        assert!((ks_distance(&[0.0], normal_cdf).unwrap() - 0.5).abs() < 1e-15);
        let step = |x: f64| if x >= 2.0 { 1.0 } else { 0.0 };
        assert_eq!(ks_distance(&[2.0, 2.0, 2.0], step).unwrap(), 0.0);
        assert!(ks_distance(&[], step).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let draws: Vec<f64> = (0..10_000).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
        assert!(ks_distance(&draws, normal_cdf).unwrap() < 0.02);

        let other: Vec<f64> = (0..10_000).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
        assert!(ks_two_sample(&draws, &other).unwrap() < ks_critical_value(10_000, Some(10_000), 0.001));
        let shifted: Vec<f64> = other.iter().map(|x| x + 0.5).collect();
        assert!(ks_two_sample(&draws, &shifted).unwrap() > 0.15);
        assert_eq!(ks_two_sample(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(ks_two_sample(&[1.0], &[2.0]).unwrap(), 1.0);
    }

    #[test]
    fn critical_values() {
        assert!((ks_critical_value(100, None, 0.05) - 0.1358).abs() < 1e-3);
        assert!(TestRecord::below(0.1, 0.15).pass);
        assert!(!TestRecord::below(0.2, 0.15).pass);
    }
}
