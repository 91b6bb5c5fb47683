//! Empirical distributions, Kolmogorov–Smirnov distances, moments and
//! percentile bootstrap intervals.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("sample is empty")]
    Empty,
    #[error("need at least {need} samples, got {got}")]
    TooFew { need: usize, got: usize },
    #[error("sample contains NaN")]
    NaN,
    #[error("bootstrap needs B ≥ 100 and level in (0, 1)")]
    BootstrapParams,
    #[error("bootstrap statistic is not finite on the input sample")]
    Degenerate,
}

/// Sorted sample with a right-continuous step CDF.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ecdf {
    sorted: Vec<f64>,
}

/// Builds the ECDF of a sample.
pub fn ecdf(samples: &[f64]) -> Result<Ecdf, StatsError> {
    Ecdf::new(samples.to_vec())
}

impl Ecdf {
    pub fn new(mut samples: Vec<f64>) -> Result<Self, StatsError> {
        if samples.is_empty() {
            return Err(StatsError::Empty);
        }
        if samples.iter().any(|v| v.is_nan()) {
            return Err(StatsError::NaN);
        }
        samples.sort_by(f64::total_cmp);
        Ok(Self { sorted: samples })
    }

    /// Wraps data that is already sorted ascending.
    pub fn from_sorted(sorted: Vec<f64>) -> Result<Self, StatsError> {
        if sorted.is_empty() {
            return Err(StatsError::Empty);
        }
        if sorted.windows(2).any(|w| !(w[0] <= w[1])) {
            return Self::new(sorted);
        }
        Ok(Self { sorted })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn samples(&self) -> &[f64] {
        &self.sorted
    }

    /// `F̂(x) = #{samples ≤ x} / count`.
    pub fn eval(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&v| v <= x) as f64 / self.len() as f64
    }

    /// Empirical quantile by linear interpolation between order statistics.
    pub fn quantile(&self, p: f64) -> f64 {
        let p = p.clamp(0.0, 1.0);
        let h = p * (self.len() - 1) as f64;
        let lo = h.floor() as usize;
        let hi = (lo + 1).min(self.len() - 1);
        self.sorted[lo] + (h - lo as f64) * (self.sorted[hi] - self.sorted[lo])
    }

    pub fn median(&self) -> f64 {
        self.quantile(0.5)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub n1: usize,
    /// Size of the second sample; 0 for a one-sample test.
    pub n2: usize,
    /// Abscissa where the maximal deviation occurs.
    pub location: f64,
}

/// Two-sample KS distance, exact via a merged sweep over both samples.
pub fn ks_two_sample(e1: &Ecdf, e2: &Ecdf) -> KsResult {
    let (a, b) = (e1.samples(), e2.samples());
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut best = 0.0;
    let mut location = a[0].min(b[0]);
    while i < a.len() || j < b.len() {
        let x = match (a.get(i), b.get(j)) {
            (Some(&u), Some(&v)) => u.min(v),
            (Some(&u), None) => u,
            (None, Some(&v)) => v,
            (None, None) => unreachable!(),
        };
        // Step past every sample equal to x so the ECDFs are evaluated at x.
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        let d = (i as f64 / na - j as f64 / nb).abs();
        if d > best {
            best = d;
            location = x;
        }
    }
    KsResult { statistic: best, n1: a.len(), n2: b.len(), location }
}

/// One-sample KS distance against a continuous reference CDF.
pub fn ks_one_sample<F: Fn(f64) -> f64>(e: &Ecdf, cdf: F) -> KsResult {
    let n = e.len() as f64;
    let mut best = 0.0;
    let mut location = e.samples()[0];
    for (i, &x) in e.samples().iter().enumerate() {
        let f = cdf(x);
        let d = ((i + 1) as f64 / n - f).max(f - i as f64 / n);
        if d > best {
            best = d;
            location = x;
        }
    }
    KsResult { statistic: best, n1: e.len(), n2: 0, location }
}

/// Mean, variance, skewness and excess kurtosis with standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentSummary {
    pub count: usize,
    pub mean: f64,
    /// Bias-corrected (n − 1) variance.
    pub variance: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    pub se_mean: f64,
    pub se_variance: f64,
}

/// Neumaier-compensated sum.
fn compensated_sum<I: Iterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

pub fn moments(samples: &[f64]) -> Result<MomentSummary, StatsError> {
    let n = samples.len();
    if n < 2 {
        return Err(StatsError::TooFew { need: 2, got: n });
    }
    if samples.iter().any(|v| v.is_nan()) {
        return Err(StatsError::NaN);
    }
    let nf = n as f64;
    let mean = compensated_sum(samples.iter().copied()) / nf;
    let central = |p: i32| compensated_sum(samples.iter().map(|&x| (x - mean).powi(p))) / nf;
    let (m2, m3, m4) = (central(2), central(3), central(4));
    let variance = m2 * nf / (nf - 1.0);
    let (skewness, excess_kurtosis) = if m2 > 0.0 {
        (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
    } else {
        (0.0, 0.0)
    };
    // Var(s²) ≈ (μ4 − σ⁴ (n−3)/(n−1)) / n.
    let se_variance = ((m4 - m2 * m2 * (nf - 3.0) / (nf - 1.0)) / nf).max(0.0).sqrt();
    Ok(MomentSummary {
        count: n,
        mean,
        variance,
        skewness,
        excess_kurtosis,
        se_mean: (variance / nf).sqrt(),
        se_variance,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Percentile bootstrap interval for `statistic` at the given level.
pub fn bootstrap_ci<F, R>(
    samples: &[f64],
    statistic: F,
    resamples: usize,
    level: f64,
    rng: &mut R,
) -> Result<Interval, StatsError>
where
    F: Fn(&[f64]) -> f64,
    R: Rng + ?Sized,
{
    if resamples < 100 || !(level > 0.0 && level < 1.0) {
        return Err(StatsError::BootstrapParams);
    }
    if samples.is_empty() {
        return Err(StatsError::Empty);
    }
    if !statistic(samples).is_finite() {
        return Err(StatsError::Degenerate);
    }
    let n = samples.len();
    let mut buf = vec![0.0; n];
    let mut stats: Vec<f64> = (0..resamples)
        .map(|_| {
            for slot in buf.iter_mut() {
                *slot = samples[rng.random_range(0..n)];
            }
            statistic(&buf)
        })
        .collect();
    stats.sort_by(f64::total_cmp);
    let e = Ecdf { sorted: stats };
    let alpha = (1.0 - level) / 2.0;
    Ok(Interval { lo: e.quantile(alpha), hi: e.quantile(1.0 - alpha) })
}

pub fn mean(samples: &[f64]) -> f64 {
    compensated_sum(samples.iter().copied()) / samples.len() as f64
}

/// Median of `|x|`.
pub fn median_abs(samples: &[f64]) -> Result<f64, StatsError> {
    Ecdf::new(samples.iter().map(|v| v.abs()).collect()).map(|e| e.median())
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn ecdf_basics() {
        let e = ecdf(&[1.0]).unwrap();
        assert_eq!(e.eval(0.5), 0.0);
        assert_eq!(e.eval(1.0), 1.0);
        let e = ecdf(&[3.0, 1.0, 2.0]).unwrap();
        assert_eq!(e.samples(), &[1.0, 2.0, 3.0]);
        assert_eq!(e.eval(1.999), 1.0 / 3.0);
        assert_eq!(e.eval(2.0), 2.0 / 3.0);
        assert_eq!(ecdf(&[]), Err(StatsError::Empty));
        assert_eq!(ecdf(&[1.0, f64::NAN]), Err(StatsError::NaN));
    }

    #[test]
    fn ks_two_sample_examples() {
        let a = ecdf(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(ks_two_sample(&a, &a).statistic, 0.0);
        let z = ecdf(&[0.0]).unwrap();
        let o = ecdf(&[1.0]).unwrap();
        assert_eq!(ks_two_sample(&z, &o).statistic, 1.0);
        let b = ecdf(&[1.5, 2.5, 3.5]).unwrap();
        let r = ks_two_sample(&a, &b);
        assert!((r.statistic - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!((r.n1, r.n2), (3, 3));
    }

    /// Direct evaluation of sup |F1 − F2| at every jump point.
    fn ks_brute(a: &[f64], b: &[f64]) -> f64 {
        let ea = ecdf(a).unwrap();
        let eb = ecdf(b).unwrap();
        a.iter().chain(b).map(|&x| (ea.eval(x) - eb.eval(x)).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn ks_one_sample_examples() {
        let e = ecdf(&[0.0]).unwrap();
        assert!((ks_one_sample(&e, normal_cdf).statistic - 0.5).abs() < 1e-15);
        // Degenerate step CDF at 0 against samples {−1, 1}: F = 0 at −1, 1 at 1.
        let e = ecdf(&[-1.0, 1.0]).unwrap();
        let step = |x: f64| if x >= 0.0 { 1.0 } else { 0.0 };
        assert_eq!(ks_one_sample(&e, step).statistic, 0.5);
    }

    #[test]
    fn ks_one_sample_calibration() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let xs: Vec<f64> = (0..100_000).map(|_| rng.sample(StandardNormal)).collect();
        let r = ks_one_sample(&ecdf(&xs).unwrap(), normal_cdf);
        assert!(r.statistic < 0.01, "{}", r.statistic);
    }

    #[test]
    fn moments_examples() {
        let m = moments(&[-1.0, 1.0]).unwrap();
        assert_eq!(m.mean, 0.0);
        assert_eq!(m.variance, 2.0);
        assert_eq!(moments(&[4.5; 10]).unwrap().variance, 0.0);
        assert_eq!(moments(&[1.0]), Err(StatsError::TooFew { need: 2, got: 1 }));
    }

    #[test]
    fn moments_normal_calibration() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let xs: Vec<f64> = (0..1_000_000).map(|_| rng.sample(StandardNormal)).collect();
        let m = moments(&xs).unwrap();
        assert!(m.mean.abs() < 4e-3, "{}", m.mean);
        assert!((m.variance - 1.0).abs() < 0.006, "{}", m.variance);
        assert!(m.skewness.abs() < 0.02 && m.excess_kurtosis.abs() < 0.04);
    }

    #[test]
    fn bootstrap_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ci = bootstrap_ci(&[2.0; 50], mean, 200, 0.95, &mut rng).unwrap();
        assert_eq!(ci.width(), 0.0);
        let xs: Vec<f64> = (0..500).map(|_| rng.sample(StandardNormal)).collect();
        let a = bootstrap_ci(&xs, mean, 300, 0.9, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = bootstrap_ci(&xs, mean, 300, 0.9, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        assert!(matches!(bootstrap_ci(&xs, mean, 10, 0.9, &mut rng), Err(StatsError::BootstrapParams)));
        assert!(matches!(bootstrap_ci(&[], mean, 100, 0.9, &mut rng), Err(StatsError::Empty)));
    }

    #[test]
    fn bootstrap_coverage_calibration() {
        // 200 repetitions: coverage of 0.95 has SE ≈ 0.015, so accept [0.90, 0.99].
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        let reps = 200;
        let mut covered = 0;
        for _ in 0..reps {
            let xs: Vec<f64> = (0..10_000).map(|_| rng.sample(StandardNormal)).collect();
            if bootstrap_ci(&xs, mean, 200, 0.95, &mut rng).unwrap().contains(0.0) {
                covered += 1;
            }
        }
        let rate = covered as f64 / reps as f64;
        assert!((0.90..=0.99).contains(&rate), "coverage {rate}");
    }

    proptest! {
        #[test]
        fn ks_is_symmetric_and_exact(
            a in prop::collection::vec(-5.0f64..5.0, 1..40),
            b in prop::collection::vec(-5.0f64..5.0, 1..40),
        ) {
            let (ea, eb) = (ecdf(&a).unwrap(), ecdf(&b).unwrap());
            let d = ks_two_sample(&ea, &eb).statistic;
            prop_assert_eq!(d, ks_two_sample(&eb, &ea).statistic);
            prop_assert!((0.0..=1.0).contains(&d));
            prop_assert!((d - ks_brute(&a, &b)).abs() < 1e-12);
            // Invariance under a common strictly increasing map.
            let f = |v: &f64| v.exp() * 3.0 - 1.0;
            let ta: Vec<f64> = a.iter().map(f).collect();
            let tb: Vec<f64> = b.iter().map(f).collect();
            prop_assert_eq!(d, ks_two_sample(&ecdf(&ta).unwrap(), &ecdf(&tb).unwrap()).statistic);
            prop_assert_eq!(ks_two_sample(&ea, &ea).statistic, 0.0);
        }

        #[test]
        fn moments_are_permutation_invariant(mut a in prop::collection::vec(-1e3f64..1e3, 2..60), seed in 0u64..1000) {
            let m1 = moments(&a).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for i in (1..a.len()).rev() {
                let j = rng.random_range(0..=i);
                a.swap(i, j);
            }
            let m2 = moments(&a).unwrap();
            let tol = |x: f64| 1e-12 * x.abs().max(1.0);
            prop_assert!((m1.mean - m2.mean).abs() <= tol(m1.mean));
            prop_assert!((m1.variance - m2.variance).abs() <= tol(m1.variance));
            prop_assert!(m1.variance >= 0.0);
        }
    }
}
