//! Empirical laws: KS distances, histograms, moment accumulators and tail fits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// Two-sample Kolmogorov-Smirnov distance `sup |F_a - F_b|`.
///
/// Counts are compared in integers so `ks_two_sample(a, b) == ks_two_sample(b, a)` exactly.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySample);
    }
    let (a, b) = (sorted(a), sorted(b));
    let (na, nb) = (a.len() as u128, b.len() as u128);
    let (mut i, mut j) = (0usize, 0usize);
    let mut best: u128 = 0;
    while i < a.len() && j < b.len() {
        let x = if a[i] <= b[j] { a[i] } else { b[j] };
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        best = best.max((i as u128 * nb).abs_diff(j as u128 * na));
    }
    Ok(best as f64 / (na * nb) as f64)
}

/// One-sample KS distance between the empirical CDF of `sample` and a continuous `cdf`.
pub fn ks_one_sample(sample: &[f64], cdf: impl Fn(f64) -> f64) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    let s = sorted(sample);
    let n = s.len() as f64;
    let mut best: f64 = 0.0;
    let mut i = 0;
    while i < s.len() {
        let x = s[i];
        let mut k = i;
        while k < s.len() && s[k] == x {
            k += 1;
        }
        let f = cdf(x);
        best = best
            .max((f - i as f64 / n).abs())
            .max((k as f64 / n - f).abs());
        i = k;
    }
    Ok(best.min(1.0))
}

/// Uniform-bin histogram with masses summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub masses: Vec<f64>,
}

impl Histogram {
    /// Bins over `range`, or over `[min(0, min), 1.05 max]` (widened if needed) when `None`.
    pub fn build(samples: &[f64], bins: usize, range: Option<(f64, f64)>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptySample);
        }
        if bins == 0 {
            return Err(Error::InvalidParameter(
                "histogram needs at least one bin".into(),
            ));
        }
        let (min, max) = samples
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| {
                (a.min(x), b.max(x))
            });
        if !(min.is_finite() && max.is_finite()) {
            return Err(Error::InvalidParameter(
                "histogram samples must be finite".into(),
            ));
        }
        let (lo, hi) = match range {
            Some((lo, hi)) => (lo.min(min), hi.max(max)),
            None => (min.min(0.0), (1.05 * max).max(max)),
        };
        let hi = if hi > lo { hi } else { lo + 1.0 };
        let width = (hi - lo) / bins as f64;
        let mut counts = vec![0u64; bins];
        for &x in samples {
            let k = (((x - lo) / width) as usize).min(bins - 1);
            counts[k] += 1;
        }
        let n = samples.len() as f64;
        Ok(Self {
            lo,
            hi,
            masses: counts.iter().map(|&c| c as f64 / n).collect(),
        })
    }

    pub fn bins(&self) -> usize {
        self.masses.len()
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.bins() as f64
    }

    pub fn edges(&self, k: usize) -> (f64, f64) {
        let w = self.width();
        (
            self.lo + k as f64 * w,
            if k + 1 == self.bins() {
                self.hi
            } else {
                self.lo + (k + 1) as f64 * w
            },
        )
    }
}

/// Mergeable accumulator for `mean |x|`, its standard error, and the second moment.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MomentAccumulator {
    pub count: u64,
    pub sum_abs: f64,
    pub sum_sq: f64,
    pub sum: f64,
}

impl MomentAccumulator {
    #[inline]
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        self.sum_abs += x.abs();
        self.sum_sq += x * x;
        self.sum += x;
    }

    pub fn merge(&mut self, other: &Self) {
        self.count += other.count;
        self.sum_abs += other.sum_abs;
        self.sum_sq += other.sum_sq;
        self.sum += other.sum;
    }

    pub fn mean_abs(&self) -> f64 {
        self.sum_abs / self.count as f64
    }

    pub fn mean(&self) -> f64 {
        self.sum / self.count as f64
    }

    pub fn second_moment(&self) -> f64 {
        self.sum_sq / self.count as f64
    }

    /// Standard error of `mean |x|` (`E|x|^2 = E x^2`).
    pub fn se_abs(&self) -> f64 {
        let n = self.count as f64;
        if n < 2.0 {
            return f64::NAN;
        }
        let m = self.mean_abs();
        ((self.sum_sq / n - m * m).max(0.0) * n / (n - 1.0) / n).sqrt()
    }

    /// Standard error of the second moment would need fourth moments; this is
    /// the standard error of the mean.
    pub fn se_mean(&self) -> f64 {
        let n = self.count as f64;
        let m = self.mean();
        ((self.sum_sq / n - m * m).max(0.0) / (n - 1.0)).sqrt()
    }
}

/// One point of a first-moment curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentPoint {
    pub t: f64,
    pub mean_abs: f64,
    pub se: f64,
}

/// `(t, mean |x(t)|, se)` over paths that share a grid.
pub fn moment_curve(
    paths: &[crate::slow::RescaledPath],
    times: &[f64],
) -> Result<Vec<MomentPoint>> {
    if paths.is_empty() {
        return Err(Error::EmptySample);
    }
    Ok(times
        .iter()
        .map(|&t| {
            let mut acc = MomentAccumulator::default();
            for p in paths {
                acc.push(p.value_at(t));
            }
            MomentPoint {
                t,
                mean_abs: acc.mean_abs(),
                se: acc.se_abs(),
            }
        })
        .collect())
}

/// Empirical `q`-quantile (reorders `v`).
pub fn quantile(v: &mut [f64], q: f64) -> f64 {
    let k = ((q * v.len() as f64) as usize).min(v.len() - 1);
    *v.select_nth_unstable_by(k, f64::total_cmp).1
}

/// Least-squares `(slope, intercept)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    /// Log-log slope of `P(|Y| > x)`; `-alpha` for a regularly varying tail.
    pub slope: f64,
    pub intercept: f64,
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
    pub samples: usize,
}

impl TailFit {
    pub fn exponent(&self) -> f64 {
        -self.slope
    }
}

/// Fits `log P(|Y| > x)` against `log x` at `points` log-spaced thresholds in `[lo, hi]`.
/// Thresholds with no exceedances are skipped.
pub fn tail_slope(samples: &[f64], lo: f64, hi: f64, points: usize) -> Result<TailFit> {
    if samples.is_empty() {
        return Err(Error::EmptySample);
    }
    if !(lo > 0.0 && hi > lo && points >= 2) {
        return Err(Error::InvalidParameter(
            "tail fit needs 0 < lo < hi and >= 2 points".into(),
        ));
    }
    let abs = sorted(&samples.iter().map(|x| x.abs()).collect::<Vec<_>>());
    let n = abs.len() as f64;
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for k in 0..points {
        let x = lo * (hi / lo).powf(k as f64 / (points - 1) as f64);
        let above = abs.len() - abs.partition_point(|&a| a <= x);
        if above > 0 {
            xs.push(x.ln());
            ys.push((above as f64 / n).ln());
        }
    }
    if xs.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "too few exceedances above {lo} for a tail fit"
        )));
    }
    let (slope, intercept) = linear_fit(&xs, &ys);
    Ok(TailFit {
        slope,
        intercept,
        lo,
        hi,
        points: xs.len(),
        samples: abs.len(),
    })
}

/// Hill estimator of the tail exponent from the `k` largest `|x|`.
pub fn hill(samples: &[f64], k: usize) -> Result<f64> {
    if k == 0 || k >= samples.len() {
        return Err(Error::InvalidParameter(format!(
            "Hill needs 0 < k < n, got k = {k}"
        )));
    }
    let mut abs: Vec<f64> = samples.iter().map(|x| x.abs()).collect();
    let n = abs.len();
    abs.select_nth_unstable_by(n - k - 1, f64::total_cmp);
    let threshold = abs[n - k - 1];
    let s: f64 = abs[n - k..].iter().map(|x| (x / threshold).ln()).sum();
    Ok(k as f64 / s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn ks_trivial_cases() {
        let a = [0.3, 0.1, 0.7];
        assert_eq!(ks_two_sample(&a, &a).unwrap(), 0.0);
        assert_eq!(ks_two_sample(&[0.0], &[1.0]).unwrap(), 1.0);
        assert!(ks_two_sample(&[], &[1.0]).is_err());
        assert!(ks_one_sample(&[], |x| x).is_err());
        assert_eq!(ks_two_sample(&[1.0, 2.0], &[1.0, 3.0]).unwrap(), 0.5);
    }

    #[test]
    fn ks_one_sample_uniform() {
        // mean of sqrt(n) D over many seeds is ~0.8687 for a correct implementation
        let mut total = 0.0;
        for seed in 0..200 {
            let mut r = stream(30, seed);
            let v: Vec<f64> = (0..2000).map(|_| r.random::<f64>()).collect();
            total += ks_one_sample(&v, |x| x.clamp(0.0, 1.0)).unwrap() * 2000f64.sqrt();
        }
        let mean = total / 200.0;
        assert!((mean - 0.8687).abs() < 0.06, "{mean}");
        assert_eq!(ks_one_sample(&[0.5], |x| x.clamp(0.0, 1.0)).unwrap(), 0.5);
    }

    proptest! {
        #[test]
        fn ks_symmetric(a in prop::collection::vec(-5.0f64..5.0, 1..50), b in prop::collection::vec(-5.0f64..5.0, 1..50)) {
            let d = ks_two_sample(&a, &b).unwrap();
            prop_assert_eq!(d, ks_two_sample(&b, &a).unwrap());
            prop_assert!((0.0..=1.0).contains(&d));
        }

        #[test]
        fn histogram_conserves_mass(v in prop::collection::vec(-3.0f64..10.0, 1..500), bins in 1usize..300) {
            let h = Histogram::build(&v, bins, None).unwrap();
            let total: f64 = h.masses.iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            prop_assert!(h.masses.iter().all(|&m| m >= 0.0));
            prop_assert!(v.iter().all(|&x| x >= h.lo && x <= h.hi));
        }
    }

    #[test]
    fn histogram_default_range() {
        let h = Histogram::build(&[1.0, 2.0, 4.0], 200, None).unwrap();
        assert_eq!(h.lo, 0.0);
        assert!((h.hi - 4.2).abs() < 1e-12);
        assert_eq!(h.edges(199).1, h.hi);
        let h = Histogram::build(&[3.0, 3.0], 10, None).unwrap();
        assert_eq!(h.masses.iter().sum::<f64>(), 1.0);
        let h = Histogram::build(&[0.0], 4, None).unwrap();
        assert_eq!(h.masses[0], 1.0);
    }

    #[test]
    fn accumulators_merge() {
        let v: Vec<f64> = (0..100).map(|i| (i as f64 - 40.0) / 7.0).collect();
        let mut whole = MomentAccumulator::default();
        v.iter().for_each(|&x| whole.push(x));
        let mut a = MomentAccumulator::default();
        let mut b = MomentAccumulator::default();
        v[..37].iter().for_each(|&x| a.push(x));
        v[37..].iter().for_each(|&x| b.push(x));
        a.merge(&b);
        assert_eq!(a.count, whole.count);
        assert!((a.mean_abs() - whole.mean_abs()).abs() < 1e-12);
        assert!((a.se_abs() - whole.se_abs()).abs() < 1e-12);
    }

    #[test]
    fn deterministic_moment_curve() {
        let p = crate::slow::RescaledPath {
            dt: 1.0,
            values: vec![1.0, -2.0, 3.0],
            epsilon: None,
            interpolation: crate::slow::Interpolation::PiecewiseConstant,
        };
        let c = moment_curve(&[p.clone(), p], &[0.0, 1.0, 2.0]).unwrap();
        assert_eq!(
            c.iter().map(|m| m.mean_abs).collect::<Vec<_>>(),
            vec![1.0, 2.0, 3.0]
        );
        assert!(c.iter().all(|m| m.se == 0.0));
    }

    #[test]
    fn pareto_tail_fits() {
        let mut r = stream(31, 0);
        let alpha = 1.5;
        let v: Vec<f64> = (0..1_000_000)
            .map(|_| (1.0 - r.random::<f64>()).powf(-1.0 / alpha))
            .collect();
        let fit = tail_slope(&v, 2.0, 100.0, 15).unwrap();
        assert!((fit.exponent() - alpha).abs() < 0.05, "{fit:?}");
        let h = hill(&v, 10_000).unwrap();
        assert!((h - alpha).abs() < 0.05, "{h}");
    }

    #[test]
    fn quantiles() {
        let mut v: Vec<f64> = (0..101).map(|i| i as f64).collect();
        assert_eq!(quantile(&mut v, 0.5), 50.0);
        let (s, c) = linear_fit(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]);
        assert!((s - 2.0).abs() < 1e-15 && (c - 1.0).abs() < 1e-15);
    }
}
