//! Limit-variance estimators for Birkhoff sums of the fast map.
//!
//! `green_kubo` sums empirical autocovariances along one long orbit;
//! `moment_estimator` averages `n^{-1} (sum_{j<n} f0(y_j))^2` over
//! independent starts. The two agree when correlations are summable.

use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fast_map::{FastMap, Orbit};
use crate::func::Observable;
use crate::rng::stream;

pub const DEFAULT_LAG_CUTOFF: usize = 1000;

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservableSpec {
    #[serde(flatten)]
    pub observable: Observable,
    /// Subtract the empirical mean before use.
    #[serde(default = "default_true")]
    pub centered: bool,
}

impl ObservableSpec {
    pub fn centered(observable: Observable) -> Self {
        Self {
            observable,
            centered: true,
        }
    }

    pub fn raw(observable: Observable) -> Self {
        Self {
            observable,
            centered: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Quality {
    Ok,
    /// The autocovariance sum came out negative: the orbit is too short for the cutoff.
    NegativeVariance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    GreenKubo,
    Moment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceEstimate {
    pub sigma2: f64,
    pub f0_second_moment: f64,
    pub lag_cutoff: usize,
    pub orbit_length: usize,
    pub standard_error: f64,
    pub seed: Option<u64>,
    pub method: Method,
    pub quality: Quality,
}

impl CovarianceEstimate {
    /// `|a - b|` in units of the combined standard error.
    pub fn z_score(&self, other: &CovarianceEstimate) -> f64 {
        let se = self.standard_error.hypot(other.standard_error);
        if se == 0.0 {
            if self.sigma2 == other.sigma2 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (self.sigma2 - other.sigma2).abs() / se
        }
    }
}

/// Empirical autocovariances `C(0..=max_lag)` with normalisation `1/N`.
pub fn autocovariance(values: &[f64], max_lag: usize) -> Vec<f64> {
    let n = values.len();
    if n == 0 {
        return vec![0.0; max_lag + 1];
    }
    // Direct summation is cheaper for short lag windows.
    if (max_lag as f64) * (n as f64) < 5e6 {
        return (0..=max_lag)
            .map(|k| {
                if k >= n {
                    0.0
                } else {
                    values[..n - k]
                        .iter()
                        .zip(&values[k..])
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
                        / n as f64
                }
            })
            .collect();
    }
    let size = (2 * n).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);
    let mut buf: Vec<Complex<f64>> = values
        .iter()
        .map(|&v| Complex::new(v, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(size)
        .collect();
    fwd.process(&mut buf);
    for c in buf.iter_mut() {
        *c = Complex::new(c.norm_sqr(), 0.0);
    }
    inv.process(&mut buf);
    let scale = 1.0 / (size as f64 * n as f64);
    (0..=max_lag)
        .map(|k| if k < n { buf[k].re * scale } else { 0.0 })
        .collect()
}

/// Green-Kubo estimate `C(0) + 2 sum_{k=1}^{L} C(k)` from one orbit.
pub fn green_kubo(
    orbit: &Orbit,
    obs: &ObservableSpec,
    lag_cutoff: usize,
) -> Result<CovarianceEstimate> {
    let n = orbit.len();
    if lag_cutoff == 0 || lag_cutoff.saturating_mul(100) > n {
        return Err(Error::CutoffTooLarge {
            lag: lag_cutoff,
            len: n,
        });
    }
    let mut values: Vec<f64> = orbit
        .points
        .iter()
        .map(|&y| obs.observable.eval(y))
        .collect();
    if obs.centered {
        let mean = values.iter().sum::<f64>() / n as f64;
        values.iter_mut().for_each(|v| *v -= mean);
    }
    let c = autocovariance(&values, lag_cutoff);
    let sigma2 = c[0] + 2.0 * c[1..].iter().sum::<f64>();
    // Asymptotic variance of the truncated (rectangular-kernel) estimator.
    let standard_error = sigma2.abs() * (2.0 * (2 * lag_cutoff + 1) as f64 / n as f64).sqrt();
    Ok(CovarianceEstimate {
        sigma2,
        f0_second_moment: c[0].max(0.0),
        lag_cutoff,
        orbit_length: n,
        standard_error,
        seed: None,
        method: Method::GreenKubo,
        quality: if sigma2 < 0.0 {
            Quality::NegativeVariance
        } else {
            Quality::Ok
        },
    })
}

/// Per-block sums `(sum f0, sum f0^2)` for block `index`.
fn block_sums(
    map: &FastMap,
    f: &Observable,
    n: usize,
    burn_in: usize,
    seed: u64,
    index: u64,
) -> Result<(f64, f64)> {
    let mut rng = stream(seed, index);
    let mut traj = map.sample_invariant(&mut rng, burn_in)?;
    let (mut s, mut q) = (0.0, 0.0);
    for _ in 0..n {
        let v = f.eval(traj.next_point()?);
        s += v;
        q += v * v;
    }
    Ok((s, q))
}

/// Moment estimate `E[n^{-1} (sum_{j<n} f0(y_j))^2]` over `blocks` independent starts.
///
/// Block `b` draws its start from the stream `(seed, b)`, so the estimate
/// does not depend on how blocks are scheduled.
pub fn moment_estimator(
    map: &FastMap,
    obs: &ObservableSpec,
    block_length: usize,
    blocks: usize,
    burn_in: usize,
    seed: u64,
) -> Result<CovarianceEstimate> {
    if block_length < 1000 || blocks < 100 {
        return Err(Error::InvalidParameter(format!(
            "moment estimator needs block_length >= 1000 and blocks >= 100, got {block_length} x {blocks}"
        )));
    }
    let f = Arc::new(obs.observable.clone());
    let sums: Vec<(f64, f64)> = (0..blocks as u64)
        .into_par_iter()
        .map(|b| block_sums(map, &f, block_length, burn_in, seed, b))
        .collect::<Result<_>>()?;
    Ok(reduce_blocks(&sums, block_length, obs.centered, seed))
}

fn reduce_blocks(sums: &[(f64, f64)], n: usize, centered: bool, seed: u64) -> CovarianceEstimate {
    let b = sums.len() as f64;
    let nf = n as f64;
    let total: f64 = sums.iter().map(|s| s.0).sum();
    let mean = if centered { total / (nf * b) } else { 0.0 };
    let vals: Vec<f64> = sums
        .iter()
        .map(|s| (s.0 - nf * mean).powi(2) / nf)
        .collect();
    let est = vals.iter().sum::<f64>() / b;
    let var = vals.iter().map(|v| (v - est).powi(2)).sum::<f64>() / (b - 1.0);
    let second = sums.iter().map(|s| s.1).sum::<f64>() / (nf * b) - mean * mean;
    CovarianceEstimate {
        sigma2: est,
        f0_second_moment: second.max(0.0),
        lag_cutoff: n - 1,
        orbit_length: n * sums.len(),
        standard_error: (var / b).sqrt(),
        seed: Some(seed),
        method: Method::Moment,
        quality: Quality::Ok,
    }
}
