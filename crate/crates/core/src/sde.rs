//! Limiting SDEs and the exact CIR law.
//!
//! Four interpretations of `dX = sigma h(X) * dW + F(X) dt`:
//!
//! * `Ito`: Euler-Maruyama with drift `F`.
//! * `Stratonovich`: Heun predictor-corrector with drift `F`.
//! * `DriftCorrected`: Euler-Maruyama with the discrete-time limit drift
//!   `F + h h' (sigma2 - m2) / 2` (Stratonovich form `F - h h' m2 / 2`).
//! * `MarcusViaTransform`: Euler for `dZ = sigma dW + F~(Z) dt` (or `dG`
//!   for stable noise) with exact noise increments, mapped back by
//!   `X = r^{-1}(Z)`. Here `F` must be the Stratonovich/Marcus-form drift.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_lr;

use crate::error::{Error, Result};
use crate::func::{AffineDrift, Multiplier, RealFn};
use crate::levy::StableLaw;
use crate::slow::{grid_len, Interpolation, RescaledPath};
use crate::transform::{
    build_transform, ito_form_drift, transformed_drift, Transform, TransformedDrift,
};

pub const DEFAULT_DT: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Interpretation {
    Ito,
    Stratonovich,
    DriftCorrected,
    MarcusViaTransform,
}

impl Interpretation {
    pub fn label(&self) -> &'static str {
        match self {
            Interpretation::Ito => "ito",
            Interpretation::Stratonovich => "stratonovich",
            Interpretation::DriftCorrected => "drift-corrected",
            Interpretation::MarcusViaTransform => "marcus-via-transform",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Noise {
    Brownian,
    Stable(StableLaw),
}

/// `(sigma^2, int f0^2 dmu)` of the fast observable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscreteConstants {
    pub sigma2: f64,
    pub f0_second_moment: f64,
}

impl DiscreteConstants {
    /// Rounded constants reported for the modified intermittent map at `gamma = 0.1`, `f0(y) = y`.
    pub const MODIFIED_PM: DiscreteConstants = DiscreteConstants {
        sigma2: 0.085,
        f0_second_moment: 0.319,
    };
}

#[derive(Clone)]
pub struct SdeSpec {
    pub drift: RealFn,
    pub h: Multiplier,
    pub sigma: f64,
    pub interpretation: Interpretation,
    pub xi: f64,
    pub noise: Noise,
    /// Required by `DriftCorrected`.
    pub constants: Option<DiscreteConstants>,
    /// Evaluate coefficients at `max(x, 0)` and report `max(x, 0)`.
    pub full_truncation: bool,
    /// Open interval handed to the transform builder.
    pub domain_hint: (f64, f64),
}

impl std::fmt::Debug for SdeSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SdeSpec")
            .field("h", &self.h)
            .field("sigma", &self.sigma)
            .field("interpretation", &self.interpretation)
            .field("xi", &self.xi)
            .field("noise", &self.noise)
            .field("constants", &self.constants)
            .finish_non_exhaustive()
    }
}

impl SdeSpec {
    pub fn new(
        drift: RealFn,
        h: Multiplier,
        sigma: f64,
        interpretation: Interpretation,
        xi: f64,
    ) -> Self {
        Self {
            drift,
            h,
            sigma,
            interpretation,
            xi,
            noise: Noise::Brownian,
            constants: None,
            full_truncation: false,
            domain_hint: (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    /// Limit of the diffusively scaled fast-slow map with averaged coupling `big_f`.
    ///
    /// `DriftCorrected` is the correct limit; `Ito` and `Stratonovich` use `big_f`
    /// unchanged under those interpretations; `MarcusViaTransform` integrates the
    /// transformed equation with the Stratonovich-form drift `F - h h' m2 / 2`.
    pub fn discrete_limit(
        big_f: RealFn,
        h: Multiplier,
        constants: DiscreteConstants,
        xi: f64,
        interpretation: Interpretation,
    ) -> Self {
        let drift = match interpretation {
            Interpretation::MarcusViaTransform => {
                crate::transform::strat_correction_drift(big_f, &h, constants.f0_second_moment)
            }
            _ => big_f,
        };
        let full_truncation = h.needs_nonnegative();
        Self {
            constants: Some(constants),
            full_truncation,
            ..Self::new(drift, h, constants.sigma2.sqrt(), interpretation, xi)
        }
    }

    pub fn with_noise(mut self, noise: Noise) -> Self {
        self.noise = noise;
        self
    }
}

/// A simulated path, with the additive `Z` path when the transform route is used.
#[derive(Debug, Clone, PartialEq)]
pub struct SdePath {
    pub x: RescaledPath,
    pub z: Option<RescaledPath>,
}

enum Scheme {
    Euler {
        drift: RealFn,
    },
    Heun {
        drift: RealFn,
    },
    Transform {
        drift: TransformedDrift,
        transform: Arc<Transform>,
    },
}

/// Prepared integrator for one `SdeSpec`.
pub struct Integrator {
    spec: SdeSpec,
    scheme: Scheme,
}

impl Integrator {
    pub fn new(spec: SdeSpec) -> Result<Self> {
        if !(spec.sigma >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "sigma = {} must be >= 0",
                spec.sigma
            )));
        }
        let stable = matches!(spec.noise, Noise::Stable(_));
        let scheme = match spec.interpretation {
            Interpretation::Ito => Scheme::Euler {
                drift: spec.drift.clone(),
            },
            Interpretation::Stratonovich if stable => {
                return Err(Error::InvalidParameter(
                    "Stratonovich integrals are unsuitable for jump noise; use the Marcus interpretation".into(),
                ))
            }
            Interpretation::Stratonovich => Scheme::Heun {
                drift: spec.drift.clone(),
            },
            Interpretation::DriftCorrected => {
                let c = spec.constants.ok_or_else(|| {
                    Error::InvalidParameter("drift-corrected SDE needs (sigma2, f0_second_moment)".into())
                })?;
                Scheme::Euler {
                    drift: ito_form_drift(spec.drift.clone(), &spec.h, c.sigma2, c.f0_second_moment),
                }
            }
            Interpretation::MarcusViaTransform => {
                let transform = Arc::new(build_transform(&spec.h, spec.xi, spec.domain_hint)?);
                Scheme::Transform {
                    drift: transformed_drift(spec.drift.clone(), transform.clone()),
                    transform,
                }
            }
        };
        Ok(Self { spec, scheme })
    }

    pub fn spec(&self) -> &SdeSpec {
        &self.spec
    }

    pub fn transform(&self) -> Option<&Transform> {
        match &self.scheme {
            Scheme::Transform { transform, .. } => Some(transform),
            _ => None,
        }
    }

    /// Noise increment over a step of length `dt`.
    #[inline]
    pub fn increment<R: Rng + ?Sized>(&self, dt: f64, rng: &mut R) -> f64 {
        match self.spec.noise {
            Noise::Brownian => dt.sqrt() * rng.sample::<f64, _>(StandardNormal),
            Noise::Stable(law) => dt.powf(1.0 / law.alpha) * law.sample(rng),
        }
    }

    /// Integrates `horizon / dt` steps, recording every `grid_dt`.
    pub fn path<R: Rng + ?Sized>(
        &self,
        horizon: f64,
        dt: f64,
        grid_dt: f64,
        rng: &mut R,
    ) -> Result<SdePath> {
        let (steps, every) = step_plan(horizon, dt, grid_dt)?;
        self.run(dt, steps, every, |_| self.increment(dt, rng))
    }

    /// Integrates with caller-supplied noise increments (`next(step)` for each step).
    pub fn run(
        &self,
        dt: f64,
        steps: usize,
        every: usize,
        mut next: impl FnMut(usize) -> f64,
    ) -> Result<SdePath> {
        let sigma = self.spec.sigma;
        let trunc = self.spec.full_truncation;
        let clip = |x: f64| if trunc { x.max(0.0) } else { x };
        let h = &self.spec.h;
        let cap = steps / every + 1;
        let mut xs = Vec::with_capacity(cap);
        let grid_dt = dt * every as f64;
        match &self.scheme {
            Scheme::Euler { drift } => {
                let mut x = self.spec.xi;
                xs.push(clip(x));
                for n in 1..=steps {
                    let dw = next(n);
                    let xc = clip(x);
                    x = x + drift(xc) * dt + sigma * h.value(xc) * dw;
                    if !x.is_finite() {
                        return Err(Error::NonFinite { value: x, step: n });
                    }
                    if n % every == 0 {
                        xs.push(clip(x));
                    }
                }
            }
            Scheme::Heun { drift } => {
                let mut x = self.spec.xi;
                xs.push(clip(x));
                for n in 1..=steps {
                    let dw = next(n);
                    let xc = clip(x);
                    let a0 = drift(xc);
                    let b0 = h.value(xc);
                    let pred = clip(x + a0 * dt + sigma * b0 * dw);
                    x = x + 0.5 * (a0 + drift(pred)) * dt + 0.5 * sigma * (b0 + h.value(pred)) * dw;
                    if !x.is_finite() {
                        return Err(Error::NonFinite { value: x, step: n });
                    }
                    if n % every == 0 {
                        xs.push(clip(x));
                    }
                }
            }
            Scheme::Transform { drift, transform } => {
                let (lo, hi) = transform.z_range();
                let mut z = 0.0;
                let mut zs = Vec::with_capacity(cap);
                zs.push(z);
                xs.push(self.spec.xi);
                for n in 1..=steps {
                    let dg = next(n);
                    let f = drift.eval(z).map_err(|_| Error::TransformExit {
                        value: z,
                        lo,
                        hi,
                        step: n,
                    })?;
                    z = z + f * dt + sigma * dg;
                    if !(z > lo && z < hi) {
                        return Err(Error::TransformExit {
                            value: z,
                            lo,
                            hi,
                            step: n,
                        });
                    }
                    if n % every == 0 {
                        zs.push(z);
                        xs.push(transform.r_inverse(z)?);
                    }
                }
                return Ok(SdePath {
                    x: grid_path(grid_dt, xs),
                    z: Some(grid_path(grid_dt, zs)),
                });
            }
        }
        Ok(SdePath {
            x: grid_path(grid_dt, xs),
            z: None,
        })
    }
}

fn grid_path(dt: f64, values: Vec<f64>) -> RescaledPath {
    RescaledPath {
        dt,
        values,
        epsilon: None,
        interpolation: Interpolation::Linear,
    }
}

/// `(steps, record_every)` for a horizon, step and recording grid.
pub fn step_plan(horizon: f64, dt: f64, grid_dt: f64) -> Result<(usize, usize)> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "dt = {dt} must be positive"
        )));
    }
    let every = (grid_dt / dt).round();
    if every < 1.0 || ((every * dt - grid_dt) / grid_dt).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "grid_dt = {grid_dt} must be a positive integer multiple of dt = {dt}"
        )));
    }
    let cells = grid_len(horizon, grid_dt)?;
    Ok((cells * every as usize, every as usize))
}

/// Integrates one path of `spec` recorded on a `dt` grid.
pub fn integrate_path<R: Rng + ?Sized>(
    spec: &SdeSpec,
    horizon: f64,
    dt: f64,
    rng: &mut R,
) -> Result<RescaledPath> {
    Ok(Integrator::new(spec.clone())?.path(horizon, dt, dt, rng)?.x)
}

/// `dX = sigma X^(1/2) dW + alpha (beta - X) dt`, `X(0) = xi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CirParams {
    pub sigma2: f64,
    pub alpha: f64,
    pub beta: f64,
    pub xi: f64,
}

impl CirParams {
    pub fn new(sigma2: f64, alpha: f64, beta: f64, xi: f64) -> Result<Self> {
        let p = Self {
            sigma2,
            alpha,
            beta,
            xi,
        };
        if !(sigma2 > 0.0 && alpha > 0.0 && beta > 0.0 && xi >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "invalid CIR parameters {p:?}"
            )));
        }
        Ok(p)
    }

    /// CIR limit of the square-root fast-slow example: `alpha = m2 / 2`,
    /// `beta = (1 + sigma2 / alpha) / 4`.
    pub fn from_constants(c: DiscreteConstants, xi: f64) -> Result<Self> {
        let alpha = 0.5 * c.f0_second_moment;
        Self::new(c.sigma2, alpha, 0.25 * (1.0 + c.sigma2 / alpha), xi)
    }

    /// CIR law of the drift-corrected limit when `h(x) = c x^(1/2)` and `F` is
    /// affine and mean-reverting; `None` otherwise.
    pub fn from_limit(
        big_f: AffineDrift,
        h: &Multiplier,
        c: DiscreteConstants,
        xi: f64,
    ) -> Option<Self> {
        let Multiplier::Power { coef, exponent } = *h else {
            return None;
        };
        if exponent != 0.5 || big_f.slope >= 0.0 {
            return None;
        }
        // h h' = coef^2 / 2
        let intercept = big_f.intercept + 0.25 * coef * coef * (c.sigma2 - c.f0_second_moment);
        let alpha = -big_f.slope;
        Self::new(c.sigma2 * coef * coef, alpha, intercept / alpha, xi).ok()
    }

    pub fn degrees_of_freedom(&self) -> f64 {
        4.0 * self.alpha * self.beta / self.sigma2
    }

    /// `c(t) = sigma^2 (1 - e^{-alpha t}) / (4 alpha)`.
    pub fn scale(&self, t: f64) -> f64 {
        self.sigma2 / (4.0 * self.alpha) * (-(-self.alpha * t).exp_m1())
    }

    pub fn noncentrality(&self, t: f64) -> f64 {
        (-self.alpha * t).exp() * self.xi / self.scale(t)
    }

    /// Ito drift `alpha (beta - x)` as an affine function.
    pub fn drift(&self) -> AffineDrift {
        AffineDrift::new(self.alpha * self.beta, -self.alpha)
    }
}

/// `E X(t) = xi e^{-alpha t} + beta (1 - e^{-alpha t})`.
pub fn cir_mean(p: &CirParams, t: f64) -> f64 {
    let e = (-p.alpha * t).exp();
    p.xi * e + p.beta * (1.0 - e)
}

/// Poisson-gamma mixture draw of a noncentral chi-squared variate.
pub fn noncentral_chisq_sample<R: Rng + ?Sized>(k: f64, lambda: f64, rng: &mut R) -> f64 {
    let j = if lambda > 0.0 {
        Poisson::new(0.5 * lambda)
            .expect("positive rate")
            .sample(rng)
    } else {
        0.0
    };
    Gamma::new(0.5 * k + j, 2.0)
        .expect("positive shape")
        .sample(rng)
}

/// Exact draw of `X(t) = c(t) H`, `H ~ chi2'(4 alpha beta / sigma^2, e^{-alpha t} xi / c(t))`.
pub fn cir_exact_sample<R: Rng + ?Sized>(p: &CirParams, t: f64, rng: &mut R) -> f64 {
    let c = p.scale(t);
    c * noncentral_chisq_sample(p.degrees_of_freedom(), p.noncentrality(t), rng)
}

/// Noncentral chi-squared CDF as a Poisson mixture of central chi-squared CDFs.
pub fn noncentral_chisq_cdf(x: f64, k: f64, lambda: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let half = 0.5 * lambda;
    if half == 0.0 {
        return gamma_lr(0.5 * k, 0.5 * x);
    }
    // Sum outward from the Poisson mode for stability.
    let mode = half.floor();
    let log_w = |j: f64| -half + j * half.ln() - statrs::function::gamma::ln_gamma(j + 1.0);
    let term = |j: f64| log_w(j).exp() * gamma_lr(0.5 * k + j, 0.5 * x);
    let mut total = 0.0;
    let mut weight = 0.0;
    let mut j = mode;
    loop {
        let w = log_w(j).exp();
        total += term(j);
        weight += w;
        if (w < 1e-17 && j > mode + 1.0) || j > mode + 10_000.0 {
            break;
        }
        j += 1.0;
    }
    let mut j = mode - 1.0;
    while j >= 0.0 {
        let w = log_w(j).exp();
        total += term(j);
        weight += w;
        if w < 1e-17 {
            break;
        }
        j -= 1.0;
    }
    let _ = weight;
    total.clamp(0.0, 1.0)
}

/// CDF of the exact CIR marginal at time `t`.
pub fn cir_cdf(p: &CirParams, t: f64, x: f64) -> f64 {
    noncentral_chisq_cdf(x / p.scale(t), p.degrees_of_freedom(), p.noncentrality(t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::func::real_fn;
    use crate::rng::stream;

    fn reference_cir() -> CirParams {
        CirParams::new(0.085, 0.160, 0.383, 1.0).unwrap()
    }

    fn mean_se(v: &[f64]) -> (f64, f64) {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, (var / n).sqrt())
    }

    #[test]
    fn cir_mean_values() {
        let p = reference_cir();
        assert_eq!(cir_mean(&p, 0.0), 1.0);
        let want = (-1.6f64).exp() + 0.383 * (1.0 - (-1.6f64).exp());
        assert!((cir_mean(&p, 10.0) - want).abs() < 1e-15);
        assert!((cir_mean(&p, 10.0) - 0.5076).abs() < 5e-5);
        assert!((cir_mean(&p, 1e6) - 0.383).abs() < 1e-12);
    }

    #[test]
    fn cir_parameters_at_t10() {
        let p = reference_cir();
        assert!((p.scale(10.0) - 0.1060).abs() < 5e-5);
        assert!((p.degrees_of_freedom() - 2.884).abs() < 5e-4);
        assert!((p.noncentrality(10.0) - 1.905).abs() < 5e-4);
        let d = CirParams::from_constants(DiscreteConstants::MODIFIED_PM, 1.0).unwrap();
        assert!((d.alpha - 0.1595).abs() < 1e-12);
        assert!((d.beta - 0.383).abs() < 5e-4);
        let big_f = AffineDrift::new(0.375 * 0.319, -0.5 * 0.319);
        let h = Multiplier::Power {
            coef: 1.0,
            exponent: 0.5,
        };
        let l = CirParams::from_limit(big_f, &h, DiscreteConstants::MODIFIED_PM, 1.0).unwrap();
        assert!(
            (l.alpha - d.alpha).abs() < 1e-15
                && (l.beta - d.beta).abs() < 1e-12
                && l.sigma2 == d.sigma2
        );
        assert!(
            CirParams::from_limit(big_f, &Multiplier::unit(), DiscreteConstants::MODIFIED_PM, 1.0)
                .is_none()
        );
    }

    #[test]
    fn chisq_central_mean() {
        let mut r = stream(1, 0);
        let v: Vec<f64> = (0..1_000_000)
            .map(|_| noncentral_chisq_sample(2.0, 0.0, &mut r))
            .collect();
        let (m, se) = mean_se(&v);
        assert!((m - 2.0).abs() < 3.0 * se, "{m} {se}");
    }

    #[test]
    fn chisq_noncentral_mean_and_variance() {
        let mut r = stream(2, 0);
        let v: Vec<f64> = (0..1_000_000)
            .map(|_| noncentral_chisq_sample(2.884, 1.905, &mut r))
            .collect();
        let (m, se) = mean_se(&v);
        assert!((m - 4.789).abs() < 3.0 * se, "{m} {se}");
        let mut r = stream(3, 0);
        let v: Vec<f64> = (0..1_000_000)
            .map(|_| noncentral_chisq_sample(1.0, 4.0, &mut r))
            .collect();
        let (m, _) = mean_se(&v);
        let sq: Vec<f64> = v.iter().map(|x| (x - m).powi(2)).collect();
        let (var, var_se) = mean_se(&sq);
        assert!((var - 18.0).abs() < 3.0 * var_se, "{var} {var_se}");
    }

    #[test]
    fn chisq_cdf_reduces_to_central_and_matches_series_mean() {
        // central chi2 with 2 dof is exponential with mean 2
        for x in [0.1, 1.0, 5.0] {
            assert!(
                (noncentral_chisq_cdf(x, 2.0, 0.0) - (1.0 - (-x / 2.0f64).exp())).abs() < 1e-14
            );
        }
        // mean k + lambda from integrating the survival function
        let (k, l) = (2.884, 1.905);
        let n = 40_000;
        let h = 80.0 / n as f64;
        let mean: f64 = (0..n)
            .map(|i| (1.0 - noncentral_chisq_cdf((i as f64 + 0.5) * h, k, l)) * h)
            .sum();
        assert!((mean - (k + l)).abs() < 1e-6, "{mean}");
    }

    #[test]
    fn cir_exact_mean_over_time() {
        let p = reference_cir();
        for (i, t) in [1.0, 5.0, 10.0, 15.0].into_iter().enumerate() {
            let mut r = stream(10, i as u64);
            let v: Vec<f64> = (0..200_000)
                .map(|_| cir_exact_sample(&p, t, &mut r))
                .collect();
            let (m, se) = mean_se(&v);
            assert!(
                (m - cir_mean(&p, t)).abs() < 3.0 * se,
                "t={t}: {m} vs {}",
                cir_mean(&p, t)
            );
            assert!(v.iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn cir_zero_start_mean() {
        let p = CirParams::new(0.085, 0.16, 0.383, 0.0).unwrap();
        assert!((cir_mean(&p, 0.5) - 0.383 * (1.0 - (-0.08f64).exp())).abs() < 1e-15);
        let mut r = stream(4, 0);
        let v: Vec<f64> = (0..200_000)
            .map(|_| cir_exact_sample(&p, 0.5, &mut r))
            .collect();
        let (m, se) = mean_se(&v);
        assert!((m - cir_mean(&p, 0.5)).abs() < 3.0 * se);
    }

    #[test]
    fn brownian_motion_variance() {
        let spec = SdeSpec::new(
            real_fn(|_| 0.0),
            Multiplier::unit(),
            1.0,
            Interpretation::Ito,
            0.5,
        );
        let integ = Integrator::new(spec).unwrap();
        let v: Vec<f64> = (0..20_000)
            .map(|i| {
                integ
                    .path(2.0, 0.01, 2.0, &mut stream(5, i))
                    .unwrap()
                    .x
                    .terminal()
                    - 0.5
            })
            .collect();
        let (m, _) = mean_se(&v);
        let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
        // Var of the sample variance of a Gaussian: 2 s^4 / (n - 1)
        assert!((var - 2.0).abs() < 3.0 * 2.0 * (2.0 / 20_000f64).sqrt());
    }

    #[test]
    fn heun_converges_to_stratonovich_exponential() {
        // dX = X o dW has X = xi exp(W).
        let spec = SdeSpec::new(
            real_fn(|_| 0.0),
            Multiplier::Linear {
                slope: 1.0,
                intercept: 0.0,
            },
            1.0,
            Interpretation::Stratonovich,
            1.0,
        );
        let integ = Integrator::new(spec).unwrap();
        let horizon = 1.0;
        let mut errs = Vec::new();
        for dt in [0.01, 0.005, 0.0025, 0.00125] {
            let steps = (horizon / dt) as usize;
            let mut total = 0.0;
            let paths = 200;
            for p in 0..paths {
                let mut r = stream(6, p);
                // fine increments at the smallest step, aggregated
                let fine: f64 = 0.00125;
                let ratio = (dt / fine) as usize;
                let incs: Vec<f64> = (0..steps * ratio)
                    .map(|_| fine.sqrt() * r.sample::<f64, _>(StandardNormal))
                    .collect();
                let coarse: Vec<f64> = incs.chunks(ratio).map(|c| c.iter().sum()).collect();
                let path = integ.run(dt, steps, 1, |n| coarse[n - 1]).unwrap();
                let mut w: f64 = 0.0;
                let mut sup: f64 = 0.0;
                for (n, x) in path.x.values.iter().enumerate().skip(1) {
                    w += coarse[n - 1];
                    sup = sup.max((x - w.exp()).abs());
                }
                total += sup;
            }
            errs.push(total / 200.0);
        }
        // first-order strong convergence: halving dt roughly halves the error
        let slope = (errs[0] / errs[3]).ln() / 8f64.ln();
        assert!(slope > 0.8 && slope < 1.2, "{errs:?} slope {slope}");
    }

    #[test]
    fn drift_corrected_reduces_to_ito_when_constants_match() {
        let c = DiscreteConstants {
            sigma2: 0.319,
            f0_second_moment: 0.319,
        };
        let big_f = real_fn(|x| 0.5 * (0.75 - x) * 0.319);
        let h = Multiplier::Power {
            coef: 1.0,
            exponent: 0.5,
        };
        let a = Integrator::new(SdeSpec::discrete_limit(
            big_f.clone(),
            h.clone(),
            c,
            1.0,
            Interpretation::DriftCorrected,
        ))
        .unwrap();
        let b = Integrator::new(SdeSpec::discrete_limit(
            big_f,
            h,
            c,
            1.0,
            Interpretation::Ito,
        ))
        .unwrap();
        for i in 0..20 {
            let pa = a.path(5.0, 1e-3, 0.01, &mut stream(7, i)).unwrap();
            let pb = b.path(5.0, 1e-3, 0.01, &mut stream(7, i)).unwrap();
            assert_eq!(pa, pb);
        }
    }

    #[test]
    fn unit_h_transform_route_equals_ito() {
        let f = real_fn(|x| 0.3 - x);
        let mut ito = SdeSpec::new(f.clone(), Multiplier::unit(), 0.7, Interpretation::Ito, 0.0);
        let mut marcus = SdeSpec::new(
            f,
            Multiplier::unit(),
            0.7,
            Interpretation::MarcusViaTransform,
            0.0,
        );
        ito.full_truncation = false;
        marcus.full_truncation = false;
        let a = Integrator::new(ito).unwrap();
        let b = Integrator::new(marcus).unwrap();
        for i in 0..10 {
            let pa = a.path(2.0, 1e-3, 0.01, &mut stream(8, i)).unwrap();
            let pb = b.path(2.0, 1e-3, 0.01, &mut stream(8, i)).unwrap();
            assert_eq!(pa.x.values, pb.x.values);
            assert_eq!(pb.z.as_ref().unwrap().values, pb.x.values);
        }
    }

    #[test]
    fn stable_noise_rejects_stratonovich() {
        let law = StableLaw::new(1.5, 0.0, 1.0).unwrap();
        let spec = SdeSpec::new(
            real_fn(|_| 0.0),
            Multiplier::unit(),
            1.0,
            Interpretation::Stratonovich,
            0.0,
        )
        .with_noise(Noise::Stable(law));
        assert!(Integrator::new(spec).is_err());
    }

    #[test]
    fn drift_corrected_requires_constants() {
        let spec = SdeSpec::new(
            real_fn(|_| 0.0),
            Multiplier::unit(),
            1.0,
            Interpretation::DriftCorrected,
            0.0,
        );
        assert!(Integrator::new(spec).is_err());
    }

    #[test]
    fn grid_must_be_multiple_of_step() {
        assert!(step_plan(1.0, 0.003, 0.01).is_err());
        assert_eq!(step_plan(10.0, 1e-3, 0.01).unwrap(), (10_000, 10));
    }

    #[test]
    fn euler_weak_error_is_first_order() {
        let p = CirParams::new(0.5, 2.0, 1.0, 2.0).unwrap();
        let spec = SdeSpec {
            full_truncation: true,
            ..SdeSpec::new(
                p.drift().as_fn(),
                Multiplier::Power {
                    coef: 1.0,
                    exponent: 0.5,
                },
                p.sigma2.sqrt(),
                Interpretation::Ito,
                p.xi,
            )
        };
        let integ = Integrator::new(spec).unwrap();
        let exact = cir_mean(&p, 1.0);
        let err = |dt: f64| {
            let n = 400_000;
            let s: f64 = (0..n)
                .map(|i| {
                    integ
                        .path(1.0, dt, 1.0, &mut stream(9, i))
                        .unwrap()
                        .x
                        .terminal()
                })
                .sum();
            s / n as f64 - exact
        };
        let e1 = err(0.2);
        let e2 = err(0.1);
        let e3 = err(0.05);
        for ratio in [e1 / e2, e2 / e3] {
            assert!((ratio - 2.0).abs() < 0.6, "{e1} {e2} {e3}");
        }
    }
}
