//! Stable noise, Levy paths, the superdiffusive fast-slow map and Marcus limits.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::Rng;
use rand_distr::{Distribution, Exp1, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fast_map::{FastMap, MapKind, Trajectory};
use crate::func::Observable;
use crate::sde::{Integrator, Interpretation, Noise, SdePath, SdeSpec};
use crate::slow::{self, Evolution, Interpolation, NoiseScaling, RescaledPath, SlowSystem};
use crate::transform::Transform;

/// Serialized form of a stable law: exponent is `1 / gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StableNoiseSpec {
    pub gamma: f64,
    #[serde(default = "default_skew")]
    pub skew: f64,
    #[serde(default = "default_scale")]
    pub scale: f64,
}

fn default_skew() -> f64 {
    1.0
}

fn default_scale() -> f64 {
    1.0
}

impl StableNoiseSpec {
    pub fn new(gamma: f64) -> Self {
        Self {
            gamma,
            skew: 1.0,
            scale: 1.0,
        }
    }
}

/// Stable law `S(alpha, skew, scale)` in the Samorodnitsky-Taqqu parametrisation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StableNoiseSpec", into = "StableNoiseSpec")]
pub struct StableLaw {
    pub alpha: f64,
    pub skew: f64,
    pub scale: f64,
    b: f64,
    s: f64,
}

impl TryFrom<StableNoiseSpec> for StableLaw {
    type Error = Error;

    /// `gamma = 1/2` is allowed: it gives the Gaussian boundary case.
    fn try_from(spec: StableNoiseSpec) -> Result<Self> {
        if !(spec.gamma >= 0.5 && spec.gamma < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "stable noise gamma = {} must lie in [1/2, 1)",
                spec.gamma
            )));
        }
        Self::new(1.0 / spec.gamma, spec.skew, spec.scale)
    }
}

impl From<StableLaw> for StableNoiseSpec {
    fn from(l: StableLaw) -> Self {
        Self {
            gamma: l.gamma(),
            skew: l.skew,
            scale: l.scale,
        }
    }
}

impl StableLaw {
    pub fn new(alpha: f64, skew: f64, scale: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 2.0) {
            return Err(Error::InvalidParameter(format!(
                "stable exponent {alpha} must lie in (0, 2]"
            )));
        }
        if !(-1.0..=1.0).contains(&skew) {
            return Err(Error::InvalidParameter(format!(
                "skew {skew} must lie in [-1, 1]"
            )));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "scale {scale} must be positive"
            )));
        }
        let (b, s) = if alpha == 1.0 {
            (0.0, 1.0)
        } else {
            let t = skew * (PI * alpha / 2.0).tan();
            (t.atan() / alpha, (1.0 + t * t).powf(1.0 / (2.0 * alpha)))
        };
        Ok(Self {
            alpha,
            skew,
            scale,
            b,
            s,
        })
    }

    /// Exponent `1 / gamma` for intermittency exponent `gamma`.
    pub fn from_gamma(gamma: f64, skew: f64, scale: f64) -> Result<Self> {
        StableNoiseSpec { gamma, skew, scale }.try_into()
    }

    pub fn gamma(&self) -> f64 {
        1.0 / self.alpha
    }

    /// Chambers-Mallows-Stuck draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let v = rng.sample(Uniform::new(-FRAC_PI_2, FRAC_PI_2).expect("valid range"));
        let w: f64 = Exp1.sample(rng);
        let a = self.alpha;
        if a == 1.0 {
            let p = FRAC_PI_2 + self.skew * v;
            let x = (p * v.tan() - self.skew * (FRAC_PI_2 * w * v.cos() / p).ln()) / FRAC_PI_2;
            return self.scale * x + self.skew * self.scale * self.scale.ln() / FRAC_PI_2;
        }
        let ab = a * (v + self.b);
        let x =
            self.s * ab.sin() / v.cos().powf(1.0 / a) * ((v - ab).cos() / w).powf((1.0 - a) / a);
        self.scale * x
    }
}

/// Draws one variate from the law described by `spec`.
pub fn stable_sample<R: Rng + ?Sized>(spec: &StableNoiseSpec, rng: &mut R) -> Result<f64> {
    Ok(StableLaw::try_from(*spec)?.sample(rng))
}

/// Independent stable increments on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LevyPath {
    pub dt: f64,
    pub increments: Vec<f64>,
}

impl LevyPath {
    /// Increment over a step of length `dt` is `dt^(1/alpha) Y`.
    pub fn sample<R: Rng + ?Sized>(
        law: &StableLaw,
        horizon: f64,
        dt: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let n = slow::grid_len(horizon, dt)?;
        let c = dt.powf(1.0 / law.alpha);
        Ok(Self {
            dt,
            increments: (0..n).map(|_| c * law.sample(rng)).collect(),
        })
    }

    pub fn terminal(&self) -> f64 {
        self.increments.iter().sum()
    }

    /// Cadlag piecewise-constant path `G(t)` starting at 0.
    pub fn path(&self) -> RescaledPath {
        let mut values = Vec::with_capacity(self.increments.len() + 1);
        let mut g = 0.0;
        values.push(g);
        for d in &self.increments {
            g += d;
            values.push(g);
        }
        RescaledPath {
            dt: self.dt,
            values,
            epsilon: None,
            interpolation: Interpolation::PiecewiseConstant,
        }
    }
}

/// Checks the hypotheses of the superdiffusive limit for `system` driven by `map`.
pub fn check_superdiffusive(system: &SlowSystem, map: &FastMap) -> Result<()> {
    let NoiseScaling::Superdiffusive { gamma } = system.scaling else {
        return Err(Error::InvalidParameter(
            "system must use superdiffusive scaling".into(),
        ));
    };
    if map.kind() != MapKind::PomeauManneville {
        return Err(Error::InvalidParameter(
            "superdiffusive limits need the Pomeau-Manneville map".into(),
        ));
    }
    if map.gamma() != gamma {
        return Err(Error::InvalidParameter(format!(
            "map gamma {} differs from noise gamma {gamma}",
            map.gamma()
        )));
    }
    if system.f0.eval(0.0) == 0.0 {
        return Err(Error::InvalidParameter(
            "f0(0) must be nonzero at the neutral fixed point".into(),
        ));
    }
    Ok(())
}

/// Superdiffusive fast-slow map observed at `x(floor(t / eps))`.
pub fn evolve_superdiffusive(
    system: &SlowSystem,
    map: &FastMap,
    eta: f64,
    horizon: f64,
    grid_dt: f64,
) -> Result<Evolution> {
    check_superdiffusive(system, map)?;
    slow::evolve(system, map, eta, horizon, grid_dt)
}

/// As [`evolve_superdiffusive`], continuing an existing trajectory of `map`.
pub fn evolve_superdiffusive_from(
    system: &SlowSystem,
    map: &FastMap,
    traj: Trajectory,
    horizon: f64,
    grid_dt: f64,
) -> Result<Evolution> {
    check_superdiffusive(system, map)?;
    slow::evolve_from(system, traj, horizon, grid_dt)
}

/// Marcus SDE `dX = sigma h(X) <> dG + F(X) dt` through `Z = r(X)`.
pub fn marcus_path<R: Rng + ?Sized>(
    spec: &SdeSpec,
    horizon: f64,
    dt: f64,
    grid_dt: f64,
    rng: &mut R,
) -> Result<SdePath> {
    if !matches!(spec.noise, Noise::Stable(_))
        || spec.interpretation != Interpretation::MarcusViaTransform
    {
        return Err(Error::InvalidParameter(
            "marcus_path needs stable noise and the Marcus interpretation".into(),
        ));
    }
    Integrator::new(spec.clone())?.path(horizon, dt, grid_dt, rng)
}

/// Marcus jump rule: state after a jump of size `jump` from `x_minus`, i.e. the
/// time-`jump` flow of `dx/ds = h(x)`.
pub fn marcus_jump(transform: &Transform, x_minus: f64, jump: f64) -> Result<f64> {
    transform.r_inverse(transform.r(x_minus) + jump)
}

/// Rescaled Birkhoff sum `n^-gamma sum_{j<n} f0(y(j))` along `traj`.
pub fn birkhoff_terminal(
    traj: &mut Trajectory,
    f0: &Observable,
    n: usize,
    gamma: f64,
) -> Result<f64> {
    let mut s = 0.0;
    for _ in 0..n {
        s += f0.eval(traj.next_point()?);
    }
    Ok(s / (n as f64).powf(gamma))
}

/// Sizes of the maximal runs of the Birkhoff sum that move in the direction of
/// `f0(0)`, i.e. the laminar excursions near the neutral fixed point that become
/// the jumps of the limiting stable process.
pub fn excursion_sizes(traj: &mut Trajectory, f0: &Observable, length: usize) -> Result<Vec<f64>> {
    let dir = f0.eval(0.0).signum();
    if dir == 0.0 {
        return Err(Error::InvalidParameter("f0(0) must be nonzero".into()));
    }
    let mut sizes = Vec::new();
    let mut run = 0.0;
    for _ in 0..length {
        let v = f0.eval(traj.next_point()?) * dir;
        if v > 0.0 {
            run += v;
        } else if run > 0.0 {
            sizes.push(run);
            run = 0.0;
        }
    }
    Ok(sizes)
}
