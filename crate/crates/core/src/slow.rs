//! Slow recursions driven by a fast map, and their rescaled paths.
//!
//! Diffusive scaling:
//! `x(n+1) = x(n) + eps h(x(n)) f0(y(n)) + eps^2 f(x(n), y(n), eps)`,
//! observed at `x(floor(t / eps^2))`.
//!
//! Superdiffusive scaling (intermittent maps with `gamma in (1/2, 1)`):
//! `x(n+1) = x(n) + eps^gamma h(x(n)) f0(y(n)) + eps f(x(n), y(n), eps)`,
//! observed at `x(floor(t / eps))`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fast_map::{FastMap, Orbit, Trajectory};
use crate::func::{Multiplier, Observable, SlowDrift};

pub const DEFAULT_GRID_DT: f64 = 0.01;

/// Relative slack when converting a grid time to a step index.
const INDEX_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NoiseScaling {
    /// Noise `eps`, drift `eps^2`, time `eps^-2`.
    #[default]
    Diffusive,
    /// Noise `eps^gamma`, drift `eps`, time `eps^-1`.
    Superdiffusive { gamma: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlowSystem {
    pub epsilon: f64,
    pub xi: f64,
    pub f0: Observable,
    #[serde(default)]
    pub h: Multiplier,
    #[serde(default)]
    pub f: SlowDrift,
    #[serde(default)]
    pub scaling: NoiseScaling,
}

/// Result of one slow step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlowStep {
    pub value: f64,
    /// `h` was evaluated at `max(x, 0)` because `x < 0`.
    pub clamped: bool,
}

impl SlowSystem {
    pub fn new(
        epsilon: f64,
        xi: f64,
        f0: Observable,
        h: Multiplier,
        f: SlowDrift,
        scaling: NoiseScaling,
    ) -> Result<Self> {
        let s = Self {
            epsilon,
            xi,
            f0,
            h,
            f,
            scaling,
        };
        s.validate()?;
        Ok(s)
    }

    /// The coupled system used for the CIR experiment:
    /// `f0(y) = y`, `h(x) = x^(1/2)`, `f(x, y) = (3/4 - x) y^2 / 2`, `xi = 1`.
    pub fn cir_example(epsilon: f64) -> Result<Self> {
        Self::new(
            epsilon,
            1.0,
            Observable::Identity,
            Multiplier::Power {
                coef: 1.0,
                exponent: 0.5,
            },
            SlowDrift::Product {
                intercept: 0.375,
                slope: -0.5,
                y_power: 2,
            },
            NoiseScaling::Diffusive,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "epsilon = {} must lie in (0, 1]",
                self.epsilon
            )));
        }
        if !self.xi.is_finite() {
            return Err(Error::InvalidParameter("xi must be finite".into()));
        }
        if let NoiseScaling::Superdiffusive { gamma } = self.scaling {
            if !(gamma > 0.5 && gamma < 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "superdiffusive gamma = {gamma} must lie in (1/2, 1)"
                )));
            }
        }
        Ok(())
    }

    /// `(noise coefficient, drift coefficient)`.
    pub fn coefficients(&self) -> (f64, f64) {
        match self.scaling {
            NoiseScaling::Diffusive => (self.epsilon, self.epsilon * self.epsilon),
            NoiseScaling::Superdiffusive { gamma } => (self.epsilon.powf(gamma), self.epsilon),
        }
    }

    /// Slow steps per unit of rescaled time.
    pub fn steps_per_unit(&self) -> f64 {
        match self.scaling {
            NoiseScaling::Diffusive => 1.0 / (self.epsilon * self.epsilon),
            NoiseScaling::Superdiffusive { .. } => 1.0 / self.epsilon,
        }
    }

    /// Slow step index observed at rescaled time `t`.
    pub fn step_index(&self, t: f64) -> usize {
        let s = t * self.steps_per_unit();
        (s * (1.0 + INDEX_SLACK)).floor() as usize
    }

    #[inline]
    pub fn step_slow(&self, x: f64, y: f64) -> SlowStep {
        let (a, b) = self.coefficients();
        self.step_with(x, y, a, b)
    }

    #[inline]
    fn step_with(&self, x: f64, y: f64, noise: f64, drift: f64) -> SlowStep {
        let clamped = x < 0.0 && self.h.needs_nonnegative();
        let hx = self.h.value(if clamped { 0.0 } else { x });
        let mut value = x + noise * hx * self.f0.eval(y);
        if drift != 0.0 {
            value += drift * self.f.eval(x, y, self.epsilon);
        }
        SlowStep { value, clamped }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Interpolation {
    PiecewiseConstant,
    Linear,
}

/// Path sampled on the uniform grid `t_k = k dt`, `k = 0..values.len()`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RescaledPath {
    pub dt: f64,
    pub values: Vec<f64>,
    pub epsilon: Option<f64>,
    pub interpolation: Interpolation,
}

impl RescaledPath {
    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.values.len()).map(move |k| k as f64 * self.dt)
    }

    pub fn horizon(&self) -> f64 {
        (self.values.len().saturating_sub(1)) as f64 * self.dt
    }

    pub fn terminal(&self) -> f64 {
        *self.values.last().expect("paths have at least one point")
    }

    /// Grid index of time `t` (nearest grid point at or below `t`).
    pub fn index_of(&self, t: f64) -> usize {
        (((t / self.dt) * (1.0 + INDEX_SLACK)).floor() as usize).min(self.values.len() - 1)
    }

    pub fn value_at(&self, t: f64) -> f64 {
        let k = self.index_of(t);
        match self.interpolation {
            Interpolation::PiecewiseConstant => self.values[k],
            Interpolation::Linear => {
                if k + 1 >= self.values.len() {
                    self.values[k]
                } else {
                    let w = (t - k as f64 * self.dt) / self.dt;
                    self.values[k] * (1.0 - w) + self.values[k + 1] * w
                }
            }
        }
    }
}

/// Number of grid intervals covering `[0, horizon]`.
pub fn grid_len(horizon: f64, grid_dt: f64) -> Result<usize> {
    if !(horizon >= 0.0 && grid_dt > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "need horizon >= 0 and grid_dt > 0, got {horizon}, {grid_dt}"
        )));
    }
    Ok((horizon / grid_dt).round() as usize)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evolution {
    pub path: RescaledPath,
    /// Steps at which `h` was evaluated at `max(x, 0)`.
    pub clamps: u64,
}

/// Iterates fast and slow variables jointly from `(xi, eta)` and records the
/// slow state at each grid time by piecewise-constant sampling.
pub fn evolve(
    system: &SlowSystem,
    map: &FastMap,
    eta: f64,
    horizon: f64,
    grid_dt: f64,
) -> Result<Evolution> {
    system.validate()?;
    let traj = map.trajectory(eta)?;
    evolve_from(system, traj, horizon, grid_dt)
}

/// As [`evolve`], continuing an existing fast trajectory (e.g. after burn-in).
pub fn evolve_from(
    system: &SlowSystem,
    mut traj: Trajectory,
    horizon: f64,
    grid_dt: f64,
) -> Result<Evolution> {
    let m = grid_len(horizon, grid_dt)?;
    let (noise, drift) = system.coefficients();
    let mut values = Vec::with_capacity(m + 1);
    values.push(system.xi);
    let mut x = system.xi;
    let mut n = 0usize;
    let mut clamps = 0u64;
    for k in 1..=m {
        let target = system.step_index(k as f64 * grid_dt);
        while n < target {
            let y = traj.next_point()?;
            let s = system.step_with(x, y, noise, drift);
            clamps += s.clamped as u64;
            x = s.value;
            n += 1;
            if !x.is_finite() {
                return Err(Error::NonFinite { value: x, step: n });
            }
        }
        values.push(x);
    }
    Ok(Evolution {
        path: RescaledPath {
            dt: grid_dt,
            values,
            epsilon: Some(system.epsilon),
            interpolation: Interpolation::PiecewiseConstant,
        },
        clamps,
    })
}

/// Averaged coupling `F(x) = int f(x, y, 0) dmu(y)` tabulated on a lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct AveragedDrift {
    lo: f64,
    step: f64,
    table: Vec<f64>,
}

impl AveragedDrift {
    /// Averages `f(x_i, y, 0)` over the orbit points at each lattice site `x_i`.
    pub fn from_orbit(
        f: &SlowDrift,
        orbit: &Orbit,
        lo: f64,
        hi: f64,
        sites: usize,
    ) -> Result<Self> {
        if sites < 2 || !(hi > lo) || orbit.is_empty() {
            return Err(Error::InvalidParameter(
                "averaging lattice needs >= 2 sites on lo < hi and a non-empty orbit".into(),
            ));
        }
        let step = (hi - lo) / (sites - 1) as f64;
        let table = (0..sites)
            .map(|i| {
                let x = lo + i as f64 * step;
                orbit.mean_of(|y| f.eval(x, y, 0.0))
            })
            .collect();
        Ok(Self { lo, step, table })
    }

    /// Linear interpolation; linear extrapolation outside the lattice.
    pub fn eval(&self, x: f64) -> f64 {
        let last = self.table.len() - 1;
        let s = (x - self.lo) / self.step;
        let i = (s.floor().max(0.0) as usize).min(last - 1);
        let w = s - i as f64;
        self.table[i] * (1.0 - w) + self.table[i + 1] * w
    }
}

/// `sup_k |K2(t_k)|` where `K2(t) = eps^2 sum_{j < [t eps^-2]} (f(x_j, y_j, 0) - F(x_j))`.
pub fn ldp_diagnostic_k2(
    system: &SlowSystem,
    map: &FastMap,
    eta: f64,
    horizon: f64,
    grid_dt: f64,
    averaged: &AveragedDrift,
) -> Result<f64> {
    system.validate()?;
    let traj = map.trajectory(eta)?;
    k2_from(system, traj, horizon, grid_dt, averaged)
}

pub fn k2_from(
    system: &SlowSystem,
    mut traj: Trajectory,
    horizon: f64,
    grid_dt: f64,
    averaged: &AveragedDrift,
) -> Result<f64> {
    let m = grid_len(horizon, grid_dt)?;
    let (noise, drift) = system.coefficients();
    let mut x = system.xi;
    let mut n = 0usize;
    let mut acc = 0.0;
    let mut sup: f64 = 0.0;
    for k in 1..=m {
        let target = system.step_index(k as f64 * grid_dt);
        while n < target {
            let y = traj.next_point()?;
            acc += system.f.eval(x, y, 0.0) - averaged.eval(x);
            x = system.step_with(x, y, noise, drift).value;
            n += 1;
            if !x.is_finite() {
                return Err(Error::NonFinite { value: x, step: n });
            }
        }
        sup = sup.max((drift * acc).abs());
    }
    Ok(sup)
}
