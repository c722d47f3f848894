//! Deterministic parallel Monte Carlo over realizations.
//!
//! Realization `i` draws all its randomness from `rng::stream(master_seed, i)`.
//! Work is split into fixed index chunks whose partial statistics are merged in
//! index order, so results do not depend on the number of workers.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fast_map::{FastMap, DEFAULT_BURN_IN};
use crate::rng::{stream, StreamRng};
use crate::sde::{cir_exact_sample, CirParams, Integrator, SdeSpec};
use crate::slow::{self, Interpolation, RescaledPath, SlowSystem};
use crate::stats::{MomentAccumulator, MomentPoint};

const CHUNK: usize = 256;

/// How the fast variable's initial condition is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FastInitial {
    /// The same `eta` for every realization.
    Fixed { eta: f64 },
    /// Uniform on the attractor, then `burn_in` iterates discarded.
    Uniform { burn_in: usize },
}

impl Default for FastInitial {
    fn default() -> Self {
        FastInitial::Uniform {
            burn_in: DEFAULT_BURN_IN,
        }
    }
}

#[derive(Debug, Clone)]
pub enum Model {
    FastSlow {
        system: SlowSystem,
        map: FastMap,
        initial: FastInitial,
    },
    /// Integrated with step `dt`; `grid_dt` must be a multiple of it.
    Sde { spec: SdeSpec, dt: f64 },
    /// Exact transitions of the CIR law between grid times.
    Cir { params: CirParams },
}

impl Model {
    pub fn label(&self) -> String {
        match self {
            Model::FastSlow { system, .. } => format!("map eps={}", system.epsilon),
            Model::Sde { spec, .. } => {
                format!("sde interpretation={}", spec.interpretation.label())
            }
            Model::Cir { .. } => "cir exact".to_string(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EnsembleConfig {
    pub model: Model,
    pub realizations: usize,
    pub master_seed: u64,
    /// Thread count; has no effect on results.
    pub workers: usize,
    pub horizon: f64,
    pub grid_dt: f64,
    /// Times at which `mean |x|` is accumulated.
    pub moment_times: Vec<f64>,
    /// Times at which every realization's value is kept.
    pub sample_times: Vec<f64>,
    pub keep_paths: bool,
}

impl EnsembleConfig {
    pub fn new(
        model: Model,
        realizations: usize,
        master_seed: u64,
        horizon: f64,
        grid_dt: f64,
    ) -> Self {
        Self {
            model,
            realizations,
            master_seed,
            workers: 1,
            horizon,
            grid_dt,
            moment_times: Vec::new(),
            sample_times: Vec::new(),
            keep_paths: false,
        }
    }
}

/// One realization's path and its square-root clamp count.
#[derive(Debug, Clone, PartialEq)]
pub struct Realization {
    pub path: RescaledPath,
    pub clamps: u64,
}

/// Simulates realization `index` in isolation.
pub fn realize(cfg: &EnsembleConfig, index: u64) -> Result<Realization> {
    let mut rng = stream(cfg.master_seed, index);
    realize_with(&cfg.model, cfg.horizon, cfg.grid_dt, &mut rng)
}

fn realize_with(
    model: &Model,
    horizon: f64,
    grid_dt: f64,
    rng: &mut StreamRng,
) -> Result<Realization> {
    match model {
        Model::FastSlow {
            system,
            map,
            initial,
        } => {
            let traj = match *initial {
                FastInitial::Fixed { eta } => map.trajectory(eta)?,
                FastInitial::Uniform { burn_in } => map.sample_invariant(rng, burn_in)?,
            };
            let e = slow::evolve_from(system, traj, horizon, grid_dt)?;
            Ok(Realization {
                path: e.path,
                clamps: e.clamps,
            })
        }
        Model::Sde { spec, dt } => {
            // Integrator construction is cheap for analytic transforms.
            let path = Integrator::new(spec.clone())?.path(horizon, *dt, grid_dt, rng)?;
            Ok(Realization {
                path: path.x,
                clamps: 0,
            })
        }
        Model::Cir { params } => {
            let m = slow::grid_len(horizon, grid_dt)?;
            let mut values = Vec::with_capacity(m + 1);
            let mut x = params.xi;
            values.push(x);
            for _ in 0..m {
                let p = CirParams { xi: x, ..*params };
                x = cir_exact_sample(&p, grid_dt, rng);
                values.push(x);
            }
            Ok(Realization {
                path: RescaledPath {
                    dt: grid_dt,
                    values,
                    epsilon: None,
                    interpolation: Interpolation::Linear,
                },
                clamps: 0,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub index: u64,
    pub error: Error,
}

#[derive(Debug, Clone)]
pub struct PathEnsemble {
    pub label: String,
    pub realizations: usize,
    /// Terminal values of successful realizations, in index order.
    pub terminal: Vec<f64>,
    /// Marginal samples at each of `sample_times`, in index order.
    pub samples: Vec<(f64, Vec<f64>)>,
    pub moments: Vec<(f64, MomentAccumulator)>,
    pub clamps: u64,
    pub clamped_realizations: u64,
    pub failures: Vec<Failure>,
    pub paths: Option<Vec<(u64, RescaledPath)>>,
}

impl PathEnsemble {
    pub fn moment_curve(&self) -> Vec<MomentPoint> {
        self.moments
            .iter()
            .map(|(t, a)| MomentPoint {
                t: *t,
                mean_abs: a.mean_abs(),
                se: a.se_abs(),
            })
            .collect()
    }

    /// Fraction of realizations with at least one clamp.
    pub fn samples_at(&self, t: f64) -> Option<&[f64]> {
        self.samples
            .iter()
            .find(|(s, _)| (s - t).abs() <= 1e-12 * (1.0 + t.abs()))
            .map(|(_, v)| v.as_slice())
    }

    pub fn clamp_fraction(&self) -> f64 {
        self.clamped_realizations as f64 / self.realizations.max(1) as f64
    }
}

#[derive(Default)]
struct Partial {
    terminal: Vec<f64>,
    samples: Vec<Vec<f64>>,
    moments: Vec<MomentAccumulator>,
    clamps: u64,
    clamped: u64,
    failures: Vec<Failure>,
    paths: Vec<(u64, RescaledPath)>,
}

/// Runs `job` on a pool of `workers` threads.
pub fn with_workers<T: Send>(workers: usize, job: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    Ok(pool.install(job))
}

/// Evaluates `f(i, stream(master_seed, i))` for `i < n`, in index order.
pub fn map_indexed<T, F>(n: usize, master_seed: u64, workers: usize, f: F) -> Result<Vec<Result<T>>>
where
    T: Send,
    F: Fn(u64, &mut StreamRng) -> Result<T> + Sync + Send,
{
    with_workers(workers, || {
        (0..n)
            .into_par_iter()
            .with_min_len(CHUNK)
            .map(|i| f(i as u64, &mut stream(master_seed, i as u64)))
            .collect()
    })
}

/// Fails if more than 1% of `total` realizations errored.
pub fn check_failures(failed: usize, total: usize) -> Result<()> {
    if failed * 100 > total {
        return Err(Error::TooManyFailures { failed, total });
    }
    Ok(())
}

pub fn run_ensemble(cfg: &EnsembleConfig) -> Result<PathEnsemble> {
    if cfg.realizations == 0 {
        return Err(Error::InvalidParameter(
            "realizations must be positive".into(),
        ));
    }
    slow::grid_len(cfg.horizon, cfg.grid_dt)?;
    if let Some(t) = cfg
        .moment_times
        .iter()
        .chain(&cfg.sample_times)
        .find(|&&t| !(0.0..=cfg.horizon * (1.0 + 1e-12)).contains(&t))
    {
        return Err(Error::InvalidParameter(format!(
            "moment time {t} outside [0, {}]",
            cfg.horizon
        )));
    }
    // Surface configuration errors once instead of per realization.
    if let Model::Sde { spec, dt } = &cfg.model {
        Integrator::new(spec.clone())?;
        crate::sde::step_plan(cfg.horizon, *dt, cfg.grid_dt)?;
    }
    let n = cfg.realizations;
    let chunks = n.div_ceil(CHUNK);
    let partials: Vec<Partial> = with_workers(cfg.workers, || {
        (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut p = Partial {
                    moments: vec![MomentAccumulator::default(); cfg.moment_times.len()],
                    samples: vec![Vec::new(); cfg.sample_times.len()],
                    ..Partial::default()
                };
                for i in (c * CHUNK) as u64..((c + 1) * CHUNK).min(n) as u64 {
                    match realize(cfg, i) {
                        Ok(r) => {
                            p.terminal.push(r.path.terminal());
                            for (v, &t) in p.samples.iter_mut().zip(&cfg.sample_times) {
                                v.push(r.path.value_at(t));
                            }
                            for (acc, &t) in p.moments.iter_mut().zip(&cfg.moment_times) {
                                acc.push(r.path.value_at(t));
                            }
                            p.clamps += r.clamps;
                            p.clamped += (r.clamps > 0) as u64;
                            if cfg.keep_paths {
                                p.paths.push((i, r.path));
                            }
                        }
                        Err(error) => p.failures.push(Failure { index: i, error }),
                    }
                }
                p
            })
            .collect()
    })?;
    let mut out = PathEnsemble {
        label: cfg.model.label(),
        realizations: n,
        terminal: Vec::with_capacity(n),
        samples: cfg
            .sample_times
            .iter()
            .map(|&t| (t, Vec::with_capacity(n)))
            .collect(),
        moments: cfg
            .moment_times
            .iter()
            .map(|&t| (t, MomentAccumulator::default()))
            .collect(),
        clamps: 0,
        clamped_realizations: 0,
        failures: Vec::new(),
        paths: cfg.keep_paths.then(Vec::new),
    };
    for p in partials {
        out.terminal.extend(p.terminal);
        for ((_, v), part) in out.samples.iter_mut().zip(p.samples) {
            v.extend(part);
        }
        for ((_, acc), part) in out.moments.iter_mut().zip(&p.moments) {
            acc.merge(part);
        }
        out.clamps += p.clamps;
        out.clamped_realizations += p.clamped;
        out.failures.extend(p.failures);
        if let Some(paths) = out.paths.as_mut() {
            paths.extend(p.paths);
        }
    }
    check_failures(out.failures.len(), n)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::func::{real_fn, Multiplier, Observable, SlowDrift};
    use crate::sde::{cir_mean, DiscreteConstants, Interpretation};
    use crate::slow::NoiseScaling;

    fn map_cfg(realizations: usize) -> EnsembleConfig {
        let model = Model::FastSlow {
            system: SlowSystem::cir_example(0.4).unwrap(),
            map: FastMap::modified_pomeau_manneville(0.1).unwrap(),
            initial: FastInitial::Uniform { burn_in: 100 },
        };
        EnsembleConfig::new(model, realizations, 42, 2.0, 0.16)
    }

    #[test]
    fn singleton_reproduces_evolve() {
        let cfg = map_cfg(1);
        let e = run_ensemble(&EnsembleConfig {
            keep_paths: true,
            ..cfg.clone()
        })
        .unwrap();
        let Model::FastSlow { system, map, .. } = &cfg.model else {
            unreachable!()
        };
        let mut rng = stream(42, 0);
        let traj = map.sample_invariant(&mut rng, 100).unwrap();
        let direct = slow::evolve_from(system, traj, 2.0, 0.16).unwrap();
        assert_eq!(e.paths.unwrap()[0].1, direct.path);
        assert_eq!(e.terminal, vec![direct.path.terminal()]);
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let mut cfg = map_cfg(1000);
        cfg.moment_times = vec![0.0, 1.0, 2.0];
        cfg.sample_times = vec![1.0];
        let a = run_ensemble(&cfg).unwrap();
        cfg.workers = 8;
        let b = run_ensemble(&cfg).unwrap();
        assert_eq!(a.terminal, b.terminal);
        assert_eq!(a.samples, b.samples);
        assert_eq!(a.samples_at(1.0).unwrap().len(), 1000);
        assert_eq!(a.moments, b.moments);
        assert_eq!(a.clamps, b.clamps);
    }

    #[test]
    fn realization_in_isolation_matches_ensemble() {
        let cfg = EnsembleConfig {
            keep_paths: true,
            ..map_cfg(600)
        };
        let e = run_ensemble(&cfg).unwrap();
        let paths = e.paths.unwrap();
        assert_eq!(paths[517].1, realize(&cfg, 517).unwrap().path);
    }

    #[test]
    fn deterministic_ensemble_moment_curve() {
        let sys = SlowSystem::new(
            0.1,
            1.0,
            Observable::Constant { value: 0.0 },
            Multiplier::unit(),
            SlowDrift::Constant { value: -0.5 },
            NoiseScaling::Diffusive,
        )
        .unwrap();
        let model = Model::FastSlow {
            system: sys.clone(),
            map: FastMap::doubling(),
            initial: FastInitial::default(),
        };
        let mut cfg = EnsembleConfig::new(model, 50, 1, 4.0, 0.01);
        cfg.moment_times = vec![0.0, 1.0, 4.0];
        let e = run_ensemble(&cfg).unwrap();
        let single = slow::evolve(&sys, &FastMap::doubling(), 0.3, 4.0, 0.01)
            .unwrap()
            .path;
        for (m, t) in e.moment_curve().iter().zip([0.0, 1.0, 4.0]) {
            assert!((m.mean_abs - single.value_at(t).abs()).abs() < 1e-12);
        }
    }

    #[test]
    fn cir_exact_moment_curve_matches_mean() {
        let p = CirParams::from_constants(DiscreteConstants::MODIFIED_PM, 1.0).unwrap();
        let mut cfg = EnsembleConfig::new(Model::Cir { params: p }, 20_000, 3, 15.0, 1.0);
        cfg.moment_times = (0..=15).map(f64::from).collect();
        let e = run_ensemble(&cfg).unwrap();
        for m in e.moment_curve().iter().skip(1) {
            assert!((m.mean_abs - cir_mean(&p, m.t)).abs() < 3.0 * m.se, "{m:?}");
        }
    }

    #[test]
    fn failures_are_recorded_and_thresholded() {
        // dX = X^2 dt from 1 blows up at t = 1
        let spec = SdeSpec::new(
            real_fn(|x| x * x),
            Multiplier::unit(),
            0.0,
            Interpretation::Ito,
            1.0,
        );
        let cfg = EnsembleConfig::new(Model::Sde { spec, dt: 0.01 }, 10, 0, 2.0, 0.01);
        match run_ensemble(&cfg) {
            Err(Error::TooManyFailures {
                failed: 10,
                total: 10,
            }) => {}
            other => panic!("{other:?}"),
        }
        assert!(check_failures(1, 100).is_ok());
        assert!(check_failures(2, 100).is_err());
    }

    #[test]
    fn map_indexed_is_ordered() {
        let v = map_indexed(1000, 5, 4, |i, _| Ok(i)).unwrap();
        assert!(v
            .into_iter()
            .enumerate()
            .all(|(k, r)| r.unwrap() == k as u64));
    }
}
