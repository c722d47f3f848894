use std::fs;
use std::path::PathBuf;

use serde::Serialize;
use serde_json::json;

use super::{CliError, Run, EXIT_OK, EXIT_QUALITY};
use crate::config::{ConfigError, RunConfig, SlowSection};
use crate::covariance::{
    green_kubo, moment_estimator, CovarianceEstimate, ObservableSpec, Quality,
};
use crate::ensemble::{
    map_indexed, run_ensemble, with_workers, EnsembleConfig, Model, PathEnsemble,
};
use crate::fast_map::{Orbit, DEFAULT_BURN_IN};
use crate::func::{AffineDrift, Multiplier, SlowDrift};
use crate::io::{self, TailRow};
use crate::levy::{check_superdiffusive, excursion_sizes, StableLaw};
use crate::rng::{hash128, stream};
use crate::sde::{cir_cdf, cir_mean, CirParams, DiscreteConstants, Interpretation, Noise, SdeSpec};
use crate::slow::{NoiseScaling, SlowSystem};
use crate::stats::{hill, ks_one_sample, ks_two_sample, tail_slope, Histogram, MomentPoint};

/// What a command produced, and whether any statistical check raised a flag.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub quality_flags: Vec<String>,
    pub warnings: Vec<String>,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.quality_flags.is_empty() {
            EXIT_OK
        } else {
            EXIT_QUALITY
        }
    }

    fn flag(&mut self, msg: String) {
        self.warnings.push(msg.clone());
        self.quality_flags.push(msg);
    }
}

/// Master seed for auxiliary randomness, disjoint from the realization streams.
fn aux_seed(seed: u64, k: u64) -> u64 {
    hash128(seed, u64::MAX - k).0
}

fn prepare_out(run: &Run) -> Result<(), CliError> {
    fs::create_dir_all(&run.out).map_err(|e| CliError::Io(e.into()))
}

fn invalid(msg: impl Into<String>) -> CliError {
    ConfigError::Invalid(msg.into()).into()
}

fn reference_orbit(cfg: &RunConfig) -> Result<Orbit, CliError> {
    let mut rng = stream(aux_seed(cfg.seed, 0), 0);
    let eta = cfg.map.sample_initial(&mut rng);
    Ok(cfg
        .map
        .orbit(eta, cfg.sigma.orbit_length, cfg.sigma.burn_in)?)
}

#[derive(Debug, Clone, Serialize)]
struct SourceSummary {
    source: String,
    realizations: usize,
    failures: usize,
    clamp_fraction: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    first_failure: Option<String>,
}

impl SourceSummary {
    fn of(e: &PathEnsemble) -> Self {
        Self {
            source: e.label.clone(),
            realizations: e.realizations,
            failures: e.failures.len(),
            clamp_fraction: e.clamp_fraction(),
            first_failure: e
                .failures
                .first()
                .map(|f| format!("realization {}: {}", f.index, f.error)),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
struct KsRow {
    a: String,
    b: String,
    ks: f64,
}

/// Limit constants and the averaged coupling `F`.
#[derive(Debug, Clone, Serialize)]
struct Limit {
    constants: DiscreteConstants,
    y_moment: f64,
    big_f: AffineDrift,
    #[serde(skip_serializing_if = "Option::is_none")]
    estimate: Option<CovarianceEstimate>,
}

fn resolve_limit(
    cfg: &RunConfig,
    slow: &SlowSection,
    outcome: &mut Outcome,
) -> Result<Limit, CliError> {
    let power = match slow.f {
        SlowDrift::Product { y_power, .. } => Some(y_power),
        _ => None,
    };
    let sde = &cfg.sde;
    let need_orbit = sde.sigma2.is_none()
        || sde.f0_second_moment.is_none()
        || (power.is_some() && sde.y_moment.is_none());
    let (orbit, estimate) = if need_orbit {
        let orbit = reference_orbit(cfg)?;
        let obs = ObservableSpec {
            observable: cfg.observable.clone(),
            centered: cfg.sigma.centered,
        };
        let mut gk = green_kubo(&orbit, &obs, cfg.sigma.lag_cutoff)?;
        gk.seed = Some(cfg.seed);
        if gk.quality != Quality::Ok && sde.sigma2.is_none() {
            outcome.flag(format!("Green-Kubo estimate flagged {:?}", gk.quality));
        }
        (Some(orbit), sde.sigma2.is_none().then_some(gk))
    } else {
        (None, None)
    };
    let sigma2 = sde
        .sigma2
        .unwrap_or_else(|| estimate.as_ref().map_or(0.0, |e| e.sigma2));
    let f0 = &cfg.observable;
    let m2 = sde.f0_second_moment.unwrap_or_else(|| {
        orbit
            .as_ref()
            .map_or(0.0, |o| o.mean_of(|y| f0.eval(y).powi(2)))
    });
    let y_moment = match power {
        Some(k) => sde
            .y_moment
            .unwrap_or_else(|| orbit.as_ref().map_or(0.0, |o| o.mean_of(|y| y.powi(k)))),
        None => 1.0,
    };
    let big_f = slow
        .f
        .product_average(y_moment)
        .ok_or_else(|| invalid("the slow coupling has no closed-form average"))?;
    Ok(Limit {
        constants: DiscreteConstants {
            sigma2,
            f0_second_moment: m2,
        },
        y_moment,
        big_f,
        estimate,
    })
}

fn domain_hint(h: &Multiplier) -> (f64, f64) {
    if h.needs_nonnegative() {
        (0.0, f64::INFINITY)
    } else {
        (f64::NEG_INFINITY, f64::INFINITY)
    }
}

fn sde_spec(slow: &SlowSection, limit: &Limit, interpretation: Interpretation) -> SdeSpec {
    SdeSpec {
        domain_hint: domain_hint(&slow.h),
        ..SdeSpec::discrete_limit(
            limit.big_f.as_fn(),
            slow.h.clone(),
            limit.constants,
            slow.xi,
            interpretation,
        )
    }
}

fn system(cfg: &RunConfig, slow: &SlowSection, eps: f64) -> Result<SlowSystem, CliError> {
    Ok(SlowSystem::new(
        eps,
        slow.xi,
        cfg.observable.clone(),
        slow.h.clone(),
        slow.f.clone(),
        slow.scaling,
    )?)
}

fn ensemble_cfg(run: &Run, model: Model, realizations: usize) -> EnsembleConfig {
    let e = &run.config.ensemble;
    EnsembleConfig {
        workers: run.workers,
        keep_paths: e.keep_paths,
        ..EnsembleConfig::new(model, realizations, run.config.seed, e.horizon, e.grid_dt)
    }
}

fn map_model(cfg: &RunConfig, system: SlowSystem) -> Model {
    Model::FastSlow {
        system,
        map: cfg.map,
        initial: cfg.ensemble.initial,
    }
}

fn write_paths(
    run: &Run,
    ensembles: &[PathEnsemble],
    outcome: &mut Outcome,
) -> Result<(), CliError> {
    for (k, e) in ensembles.iter().enumerate() {
        if let Some(paths) = &e.paths {
            let p = run.out.join(format!("paths-{k}.csv"));
            io::write_paths(&p, paths)?;
            outcome.files.push(p);
        }
    }
    Ok(())
}

fn finish_json(run: &Run, value: serde_json::Value, outcome: &mut Outcome) -> Result<(), CliError> {
    let p = run.out.join("run.json");
    io::write_json(&p, &value)?;
    outcome.files.push(p);
    Ok(())
}

fn density_rows(
    samples: &[(String, Vec<f64>)],
    bins: usize,
    common: bool,
) -> Result<Vec<(String, Histogram)>, CliError> {
    let range = common.then(|| {
        let (lo, hi) = samples
            .iter()
            .flat_map(|(_, v)| v.iter())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| {
                (a.min(x), b.max(x))
            });
        (lo.min(0.0), 1.05 * hi)
    });
    samples
        .iter()
        .map(|(s, v)| Ok((s.clone(), Histogram::build(v, bins, range)?)))
        .collect()
}

/// Green-Kubo and block-moment estimates of the limit variance.
pub fn cmd_sigma(run: &Run) -> Result<Outcome, CliError> {
    let cfg = &run.config;
    let s = &cfg.sigma;
    let mut outcome = Outcome::default();
    let obs = ObservableSpec {
        observable: cfg.observable.clone(),
        centered: s.centered,
    };
    let orbit = reference_orbit(cfg)?;
    let mut gk = green_kubo(&orbit, &obs, s.lag_cutoff)?;
    gk.seed = Some(cfg.seed);
    let moment = with_workers(run.workers, || {
        moment_estimator(
            &cfg.map,
            &obs,
            s.block_length,
            s.blocks,
            s.burn_in,
            aux_seed(cfg.seed, 1),
        )
    })??;
    for e in [&gk, &moment] {
        if e.quality != Quality::Ok {
            outcome.flag(format!("{:?} estimate flagged {:?}", e.method, e.quality));
        }
    }
    let report = json!({
        "config": cfg,
        "green_kubo": gk,
        "moment": moment,
        "z_score": gk.z_score(&moment),
    });
    println!(
        "{}",
        serde_json::to_string_pretty(&report).expect("serializable")
    );
    prepare_out(run)?;
    let p = run.out.join("sigma.json");
    io::write_json(&p, &report)?;
    outcome.files.push(p);
    Ok(outcome)
}

/// Terminal densities and KS distances across map ensembles, SDE limits and the CIR law.
pub fn cmd_compare(run: &Run) -> Result<Outcome, CliError> {
    let cfg = &run.config;
    let slow = cfg.slow()?;
    if matches!(slow.scaling, NoiseScaling::Superdiffusive { .. }) {
        return Err(invalid(
            "compare needs diffusive scaling; use the levy command",
        ));
    }
    prepare_out(run)?;
    let mut outcome = Outcome::default();
    let limit = resolve_limit(cfg, slow, &mut outcome)?;
    let mut ensembles = Vec::new();
    for &eps in &slow.epsilons {
        let model = map_model(cfg, system(cfg, slow, eps)?);
        ensembles.push(run_ensemble(&ensemble_cfg(run, model, cfg.realizations))?);
    }
    let sde_n = cfg.sde.realizations.unwrap_or(cfg.realizations);
    for &interp in &cfg.sde.interpretations {
        let model = Model::Sde {
            spec: sde_spec(slow, &limit, interp),
            dt: cfg.sde.dt,
        };
        ensembles.push(run_ensemble(&ensemble_cfg(run, model, sde_n))?);
    }
    let cir = cir_reference(cfg, slow, &limit, &mut outcome);
    if let Some(p) = cir {
        let mut ec = ensemble_cfg(
            run,
            Model::Cir { params: p },
            cfg.cir.realizations.unwrap_or(cfg.realizations),
        );
        ec.grid_dt = ec.horizon;
        ec.keep_paths = false;
        ensembles.push(run_ensemble(&ec)?);
    }
    let samples: Vec<(String, Vec<f64>)> = ensembles
        .iter()
        .map(|e| (e.label.clone(), e.terminal.clone()))
        .collect();
    let mut ks = Vec::new();
    let horizon = cfg.ensemble.horizon;
    if let Some(p) = cir {
        for (s, v) in &samples {
            ks.push(KsRow {
                a: s.clone(),
                b: "cir law".into(),
                ks: ks_one_sample(v, |x| cir_cdf(&p, horizon, x))?,
            });
        }
    }
    for i in 0..samples.len() {
        for j in i + 1..samples.len() {
            ks.push(KsRow {
                a: samples[i].0.clone(),
                b: samples[j].0.clone(),
                ks: ks_two_sample(&samples[i].1, &samples[j].1)?,
            });
        }
    }
    for r in &ks {
        println!("ks  {:<32} {:<32} {:.6}", r.a, r.b, r.ks);
    }
    let p = run.out.join("density.csv");
    io::write_density(&p, &density_rows(&samples, cfg.ensemble.bins, true)?)?;
    outcome.files.push(p);
    write_paths(run, &ensembles, &mut outcome)?;
    let sources: Vec<SourceSummary> = ensembles.iter().map(SourceSummary::of).collect();
    finish_json(
        run,
        json!({
            "config": cfg,
            "seed": cfg.seed,
            "limit": limit,
            "cir": cir,
            "sources": sources,
            "ks": ks,
            "warnings": outcome.warnings,
        }),
        &mut outcome,
    )?;
    Ok(outcome)
}

fn cir_reference(
    cfg: &RunConfig,
    slow: &SlowSection,
    limit: &Limit,
    outcome: &mut Outcome,
) -> Option<CirParams> {
    if !cfg.cir.enabled {
        return None;
    }
    let p = CirParams::from_limit(limit.big_f, &slow.h, limit.constants, slow.xi);
    if p.is_none() {
        outcome
            .warnings
            .push("the limit is not a CIR process; skipping the exact reference".into());
    }
    p
}

fn is_multiple(t: f64, dt: f64) -> bool {
    let k = (t / dt).round();
    (k * dt - t).abs() <= 1e-9 * dt.max(t.abs())
}

/// `E|x(t)|` curves for map ensembles, SDE limits, the CIR sampler and the CIR mean.
pub fn cmd_moments(run: &Run) -> Result<Outcome, CliError> {
    let cfg = &run.config;
    let slow = cfg.slow()?;
    let horizon = cfg.ensemble.horizon;
    let times: Vec<f64> = if cfg.ensemble.moment_times.is_empty() {
        (0..=horizon.floor() as usize).map(|t| t as f64).collect()
    } else {
        cfg.ensemble.moment_times.clone()
    };
    prepare_out(run)?;
    let mut outcome = Outcome::default();
    let limit = resolve_limit(cfg, slow, &mut outcome)?;
    let mut ensembles = Vec::new();
    let with_times = |mut ec: EnsembleConfig| {
        ec.moment_times = times.clone();
        ec
    };
    for &eps in &slow.epsilons {
        let model = map_model(cfg, system(cfg, slow, eps)?);
        ensembles.push(run_ensemble(&with_times(ensemble_cfg(
            run,
            model,
            cfg.realizations,
        )))?);
    }
    let sde_n = cfg.sde.realizations.unwrap_or(cfg.realizations);
    for &interp in &cfg.sde.interpretations {
        let model = Model::Sde {
            spec: sde_spec(slow, &limit, interp),
            dt: cfg.sde.dt,
        };
        ensembles.push(run_ensemble(&with_times(ensemble_cfg(run, model, sde_n)))?);
    }
    let cir = cir_reference(cfg, slow, &limit, &mut outcome);
    if let Some(p) = cir {
        let dt = cfg.cir.grid_dt;
        if !is_multiple(horizon, dt) {
            return Err(invalid(format!(
                "ensemble.horizon = {horizon} is not a multiple of cir.grid_dt = {dt}"
            )));
        }
        if let Some(t) = times.iter().find(|&&t| !is_multiple(t, dt)) {
            return Err(invalid(format!(
                "moment time {t} is not a multiple of cir.grid_dt = {dt}"
            )));
        }
        let mut ec = with_times(ensemble_cfg(
            run,
            Model::Cir { params: p },
            cfg.cir.realizations.unwrap_or(cfg.realizations),
        ));
        ec.grid_dt = dt;
        ec.keep_paths = false;
        ensembles.push(run_ensemble(&ec)?);
    }
    let mut curves: Vec<(String, Vec<MomentPoint>)> = ensembles
        .iter()
        .map(|e| (e.label.clone(), e.moment_curve()))
        .collect();
    let mut deviations = Vec::new();
    if let Some(p) = cir {
        let exact: Vec<MomentPoint> = times
            .iter()
            .map(|&t| MomentPoint {
                t,
                mean_abs: cir_mean(&p, t),
                se: 0.0,
            })
            .collect();
        for (source, c) in &curves {
            let sup = c
                .iter()
                .zip(&exact)
                .map(|(a, b)| (a.mean_abs - b.mean_abs).abs())
                .fold(0.0, f64::max);
            println!("sup |E|x| - cir mean|  {source:<32} {sup:.6}");
            deviations.push(json!({ "source": source, "sup_deviation": sup }));
        }
        curves.push(("cir mean".into(), exact));
    }
    let p = run.out.join("moments.csv");
    io::write_moments(&p, &curves)?;
    outcome.files.push(p);
    write_paths(run, &ensembles, &mut outcome)?;
    let second: Vec<_> = ensembles
        .iter()
        .map(|e| {
            json!({
                "source": e.label,
                "second_moment": e.moments.iter().map(|(t, a)| json!({ "t": t, "value": a.second_moment() })).collect::<Vec<_>>(),
            })
        })
        .collect();
    let sources: Vec<SourceSummary> = ensembles.iter().map(SourceSummary::of).collect();
    finish_json(
        run,
        json!({
            "config": cfg,
            "seed": cfg.seed,
            "limit": limit,
            "cir": cir,
            "sources": sources,
            "deviations": deviations,
            "second_moments": second,
            "warnings": outcome.warnings,
        }),
        &mut outcome,
    )?;
    Ok(outcome)
}

fn tail_row(
    source: &str,
    v: &[f64],
    window: [f64; 2],
    points: usize,
    outcome: &mut Outcome,
) -> Option<TailRow> {
    match tail_slope(v, window[0], window[1], points) {
        Ok(fit) => Some(TailRow::from_fit(source, &fit)),
        Err(e) => {
            outcome.flag(format!("tail fit for {source}: {e}"));
            None
        }
    }
}

const STABLE_CHUNK: usize = 10_000;

/// Superdiffusive map ensembles, Marcus SDE ensembles and tail-exponent fits.
pub fn cmd_levy(run: &Run) -> Result<Outcome, CliError> {
    let cfg = &run.config;
    let slow = cfg.slow()?;
    let levy = cfg.levy()?;
    let NoiseScaling::Superdiffusive { gamma } = slow.scaling else {
        return Err(invalid("levy needs superdiffusive scaling"));
    };
    if levy.noise.gamma != gamma {
        return Err(invalid(format!(
            "noise gamma {} differs from the slow system's gamma {gamma}",
            levy.noise.gamma
        )));
    }
    let law = StableLaw::try_from(levy.noise)?;
    let mut systems = Vec::new();
    for &eps in &slow.epsilons {
        let s = system(cfg, slow, eps)?;
        check_superdiffusive(&s, &cfg.map)?;
        systems.push(s);
    }
    prepare_out(run)?;
    let mut outcome = Outcome::default();
    let mut ensembles = Vec::new();
    let mut tails = Vec::new();
    for s in systems {
        let e = run_ensemble(&ensemble_cfg(run, map_model(cfg, s), cfg.realizations))?;
        tails.extend(tail_row(
            &e.label,
            &e.terminal,
            levy.path_tail,
            levy.tail_points,
            &mut outcome,
        ));
        ensembles.push(e);
    }
    if levy.marcus {
        let big_f = match slow.f {
            SlowDrift::Zero => AffineDrift::new(0.0, 0.0),
            _ => resolve_limit(cfg, slow, &mut outcome)?.big_f,
        };
        let spec = SdeSpec {
            domain_hint: domain_hint(&slow.h),
            ..SdeSpec::new(
                big_f.as_fn(),
                slow.h.clone(),
                1.0,
                Interpretation::MarcusViaTransform,
                slow.xi,
            )
            .with_noise(Noise::Stable(law))
        };
        let model = Model::Sde { spec, dt: levy.dt };
        let e = run_ensemble(&ensemble_cfg(run, model, cfg.realizations))?;
        tails.extend(tail_row(
            "marcus",
            &e.terminal,
            levy.stable_tail,
            levy.tail_points,
            &mut outcome,
        ));
        ensembles.push(e);
    }
    if levy.stable_samples > 0 {
        let n = levy.stable_samples;
        let chunks = map_indexed(
            n.div_ceil(STABLE_CHUNK),
            aux_seed(cfg.seed, 2),
            run.workers,
            |i, rng| {
                let len = STABLE_CHUNK.min(n - i as usize * STABLE_CHUNK);
                Ok((0..len).map(|_| law.sample(rng)).collect::<Vec<f64>>())
            },
        )?;
        let v: Vec<f64> = chunks
            .into_iter()
            .flat_map(|c| c.expect("infallible"))
            .collect();
        tails.extend(tail_row(
            "stable sampler",
            &v,
            levy.stable_tail,
            levy.tail_points,
            &mut outcome,
        ));
    }
    if levy.excursion_length > 0 {
        let mut rng = stream(aux_seed(cfg.seed, 3), 0);
        let burn_in = match cfg.ensemble.initial {
            crate::ensemble::FastInitial::Uniform { burn_in } => burn_in,
            _ => DEFAULT_BURN_IN,
        };
        let mut traj = cfg.map.sample_invariant(&mut rng, burn_in)?;
        let sizes = excursion_sizes(&mut traj, &cfg.observable, levy.excursion_length)?;
        tails.extend(tail_row(
            "excursions",
            &sizes,
            levy.excursion_tail,
            levy.tail_points,
            &mut outcome,
        ));
        let k = (sizes.len() / 100).max(10);
        match hill(&sizes, k) {
            Ok(a) => {
                let mut top = sizes.clone();
                top.sort_by(f64::total_cmp);
                tails.push(TailRow {
                    source: "excursions".into(),
                    method: "hill".into(),
                    lo: top[top.len() - k - 1],
                    hi: top[top.len() - 1],
                    exponent: a,
                    points: k,
                    samples: sizes.len(),
                });
            }
            Err(e) => outcome.flag(format!("Hill estimate for excursions: {e}")),
        }
    }
    for r in &tails {
        println!(
            "tail  {:<20} {:<7} [{}, {}]  exponent {:.4}",
            r.source, r.method, r.lo, r.hi, r.exponent
        );
    }
    let samples: Vec<(String, Vec<f64>)> = ensembles
        .iter()
        .map(|e| (e.label.clone(), e.terminal.clone()))
        .collect();
    let p = run.out.join("density.csv");
    io::write_density(&p, &density_rows(&samples, cfg.ensemble.bins, false)?)?;
    outcome.files.push(p);
    let p = run.out.join("tail.csv");
    io::write_tail(&p, &tails)?;
    outcome.files.push(p);
    write_paths(run, &ensembles, &mut outcome)?;
    let sources: Vec<SourceSummary> = ensembles.iter().map(SourceSummary::of).collect();
    finish_json(
        run,
        json!({
            "config": cfg,
            "seed": cfg.seed,
            "expected_exponent": 1.0 / gamma,
            "sources": sources,
            "tails": tails,
            "warnings": outcome.warnings,
        }),
        &mut outcome,
    )?;
    Ok(outcome)
}
