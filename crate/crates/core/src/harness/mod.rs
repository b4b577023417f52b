//! Monte-Carlo experiments: trial fan-out, aggregation, bound overlays,
//! calibration of the high-probability constant and file outputs.
//!
//! Every trial rebuilds the same problem instance from the configured seed
//! and differs from the others only in its drift and oracle streams, so
//! the initial distance and gap that enter the envelopes are exact.
//! Trials run on the current rayon pool and are merged in trial order.

use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::algorithms::{run, AlgorithmKind, TrialStreams};
use crate::problems::ProblemConstants;
use crate::schedules::{
    classify_regime, critical_step, decay_dist_exp, decay_dist_hp, decay_gap_exp, decay_gap_hp, RegimeReport,
    Schedule,
};
use crate::theory::{schedule_curve, BoundFamily, BoundParams};
use crate::{Error, Result};

mod aggregate;
mod calibrate;
mod config;
mod output;

pub use aggregate::{band, quantile_sorted, AggregateSeries, Band};
pub use calibrate::{calibrate_c, calibrate_paths, coverage, Calibration, CALIBRATION_MAX_C, CALIBRATION_MIN_C};
pub use config::{
    check_sweep_param, BoundConfig, ExperimentConfig, ProblemConfig, ScheduleConfig, SweepConfig, SWEEP_PARAMS,
};
pub use output::{format_float, meta_json, render_svg, series_csv, write_outputs, write_series_csv, write_sweep, SERIES_HEADER, SWEEP_HEADER};

/// Everything derived from the configuration and the problem instance
/// before any trial runs.
#[derive(Clone, Debug, Serialize)]
pub struct Resolved {
    pub constants: ProblemConstants,
    pub schedule: Schedule,
    pub horizon: usize,
    /// `‖x₀ − ref₀‖²`.
    pub initial_dist_sq: f64,
    /// Tracked-objective gap at `x₀`.
    pub initial_gap: f64,
    /// Regime report for the modulus and drift the step was tuned to.
    pub regime: Option<RegimeReport>,
    pub bound_dist_params: BoundParams,
    pub bound_gap_params: BoundParams,
}

/// Modulus and drift a step size is tuned to: `(μ̂, gap drift)` for the
/// averaged kinds, `(μ̄, drift)` otherwise.
pub fn tuning_constants(kind: AlgorithmKind, c: &ProblemConstants) -> (f64, f64) {
    let gamma = if kind.is_decision_dependent() { c.gamma } else { 0.0 };
    if kind.is_averaged() {
        (c.mu - 2.0 * gamma, c.gap_drift)
    } else {
        (c.mu - gamma, c.drift)
    }
}

pub fn resolve(config: &ExperimentConfig) -> Result<Resolved> {
    config.validate()?;
    let problem = config.problem.build(config.seed, config.history)?;
    let c = problem.constants();
    c.validate()?;
    let kind = config.algorithm;
    let gamma = if kind.is_decision_dependent() { c.gamma } else { 0.0 };
    let mu_bar = c.mu - gamma;
    let mu_hat = c.mu - 2.0 * gamma;

    let x0 = problem.initial_point();
    let reference = problem.reference(0)?;
    let initial_dist_sq = (&x0 - &reference.point).norm_squared();
    let initial_gap = problem.gap(0, &x0)?;

    let (tune_mu, tune_drift) = tuning_constants(kind, &c);
    let regime = classify_regime(tune_mu, c.l, c.sigma, tune_drift).ok();
    let delta = config.bound.delta;
    let schedule = match &config.schedule {
        ScheduleConfig::Constant { eta: Some(eta) } => Schedule::constant(*eta)?,
        ScheduleConfig::Constant { eta: None } => Schedule::constant(critical_step(tune_mu, c.l, c.sigma, tune_drift)?)?,
        ScheduleConfig::DecayDistExp { d } => {
            decay_dist_exp(mu_bar, c.l, c.sigma, c.drift, d.unwrap_or(initial_dist_sq))?
        }
        ScheduleConfig::DecayDistHp { d } => decay_dist_hp(mu_bar, c.l, c.sigma, c.drift, d.unwrap_or(initial_dist_sq))?,
        ScheduleConfig::DecayGapExp { d } => decay_gap_exp(mu_hat, c.l, c.sigma, c.gap_drift, d.unwrap_or(initial_gap))?,
        ScheduleConfig::DecayGapHp { d, delta: dl, c: cc } => decay_gap_hp(
            mu_hat,
            c.l,
            c.sigma,
            c.gap_drift,
            d.unwrap_or(initial_gap),
            dl.unwrap_or(delta),
            cc.unwrap_or(config.bound.c),
        )?,
    };
    let horizon = match (schedule.total_len(), config.horizon) {
        (None, Some(h)) => h,
        (None, None) => return Err(Error::Config("a constant schedule needs an explicit horizon".into())),
        (Some(total), None) => total,
        (Some(total), Some(h)) if h <= total => h,
        (Some(total), Some(h)) => {
            return Err(Error::Config(format!("horizon {h} exceeds the schedule length {total}")))
        }
    };

    let base = BoundParams {
        mu: c.mu,
        mu_eff: mu_bar,
        l: c.l,
        eta: schedule.epochs[0].eta,
        sigma: c.sigma,
        drift: c.drift,
        d0: initial_dist_sq,
        delta,
        c: config.bound.c,
        x0_dist_sq: initial_dist_sq,
    };
    Ok(Resolved {
        constants: c,
        horizon,
        initial_dist_sq,
        initial_gap,
        regime,
        bound_dist_params: base,
        bound_gap_params: BoundParams {
            mu_eff: mu_hat,
            drift: c.gap_drift,
            d0: initial_gap,
            ..base
        },
        schedule,
    })
}

/// Envelope along the resolved schedule, `NaN` where its parameters are
/// outside the family's domain.
pub fn overlay(family: BoundFamily, base: &BoundParams, schedule: &Schedule, horizon: usize) -> Result<Vec<f64>> {
    match schedule_curve(family, base, schedule, horizon) {
        Err(Error::InvalidParameter(_)) | Err(Error::OutOfRegime(_)) => Ok(vec![f64::NAN; horizon + 1]),
        other => other,
    }
}

/// Per-trial paths of `‖x_t − ref_t‖²` and of the gap.
#[derive(Clone, Debug)]
pub struct TrialPaths {
    pub dist: Vec<Vec<f64>>,
    pub gap: Vec<Vec<f64>>,
}

pub fn run_trials(config: &ExperimentConfig, resolved: &Resolved, trials: usize) -> Result<TrialPaths> {
    let results: Vec<Result<(Vec<f64>, Vec<f64>)>> = (0..trials)
        .into_par_iter()
        .map(|k| {
            let trial = || {
                let mut problem = config.problem.build(config.seed, config.history)?;
                let mut streams = TrialStreams::for_trial(config.seed, k as u64);
                let traj = run(
                    problem.as_mut(),
                    config.algorithm,
                    &resolved.schedule,
                    resolved.horizon,
                    &mut streams,
                )?;
                Ok((traj.dist_sq(), traj.gaps()))
            };
            trial().map_err(|e: Error| e.in_trial(k))
        })
        .collect();
    let mut paths = TrialPaths {
        dist: Vec::with_capacity(trials),
        gap: Vec::with_capacity(trials),
    };
    for r in results {
        let (d, g) = r?;
        paths.dist.push(d);
        paths.gap.push(g);
    }
    Ok(paths)
}

#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub resolved: Resolved,
    pub series: AggregateSeries,
}

pub fn aggregate(config: &ExperimentConfig, resolved: &Resolved, paths: &TrialPaths) -> Result<AggregateSeries> {
    let h = resolved.horizon;
    Ok(AggregateSeries {
        t: (0..=h).collect(),
        dist: band(&paths.dist, config.band_level)?,
        gap: band(&paths.gap, config.band_level)?,
        bound_dist: overlay(BoundFamily::DistExp, &resolved.bound_dist_params, &resolved.schedule, h)?,
        bound_gap: overlay(BoundFamily::GapExp, &resolved.bound_gap_params, &resolved.schedule, h)?,
        trials: paths.dist.len(),
        seed: config.seed,
        band_level: config.band_level,
    })
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    let resolved = resolve(config)?;
    let paths = run_trials(config, &resolved, config.trials)?;
    let series = aggregate(config, &resolved, &paths)?;
    Ok(ExperimentResult {
        config: config.clone(),
        resolved,
        series,
    })
}

/// One experiment per sweep value, in the order given.
pub fn run_sweep(config: &ExperimentConfig) -> Result<Vec<(f64, ExperimentResult)>> {
    let sweep = config
        .sweep
        .as_ref()
        .ok_or_else(|| Error::Config("configuration has no sweep block".into()))?;
    check_sweep_param(&sweep.param)?;
    sweep
        .values
        .iter()
        .map(|&v| Ok((v, run_experiment(&config.with_param(&sweep.param, v)?)?)))
        .collect()
}

/// Runs `f` on a pool of `threads` workers, or on the global pool when
/// `threads` is `None`.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Runs the experiment and writes its files into `dir`.
pub fn simulate_to(config: &ExperimentConfig, dir: &Path) -> Result<ExperimentResult> {
    let result = run_experiment(config)?;
    write_outputs(&result, dir)?;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{LeastSquaresParams, PerformativeParams};

    fn small_ls() -> ExperimentConfig {
        let mut c = ExperimentConfig::new(ProblemConfig::LeastSquares(LeastSquaresParams {
            d: 5,
            n: 8,
            ..Default::default()
        }));
        c.horizon = Some(20);
        c.trials = 12;
        c.seed = 3;
        c
    }

    #[test]
    fn single_trial_band() {
        let mut c = small_ls();
        c.trials = 1;
        let r = run_experiment(&c).unwrap();
        assert_eq!(r.series.dist.lo, r.series.dist.mean);
        assert_eq!(r.series.dist.hi, r.series.dist.mean);
        assert_eq!(r.series.len(), 21);
    }

    #[test]
    fn thread_count_does_not_matter() {
        let c = small_ls();
        let a = with_threads(Some(1), || run_experiment(&c)).unwrap().unwrap();
        let b = with_threads(Some(4), || run_experiment(&c)).unwrap().unwrap();
        assert_eq!(a.series, b.series);
    }

    #[test]
    fn initial_point_matches_instance() {
        let c = small_ls();
        let r = run_experiment(&c).unwrap();
        assert_eq!(r.series.dist.mean[0], r.resolved.initial_dist_sq);
        assert_eq!(r.series.dist.lo[0], r.resolved.initial_dist_sq);
        assert!(r.series.bound_dist[0] >= r.resolved.initial_dist_sq);
    }

    #[test]
    fn constant_needs_horizon() {
        let mut c = small_ls();
        c.horizon = None;
        assert!(matches!(resolve(&c), Err(Error::Config(_))));
    }

    #[test]
    fn decay_horizon_defaults_to_schedule() {
        let mut c = small_ls();
        c.horizon = None;
        c.schedule = ScheduleConfig::DecayDistExp { d: None };
        let r = resolve(&c).unwrap();
        assert_eq!(Some(r.horizon), r.schedule.total_len());
    }

    #[test]
    fn sweep_of_critical_step_matches_plain_run() {
        let mut c = small_ls();
        let r = resolve(&c).unwrap();
        let eta = r.schedule.epochs[0].eta;
        c.sweep = Some(SweepConfig {
            param: "eta".into(),
            values: vec![eta],
        });
        let sweep = run_sweep(&c).unwrap();
        let plain = run_experiment(&small_ls()).unwrap();
        assert_eq!(sweep[0].1.series, plain.series);
    }

    #[test]
    fn trial_errors_carry_index() {
        let mut c = ExperimentConfig::new(ProblemConfig::Performative(PerformativeParams::default()));
        c.horizon = Some(3);
        c.trials = 2;
        c.schedule = ScheduleConfig::Constant { eta: Some(0.1) };
        // time-only kind on a decision-dependent problem
        match run_experiment(&c) {
            Err(Error::InTrial { trial: 0, .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn averaged_kind_tunes_to_gap_constants() {
        let mut c = small_ls();
        c.problem = ProblemConfig::LeastSquares(LeastSquaresParams {
            d: 5,
            n: 8,
            mu: 0.5,
            l: 1.0,
            ..Default::default()
        });
        c.algorithm = AlgorithmKind::AveragedPsg;
        let r = resolve(&c).unwrap();
        let k = r.constants;
        let want = critical_step(k.mu, k.l, k.sigma, k.gap_drift).unwrap();
        assert_eq!(r.schedule.epochs[0].eta, want);
    }
}
