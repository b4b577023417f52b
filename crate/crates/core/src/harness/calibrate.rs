//! Empirical calibration of the absolute constant `c` in the
//! high-probability envelopes.

use serde::Serialize;

use super::{resolve, run_trials, ExperimentConfig, Resolved, TrialPaths};
use crate::theory::{schedule_curve, BoundFamily, BoundParams};
use crate::{Error, Result};

pub const CALIBRATION_MIN_C: f64 = 0.1;
pub const CALIBRATION_MAX_C: f64 = 64.0;
const MIN_TRIALS: usize = 200;
const TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Calibration {
    pub family: BoundFamily,
    pub c: f64,
    /// Fraction of trials inside the envelope at every `t` for this `c`.
    pub coverage: f64,
    pub target: f64,
    pub trials: usize,
}

/// Fraction of `paths` lying at or below `bound` at every `t`; entries
/// where the bound is `NaN` are not checked.
pub fn coverage(paths: &[Vec<f64>], bound: &[f64]) -> f64 {
    if paths.is_empty() {
        return 0.0;
    }
    let inside = paths
        .iter()
        .filter(|p| p.iter().zip(bound).all(|(v, b)| b.is_nan() || v <= b))
        .count();
    inside as f64 / paths.len() as f64
}

fn curve(family: BoundFamily, base: &BoundParams, resolved: &Resolved, c: f64) -> Result<Vec<f64>> {
    let params = BoundParams { c, ..*base };
    let out = schedule_curve(family, &params, &resolved.schedule, resolved.horizon)?;
    if out.iter().skip(1).any(|v| v.is_nan()) {
        return Err(Error::OutOfRegime(format!(
            "{} envelope is undefined along this schedule",
            family.name()
        )));
    }
    Ok(out)
}

/// Smallest `c` on `[CALIBRATION_MIN_C, CALIBRATION_MAX_C]` (to within
/// `1e-6`, rounded up) whose envelope covers at least `target` of the
/// given trial paths.
pub fn calibrate_paths(
    family: BoundFamily,
    resolved: &Resolved,
    paths: &TrialPaths,
    target: f64,
) -> Result<Calibration> {
    if !family.is_high_probability() {
        return Err(Error::Config(format!("{} has no constant to calibrate", family.name())));
    }
    if !(target > 0.0 && target <= 1.0) {
        return Err(Error::Config(format!("target coverage {target} must lie in (0, 1]")));
    }
    let (base, metric) = if family.is_gap() {
        (&resolved.bound_gap_params, &paths.gap)
    } else {
        (&resolved.bound_dist_params, &paths.dist)
    };
    let cov = |c: f64| -> Result<f64> { Ok(coverage(metric, &curve(family, base, resolved, c)?)) };
    let done = |c: f64, coverage: f64| Calibration {
        family,
        c,
        coverage,
        target,
        trials: metric.len(),
    };

    let at_min = cov(CALIBRATION_MIN_C)?;
    if at_min >= target {
        return Ok(done(CALIBRATION_MIN_C, at_min));
    }
    let mut hi_cov = cov(CALIBRATION_MAX_C)?;
    if hi_cov < target {
        return Err(Error::CalibrationFailure(format!(
            "coverage {hi_cov} < {target} even at c = {CALIBRATION_MAX_C}"
        )));
    }
    let (mut lo, mut hi) = (CALIBRATION_MIN_C, CALIBRATION_MAX_C);
    while hi - lo > TOL {
        let mid = 0.5 * (lo + hi);
        let m = cov(mid)?;
        if m >= target {
            hi = mid;
            hi_cov = m;
        } else {
            lo = mid;
        }
    }
    Ok(done(hi, hi_cov))
}

/// Runs `config.trials` trials and calibrates `family` against them.
/// The target defaults to `1 − δ` with `δ` from the bound block.
pub fn calibrate_c(config: &ExperimentConfig, family: BoundFamily, target: Option<f64>) -> Result<Calibration> {
    if config.trials < MIN_TRIALS {
        return Err(Error::Config(format!(
            "calibration needs at least {MIN_TRIALS} trials, got {}",
            config.trials
        )));
    }
    if family.is_gap() && !config.algorithm.is_averaged() {
        return Err(Error::Config(format!(
            "{} calibrates the averaged iterate; use an averaged algorithm",
            family.name()
        )));
    }
    let resolved = resolve(config)?;
    let paths = run_trials(config, &resolved, config.trials)?;
    calibrate_paths(family, &resolved, &paths, target.unwrap_or(1.0 - config.bound.delta))
}
