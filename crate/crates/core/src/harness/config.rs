//! JSON experiment configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::algorithms::AlgorithmKind;
use crate::problems::{
    LeastSquares, LeastSquaresParams, Logistic, LogisticParams, Performative, PerformativeParams,
    SparseLeastSquares, SparseParams, TimeVaryingProblem,
};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ProblemConfig {
    LeastSquares(LeastSquaresParams),
    SparseLeastSquares(SparseParams),
    Logistic(LogisticParams),
    Performative(PerformativeParams),
}

impl ProblemConfig {
    pub fn build(&self, seed: u64, history: Option<usize>) -> Result<Box<dyn TimeVaryingProblem>> {
        Ok(match self {
            Self::LeastSquares(p) => Box::new(LeastSquares::with_history(p.clone(), seed, history)?),
            Self::SparseLeastSquares(p) => Box::new(SparseLeastSquares::with_history(p.clone(), seed, history)?),
            Self::Logistic(p) => Box::new(Logistic::with_history(p.clone(), seed, history)?),
            Self::Performative(p) => Box::new(Performative::new(p.clone(), seed)?),
        })
    }

    pub fn family(&self) -> &'static str {
        match self {
            Self::LeastSquares(_) => "least_squares",
            Self::SparseLeastSquares(_) => "sparse_least_squares",
            Self::Logistic(_) => "logistic",
            Self::Performative(_) => "performative",
        }
    }
}

/// Step-size specification. Decay variants take the initial error bound
/// `D`; when absent, the exact initial distance (or gap) of the instance
/// is used.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleConfig {
    /// Constant step; the critical step when `eta` is absent.
    Constant {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        eta: Option<f64>,
    },
    DecayDistExp {
        #[serde(default, rename = "D", skip_serializing_if = "Option::is_none")]
        d: Option<f64>,
    },
    DecayDistHp {
        #[serde(default, rename = "D", skip_serializing_if = "Option::is_none")]
        d: Option<f64>,
    },
    DecayGapExp {
        #[serde(default, rename = "D", skip_serializing_if = "Option::is_none")]
        d: Option<f64>,
    },
    DecayGapHp {
        #[serde(default, rename = "D", skip_serializing_if = "Option::is_none")]
        d: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        delta: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        c: Option<f64>,
    },
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self::Constant { eta: None }
    }
}

fn default_delta() -> f64 {
    0.05
}
fn default_c() -> f64 {
    1.0
}

/// Parameters of the high-probability envelopes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundConfig {
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_c")]
    pub c: f64,
}

impl Default for BoundConfig {
    fn default() -> Self {
        Self {
            delta: default_delta(),
            c: default_c(),
        }
    }
}

pub const SWEEP_PARAMS: [&str; 6] = ["eta", "sigma", "delta_drift", "mu", "gamma", "theta"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub param: String,
    pub values: Vec<f64>,
}

fn default_algorithm() -> AlgorithmKind {
    AlgorithmKind::Psg
}
fn default_trials() -> usize {
    100
}
fn default_band() -> f64 {
    0.95
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemConfig,
    #[serde(default = "default_algorithm")]
    pub algorithm: AlgorithmKind,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    /// Required for constant schedules; defaults to the schedule length for
    /// decay schedules.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub bound: BoundConfig,
    #[serde(default = "default_band")]
    pub band_level: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
    /// Drift-history retention; unbounded when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub history: Option<usize>,
}

impl ExperimentConfig {
    pub fn new(problem: ProblemConfig) -> Self {
        Self {
            problem,
            algorithm: default_algorithm(),
            schedule: ScheduleConfig::default(),
            horizon: None,
            trials: default_trials(),
            seed: 0,
            bound: BoundConfig::default(),
            band_level: default_band(),
            sweep: None,
            output_dir: None,
            history: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if !(self.band_level > 0.0 && self.band_level < 1.0) {
            return Err(Error::Config(format!("band_level {} must lie in (0, 1)", self.band_level)));
        }
        if !(self.bound.delta > 0.0 && self.bound.delta < 1.0) {
            return Err(Error::Config(format!("bound.delta {} must lie in (0, 1)", self.bound.delta)));
        }
        if !(self.bound.c > 0.0 && self.bound.c.is_finite()) {
            return Err(Error::Config(format!("bound.c {} must be positive", self.bound.c)));
        }
        if let Some(s) = &self.sweep {
            check_sweep_param(&s.param)?;
            if s.values.is_empty() {
                return Err(Error::Config("sweep needs at least one value".into()));
            }
        }
        if self.history == Some(0) {
            return Err(Error::Config("history must retain at least one entry".into()));
        }
        Ok(())
    }

    /// Copy with one sweep parameter set to `value`.
    pub fn with_param(&self, param: &str, value: f64) -> Result<Self> {
        check_sweep_param(param)?;
        let mut out = self.clone();
        out.sweep = None;
        let not_applicable = || {
            Err(Error::Config(format!(
                "sweep parameter '{param}' does not apply to the {} family",
                self.problem.family()
            )))
        };
        match (param, &mut out.problem) {
            ("eta", _) => out.schedule = ScheduleConfig::Constant { eta: Some(value) },
            ("sigma", ProblemConfig::LeastSquares(p)) => p.sigma = value,
            ("sigma", ProblemConfig::SparseLeastSquares(p)) => p.sigma = value,
            ("delta_drift", ProblemConfig::LeastSquares(p)) => p.delta_drift = value,
            ("delta_drift", ProblemConfig::SparseLeastSquares(p)) => p.delta_drift = value,
            ("mu", ProblemConfig::LeastSquares(p)) => p.mu = value,
            ("mu", ProblemConfig::SparseLeastSquares(p)) => p.mu = value,
            ("mu", ProblemConfig::Logistic(p)) => p.mu = value,
            ("mu", ProblemConfig::Performative(p)) => p.mu_reg = value,
            ("gamma", ProblemConfig::Performative(p)) => p.epsilon = value / p.mu_reg,
            ("theta", ProblemConfig::Performative(p)) => p.theta = value,
            _ => return not_applicable(),
        }
        Ok(out)
    }
}

pub fn check_sweep_param(param: &str) -> Result<()> {
    if SWEEP_PARAMS.contains(&param) {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "unknown sweep parameter '{param}' (expected one of {})",
            SWEEP_PARAMS.join(", ")
        )))
    }
}
