//! Synthetic drifting problems.
//!
//! Each family owns its drift state and advances it one step at a time.
//! Objectives are written `f_{t,y}(u) + r(u)` where `y` is the deployed
//! decision; families without decision dependence ignore `y`.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::mathkit::{RngStream, Vector};
use crate::prox::Regularizer;
use crate::{Error, Result};

mod least_squares;
mod logistic;
mod performative;
mod sparse;

pub use least_squares::{LeastSquares, LeastSquaresParams};
pub use logistic::{Logistic, LogisticParams};
pub use performative::{Performative, PerformativeParams};
pub use sparse::{SparseLeastSquares, SparseParams};

/// Declared problem constants.
///
/// `drift` bounds the per-step movement of the tracked reference (minimizer
/// or equilibrium). `gap_drift` is the drift constant entering value
/// tracking: the gradient drift satisfies `G_{i,t} ≤ μ_gap · gap_drift · |i−t|`
/// in second moment, with `μ_gap = μ − 2γ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemConstants {
    pub mu: f64,
    #[serde(rename = "L")]
    pub l: f64,
    pub sigma: f64,
    pub drift: f64,
    pub gap_drift: f64,
    pub gamma: f64,
}

impl ProblemConstants {
    /// `μ̄ = μ − γ`.
    pub fn mu_bar(&self) -> f64 {
        self.mu - self.gamma
    }

    /// `μ̂ = μ − 2γ`.
    pub fn mu_hat(&self) -> f64 {
        self.mu - 2.0 * self.gamma
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.mu > 0.0
            && self.mu <= self.l
            && self.l.is_finite()
            && self.sigma >= 0.0
            && self.drift >= 0.0
            && self.gap_drift >= 0.0
            && self.gamma >= 0.0
            && self.gamma < self.mu;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("inconsistent constants {self:?}")))
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleSample {
    pub gradient: Vector,
    pub t: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceSolution {
    pub point: Vector,
    pub value: f64,
}

/// A drifting problem with a stochastic first-order oracle.
pub trait TimeVaryingProblem: Send {
    fn name(&self) -> &'static str;
    fn dim(&self) -> usize;
    fn constants(&self) -> ProblemConstants;
    fn regularizer(&self) -> Regularizer;
    /// Current time index.
    fn time(&self) -> usize;
    fn initial_point(&self) -> Vector;

    /// Advances the drift process by one step.
    fn advance(&mut self, rng: &mut RngStream) -> Result<()>;

    /// Stochastic gradient of `f_{t,x}` at `x`; `t` must be the current time.
    fn sample_gradient(&self, t: usize, x: &Vector, rng: &mut RngStream) -> Result<OracleSample>;

    /// Exact `∇f_{t,decision}(at)`.
    fn gradient(&self, t: usize, decision: &Vector, at: &Vector) -> Result<Vector>;

    /// Exact `f_{t,decision}(at) + r(at)`.
    fn loss(&self, t: usize, decision: &Vector, at: &Vector) -> Result<f64>;

    /// `argmin_u f_{t,decision}(u) + r(u)`.
    fn best_response(&self, t: usize, decision: &Vector) -> Result<Vector>;

    /// Minimizer (or equilibrium) at time `t` together with its value.
    fn reference(&self, t: usize) -> Result<ReferenceSolution>;

    /// `‖∇f_{i,x}(x) − ∇f_{t,x}(x)‖`.
    fn gradient_drift_norm(&self, i: usize, t: usize, x: &Vector) -> Result<f64> {
        let gi = self.gradient(i, x, x)?;
        let gt = self.gradient(t, x, x)?;
        Ok((gi - gt).norm())
    }

    /// Value of the tracked objective `f_{t,ref_t}(x) + r(x)`.
    fn tracking_objective(&self, t: usize, x: &Vector) -> Result<f64> {
        let r = self.reference(t)?;
        self.loss(t, &r.point, x)
    }

    /// Suboptimality of `x` for the tracked objective at time `t`.
    fn gap(&self, t: usize, x: &Vector) -> Result<f64> {
        let r = self.reference(t)?;
        Ok(self.loss(t, &r.point, x)? - r.value)
    }

    /// Norm of the prox-gradient mapping `L(x − prox_{r/L}(x − ∇f_{t,x}(x)/L))`;
    /// zero exactly at minimizers (time-only) or equilibria.
    fn first_order_residual(&self, t: usize, x: &Vector) -> Result<f64> {
        let l = self.constants().l;
        let g = self.gradient(t, x, x)?;
        let p = self.regularizer().prox(1.0 / l, &(x - g / l))?;
        Ok((x - p).norm() * l)
    }
}

/// Per-time record of a drift process with optional bounded retention.
#[derive(Clone, Debug)]
pub struct DriftHistory<T> {
    capacity: Option<usize>,
    first: usize,
    entries: VecDeque<T>,
}

impl<T> DriftHistory<T> {
    /// Unbounded history starting with the time-0 entry.
    pub fn new(initial: T) -> Self {
        Self::with_capacity(initial, None)
    }

    pub fn with_capacity(initial: T, capacity: Option<usize>) -> Self {
        let mut entries = VecDeque::new();
        entries.push_back(initial);
        Self {
            capacity: capacity.map(|c| c.max(1)),
            first: 0,
            entries,
        }
    }

    /// Time of the most recent entry.
    pub fn current(&self) -> usize {
        self.first + self.entries.len() - 1
    }

    pub fn latest(&self) -> &T {
        self.entries.back().expect("history is never empty")
    }

    pub fn push(&mut self, value: T) {
        self.entries.push_back(value);
        if let Some(cap) = self.capacity {
            while self.entries.len() > cap {
                self.entries.pop_front();
                self.first += 1;
            }
        }
    }

    pub fn get(&self, t: usize) -> Result<&T> {
        if t > self.current() {
            return Err(Error::OutOfSync {
                requested: t,
                current: self.current(),
            });
        }
        if t < self.first {
            return Err(Error::Unavailable(format!(
                "time {t} evicted from drift history (oldest retained: {})",
                self.first
            )));
        }
        Ok(&self.entries[t - self.first])
    }
}

pub(crate) fn check_current(t: usize, current: usize) -> Result<()> {
    if t == current {
        Ok(())
    } else {
        Err(Error::OutOfSync {
            requested: t,
            current,
        })
    }
}

pub(crate) fn check_dim(x: &Vector, d: usize) -> Result<()> {
    if x.len() == d {
        Ok(())
    } else {
        Err(Error::InvalidShape(format!("expected dimension {d}, got {}", x.len())))
    }
}

/// Result of the best-response fixed-point iteration.
#[derive(Clone, Debug)]
pub struct Equilibrium {
    pub solution: ReferenceSolution,
    pub iterations: usize,
    /// Successive-step ratios `‖y_{k+1}−y_k‖ / ‖y_k−y_{k−1}‖` above the
    /// rounding floor.
    pub ratios: Vec<f64>,
}

const EQUILIBRIUM_MAX_ITERS: usize = 10_000;
const RATIO_SLACK: f64 = 0.05;
const RATIO_PATIENCE: usize = 5;

/// Repeated minimization `y ← argmin_u f_{t,y}(u) + r(u)` from `y = 0`.
///
/// Stops once a step is at most `tol·(1 − γ/μ)`, which bounds the distance
/// to the fixed point by `tol`. A ratio is only recorded when the previous
/// step exceeds `1e-8·max(1, ‖y‖)`; below that, rounding dominates the
/// step and the ratio carries no information about the map.
pub fn compute_equilibrium(
    problem: &dyn TimeVaryingProblem,
    t: usize,
    tol: f64,
) -> Result<Equilibrium> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance {tol}")));
    }
    let c = problem.constants();
    if !(c.gamma < c.mu) {
        return Err(Error::RegimeViolation(format!(
            "equilibrium requires γ < μ, got γ={}, μ={}",
            c.gamma, c.mu
        )));
    }
    let kappa = c.gamma / c.mu;
    let stop = tol * (1.0 - kappa);
    let limit = kappa + RATIO_SLACK;

    let mut y = Vector::zeros(problem.dim());
    let mut prev_step: Option<f64> = None;
    let mut ratios = Vec::new();
    let mut strikes = 0;
    for k in 1..=EQUILIBRIUM_MAX_ITERS {
        let next = problem.best_response(t, &y)?;
        let step = (&next - &y).norm();
        let floor = 1e-8 * y.norm().max(1.0);
        y = next;
        if c.gamma == 0.0 || step <= stop || step <= f64::EPSILON * y.norm().max(1.0) {
            let value = problem.loss(t, &y, &y)?;
            return Ok(Equilibrium {
                solution: ReferenceSolution { point: y, value },
                iterations: k,
                ratios,
            });
        }
        if let Some(p) = prev_step {
            if p > floor {
                let ratio = step / p;
                ratios.push(ratio);
                if ratio > limit {
                    strikes += 1;
                    if strikes >= RATIO_PATIENCE {
                        return Err(Error::ContractionViolation { ratio, limit });
                    }
                } else {
                    strikes = 0;
                }
            }
        }
        prev_step = Some(step);
    }
    Err(Error::SolverFailure(format!(
        "equilibrium iteration did not reach {tol} in {EQUILIBRIUM_MAX_ITERS} steps"
    )))
}
