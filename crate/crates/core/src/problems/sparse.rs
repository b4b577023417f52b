//! Sparse least-squares recovery constrained to the unit l1-ball.

use serde::{Deserialize, Serialize};

use super::least_squares::LinearModel;
use super::{
    check_current, check_dim, DriftHistory, OracleSample, ProblemConstants, ReferenceSolution,
    TimeVaryingProblem,
};
use crate::mathkit::{ensure_finite, sample_l1_ball, RngStream, Vector, INSTANCE_STREAM};
use crate::prox::{project_l1_ball, Regularizer};
use crate::{Error, Result};

const MOVE_ATTEMPTS: usize = 100;
const APG_MAX_ITERS: usize = 100_000;
const REFERENCE_AGREEMENT: f64 = 1e-6;

fn default_d() -> usize {
    50
}
fn default_n() -> usize {
    100
}
fn one() -> f64 {
    1.0
}
fn default_sigma() -> f64 {
    0.5
}
fn default_delta() -> f64 {
    0.05
}
fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SparseParams {
    #[serde(default = "default_d")]
    pub d: usize,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "one")]
    pub mu: f64,
    #[serde(default = "one", rename = "L")]
    pub l: f64,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default = "default_delta")]
    pub delta_drift: f64,
    /// Cross-check every reference point with an independent solve.
    #[serde(default = "yes")]
    pub verify_references: bool,
}

impl Default for SparseParams {
    fn default() -> Self {
        Self {
            d: default_d(),
            n: default_n(),
            mu: 1.0,
            l: 1.0,
            sigma: default_sigma(),
            delta_drift: default_delta(),
            verify_references: true,
        }
    }
}

#[derive(Clone, Debug)]
struct WalkPoint {
    x: Vector,
    support: Vec<usize>,
}

/// Least squares over `B₁ = {‖u‖₁ ≤ 1}` tracking an `⌊ln d⌋`-sparse signal
/// that moves inside its support or swaps one support coordinate.
#[derive(Clone, Debug)]
pub struct SparseLeastSquares {
    params: SparseParams,
    model: LinearModel,
    x0: Vector,
    walk: DriftHistory<WalkPoint>,
}

impl SparseLeastSquares {
    pub fn new(params: SparseParams, seed: u64) -> Result<Self> {
        Self::with_history(params, seed, None)
    }

    pub fn with_history(params: SparseParams, seed: u64, history: Option<usize>) -> Result<Self> {
        let delta = params.delta_drift;
        if !(delta > 0.0 && delta <= std::f64::consts::SQRT_2) {
            return Err(Error::InvalidParameter(format!(
                "sparse walk needs drift in (0, sqrt 2], got {delta}"
            )));
        }
        if params.d < 3 {
            return Err(Error::InvalidDimension(format!(
                "sparse walk needs d >= 3 for a nonempty support, got {}",
                params.d
            )));
        }
        let s = support_size(params.d);
        let mut rng = RngStream::new(seed, INSTANCE_STREAM);
        let model = LinearModel::build(params.d, params.n, params.mu, params.l, params.sigma, &mut rng)?;
        let u = sample_l1_ball(s, &mut rng)?;
        let mut xstar = Vector::zeros(params.d);
        xstar.rows_mut(0, s).copy_from(&u);
        let x0 = sample_l1_ball(params.d, &mut rng)?;
        let problem = Self {
            params,
            model,
            x0,
            walk: DriftHistory::with_capacity(
                WalkPoint {
                    x: xstar,
                    support: (0..s).collect(),
                },
                history,
            ),
        };
        problem.verify(&problem.walk.latest().x)?;
        Ok(problem)
    }

    pub fn params(&self) -> &SparseParams {
        &self.params
    }

    /// Probability of an in-support move, `(4 − 2Δ²)/(4 − Δ²)`.
    pub fn move_probability(&self) -> f64 {
        move_probability(self.params.delta_drift)
    }

    pub fn minimizer(&self, t: usize) -> Result<&Vector> {
        Ok(&self.walk.get(t)?.x)
    }

    pub fn support(&self, t: usize) -> Result<&[usize]> {
        Ok(&self.walk.get(t)?.support)
    }

    /// Accelerated projected gradient on `½‖A(u − x★)‖²` over `B₁`, from 0.
    pub fn solve_reference(&self, xstar: &Vector) -> Result<Vector> {
        let (mu, l) = (self.model.mu, self.model.l);
        let momentum = (l.sqrt() - mu.sqrt()) / (l.sqrt() + mu.sqrt());
        let mut u = Vector::zeros(self.params.d);
        let mut y = u.clone();
        for _ in 0..APG_MAX_ITERS {
            let grad = self.model.gradient(xstar, &y);
            let next = project_l1_ball(&(&y - grad / l), 1.0);
            let step = (&next - &u).norm();
            y = &next + (&next - &u) * momentum;
            u = next;
            if step <= 1e-13 * u.norm().max(1.0) {
                return Ok(u);
            }
        }
        Err(Error::SolverFailure(format!(
            "projected gradient did not converge in {APG_MAX_ITERS} iterations"
        )))
    }

    fn verify(&self, xstar: &Vector) -> Result<()> {
        if !self.params.verify_references {
            return Ok(());
        }
        let solved = self.solve_reference(xstar)?;
        let gap = (&solved - xstar).norm();
        if gap > REFERENCE_AGREEMENT {
            return Err(Error::InternalConsistency(format!(
                "walk point and projected-gradient solution differ by {gap:e}"
            )));
        }
        Ok(())
    }

    fn swap(current: &WalkPoint, d: usize, rng: &mut RngStream) -> WalkPoint {
        let src_slot = rng.index(current.support.len());
        let src = current.support[src_slot];
        let zeros: Vec<usize> = (0..d).filter(|i| !current.support.contains(i)).collect();
        let dst = zeros[rng.index(zeros.len())];
        let mut x = current.x.clone();
        x[dst] = x[src];
        x[src] = 0.0;
        let mut support = current.support.clone();
        support[src_slot] = dst;
        WalkPoint { x, support }
    }

    fn in_support_move(current: &WalkPoint, radius: f64, rng: &mut RngStream) -> Option<WalkPoint> {
        let inside = |x: &Vector| x.lp_norm(1) <= 1.0;
        for _ in 0..MOVE_ATTEMPTS {
            let g: Vec<f64> = current.support.iter().map(|_| rng.standard_normal()).collect();
            let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                continue;
            }
            let mut x = current.x.clone();
            for (i, gi) in current.support.iter().zip(&g) {
                x[*i] += radius * gi / norm;
            }
            if inside(&x) {
                return Some(WalkPoint {
                    x,
                    support: current.support.clone(),
                });
            }
        }
        let norm = current.x.norm();
        if norm > 0.0 {
            let x = &current.x * (1.0 - radius / norm);
            if inside(&x) {
                return Some(WalkPoint {
                    x,
                    support: current.support.clone(),
                });
            }
        }
        None
    }
}

pub(crate) fn support_size(d: usize) -> usize {
    (d as f64).ln().floor() as usize
}

pub fn move_probability(delta: f64) -> f64 {
    let d2 = delta * delta;
    ((4.0 - 2.0 * d2) / (4.0 - d2)).clamp(0.0, 1.0)
}

impl TimeVaryingProblem for SparseLeastSquares {
    fn name(&self) -> &'static str {
        "sparse_least_squares"
    }

    fn dim(&self) -> usize {
        self.params.d
    }

    fn constants(&self) -> ProblemConstants {
        let p = &self.params;
        ProblemConstants {
            mu: p.mu,
            l: p.l,
            sigma: p.sigma,
            drift: p.delta_drift,
            gap_drift: p.l * p.delta_drift / p.mu,
            gamma: 0.0,
        }
    }

    fn regularizer(&self) -> Regularizer {
        Regularizer::L1Ball { radius: 1.0 }
    }

    fn time(&self) -> usize {
        self.walk.current()
    }

    fn initial_point(&self) -> Vector {
        self.x0.clone()
    }

    fn advance(&mut self, rng: &mut RngStream) -> Result<()> {
        let current = self.walk.latest();
        let radius = self.params.delta_drift / std::f64::consts::SQRT_2;
        let next = if rng.uniform() < self.move_probability() {
            match Self::in_support_move(current, radius, rng) {
                Some(p) => p,
                None => Self::swap(current, self.params.d, rng),
            }
        } else {
            Self::swap(current, self.params.d, rng)
        };
        self.verify(&next.x)?;
        self.walk.push(next);
        Ok(())
    }

    fn sample_gradient(&self, t: usize, x: &Vector, rng: &mut RngStream) -> Result<OracleSample> {
        check_current(t, self.time())?;
        check_dim(x, self.params.d)?;
        ensure_finite(x, "query point")?;
        let gradient = self.model.sample_gradient(&self.walk.latest().x, x, rng)?;
        Ok(OracleSample { gradient, t })
    }

    fn gradient(&self, t: usize, _decision: &Vector, at: &Vector) -> Result<Vector> {
        check_dim(at, self.params.d)?;
        Ok(self.model.gradient(&self.walk.get(t)?.x, at))
    }

    fn loss(&self, t: usize, _decision: &Vector, at: &Vector) -> Result<f64> {
        check_dim(at, self.params.d)?;
        Ok(self.model.loss(&self.walk.get(t)?.x, at) + self.regularizer().value(at))
    }

    fn best_response(&self, t: usize, _decision: &Vector) -> Result<Vector> {
        Ok(self.walk.get(t)?.x.clone())
    }

    fn reference(&self, t: usize) -> Result<ReferenceSolution> {
        Ok(ReferenceSolution {
            point: self.walk.get(t)?.x.clone(),
            value: self.model.floor_value(),
        })
    }

    fn gradient_drift_norm(&self, i: usize, t: usize, _x: &Vector) -> Result<f64> {
        let diff = &self.walk.get(i)?.x - &self.walk.get(t)?.x;
        Ok((&self.model.gram * diff).norm())
    }
}
