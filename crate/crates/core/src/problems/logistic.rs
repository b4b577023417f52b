//! l2-regularized logistic regression with drifting labels.

use serde::{Deserialize, Serialize};

use super::{
    check_current, check_dim, DriftHistory, OracleSample, ProblemConstants, ReferenceSolution,
    TimeVaryingProblem,
};
use crate::mathkit::{ensure_finite, operator_norm, Matrix, RngStream, Vector, INSTANCE_STREAM};
use crate::prox::Regularizer;
use crate::{Error, Result};

const NEWTON_TOL: f64 = 1e-10;
const NEWTON_MAX_ITERS: usize = 100;
const ARMIJO: f64 = 1e-4;

fn default_d() -> usize {
    20
}
fn default_n() -> usize {
    200
}
fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogisticParams {
    #[serde(default = "default_d")]
    pub d: usize,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "one")]
    pub mu: f64,
}

impl Default for LogisticParams {
    fn default() -> Self {
        Self {
            d: default_d(),
            n: default_n(),
            mu: 1.0,
        }
    }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Clone, Debug)]
struct LabelState {
    labels: Vector,
    minimizer: ReferenceSolution,
}

/// `f_t(x) = (1/n) Σ [log(1 + e^{⟨a_i,x⟩}) − b_t^i ⟨a_i,x⟩] + (μ/2)‖x‖²`
/// with one label flipped per step.
#[derive(Clone, Debug)]
pub struct Logistic {
    params: LogisticParams,
    a: Matrix,
    x0: Vector,
    constants: ProblemConstants,
    history: DriftHistory<LabelState>,
}

impl Logistic {
    pub fn new(params: LogisticParams, seed: u64) -> Result<Self> {
        Self::with_history(params, seed, None)
    }

    pub fn with_history(params: LogisticParams, seed: u64, history: Option<usize>) -> Result<Self> {
        let mut rng = RngStream::new(seed, INSTANCE_STREAM);
        let a = rng.gaussian_matrix(params.n.max(1), params.d.max(1));
        let labels = Vector::from_iterator(
            params.n,
            (0..params.n).map(|_| if rng.coin() { 1.0 } else { 0.0 }),
        );
        let x0 = rng.gaussian_vector(params.d.max(1));
        Self::from_data(params, a, labels, x0, history)
    }

    /// Instance with explicit rows, initial labels and start point.
    pub fn from_data(
        params: LogisticParams,
        a: Matrix,
        labels: Vector,
        x0: Vector,
        history: Option<usize>,
    ) -> Result<Self> {
        if params.d == 0 || params.n == 0 {
            return Err(Error::InvalidDimension(format!(
                "logistic regression needs d, n >= 1, got d={}, n={}",
                params.d, params.n
            )));
        }
        if !(params.mu > 0.0 && params.mu.is_finite()) {
            return Err(Error::InvalidParameter(format!("mu {}", params.mu)));
        }
        if a.nrows() != params.n || a.ncols() != params.d || labels.len() != params.n {
            return Err(Error::InvalidShape(format!(
                "rows {}x{} and {} labels for n={}, d={}",
                a.nrows(),
                a.ncols(),
                labels.len(),
                params.n,
                params.d
            )));
        }
        check_dim(&x0, params.d)?;
        let constants = Self::derive_constants(&a, params.mu);
        let mut problem = Self {
            params,
            a,
            x0,
            constants,
            history: DriftHistory::new(LabelState {
                labels: labels.clone(),
                minimizer: ReferenceSolution {
                    point: Vector::zeros(0),
                    value: 0.0,
                },
            }),
        };
        let minimizer = problem.newton(&labels, &Vector::zeros(problem.params.d))?;
        problem.history = DriftHistory::with_capacity(LabelState { labels, minimizer }, history);
        Ok(problem)
    }

    fn derive_constants(a: &Matrix, mu: f64) -> ProblemConstants {
        let n = a.nrows() as f64;
        let norms: Vec<f64> = a.row_iter().map(|r| r.norm()).collect();
        let sum_sq: f64 = norms.iter().map(|v| v * v).sum();
        let sum: f64 = norms.iter().sum();
        let max = norms.iter().fold(0.0_f64, |m, v| m.max(*v));
        let op = operator_norm(a);
        let drift = max / (mu * n);
        ProblemConstants {
            mu,
            l: op * op / (4.0 * n) + mu,
            sigma: (((n - 2.0) * sum_sq + sum * sum) / (n * n)).max(0.0).sqrt(),
            drift,
            gap_drift: drift,
            gamma: 0.0,
        }
    }

    pub fn params(&self) -> &LogisticParams {
        &self.params
    }

    pub fn labels(&self, t: usize) -> Result<&Vector> {
        Ok(&self.history.get(t)?.labels)
    }

    pub fn rows(&self) -> &Matrix {
        &self.a
    }

    pub fn objective(&self, labels: &Vector, x: &Vector) -> f64 {
        let z = &self.a * x;
        let n = self.params.n as f64;
        let data: f64 = z.iter().zip(labels.iter()).map(|(zi, bi)| softplus(*zi) - bi * zi).sum();
        data / n + 0.5 * self.params.mu * x.norm_squared()
    }

    pub fn full_gradient(&self, labels: &Vector, x: &Vector) -> Vector {
        let z = &self.a * x;
        let resid = Vector::from_iterator(
            z.len(),
            z.iter().zip(labels.iter()).map(|(zi, bi)| sigmoid(*zi) - bi),
        );
        self.a.transpose() * resid / self.params.n as f64 + x * self.params.mu
    }

    fn hessian(&self, x: &Vector) -> Matrix {
        let z = &self.a * x;
        let mut weighted = self.a.clone();
        for (i, zi) in z.iter().enumerate() {
            let s = sigmoid(*zi);
            weighted.row_mut(i).scale_mut(s * (1.0 - s));
        }
        let d = self.params.d;
        self.a.transpose() * weighted / self.params.n as f64 + Matrix::identity(d, d) * self.params.mu
    }

    /// Damped Newton to `‖∇f‖ ≤ 1e-10`. A step is accepted under the Armijo
    /// condition or, near the optimum where objective differences drown in
    /// rounding, whenever the gradient norm decreases.
    fn newton(&self, labels: &Vector, start: &Vector) -> Result<ReferenceSolution> {
        let mut x = start.clone();
        let mut g = self.full_gradient(labels, &x);
        let mut f = self.objective(labels, &x);
        for _ in 0..NEWTON_MAX_ITERS {
            let gnorm = g.norm();
            if gnorm <= NEWTON_TOL {
                return Ok(ReferenceSolution { point: x, value: f });
            }
            let chol = self
                .hessian(&x)
                .cholesky()
                .ok_or_else(|| Error::SolverFailure("Hessian not positive definite".into()))?;
            let p = -chol.solve(&g);
            let slope = g.dot(&p);
            let mut s = 1.0;
            loop {
                let xn = &x + &p * s;
                let fn_ = self.objective(labels, &xn);
                let gn = self.full_gradient(labels, &xn);
                if fn_ <= f + ARMIJO * s * slope || gn.norm() < gnorm {
                    x = xn;
                    f = fn_;
                    g = gn;
                    break;
                }
                s *= 0.5;
                if s < 1e-12 {
                    return Err(Error::SolverFailure(format!(
                        "line search stalled at gradient norm {gnorm:e}"
                    )));
                }
            }
        }
        if g.norm() <= NEWTON_TOL {
            return Ok(ReferenceSolution { point: x, value: f });
        }
        Err(Error::SolverFailure(format!(
            "Newton did not reach gradient norm {NEWTON_TOL:e} in {NEWTON_MAX_ITERS} iterations"
        )))
    }
}

impl TimeVaryingProblem for Logistic {
    fn name(&self) -> &'static str {
        "logistic"
    }

    fn dim(&self) -> usize {
        self.params.d
    }

    fn constants(&self) -> ProblemConstants {
        self.constants
    }

    fn regularizer(&self) -> Regularizer {
        Regularizer::Zero
    }

    fn time(&self) -> usize {
        self.history.current()
    }

    fn initial_point(&self) -> Vector {
        self.x0.clone()
    }

    fn advance(&mut self, rng: &mut RngStream) -> Result<()> {
        let current = self.history.latest();
        let k = rng.index(self.params.n);
        let mut labels = current.labels.clone();
        labels[k] = 1.0 - labels[k];
        let minimizer = self.newton(&labels, &current.minimizer.point)?;
        self.history.push(LabelState { labels, minimizer });
        Ok(())
    }

    fn sample_gradient(&self, t: usize, x: &Vector, rng: &mut RngStream) -> Result<OracleSample> {
        check_current(t, self.time())?;
        check_dim(x, self.params.d)?;
        ensure_finite(x, "query point")?;
        let k = rng.index(self.params.n);
        let row = self.a.row(k).transpose();
        let b = self.history.latest().labels[k];
        let gradient = &row * (sigmoid(row.dot(x)) - b) + x * self.params.mu;
        Ok(OracleSample { gradient, t })
    }

    fn gradient(&self, t: usize, _decision: &Vector, at: &Vector) -> Result<Vector> {
        check_dim(at, self.params.d)?;
        Ok(self.full_gradient(&self.history.get(t)?.labels, at))
    }

    fn loss(&self, t: usize, _decision: &Vector, at: &Vector) -> Result<f64> {
        check_dim(at, self.params.d)?;
        Ok(self.objective(&self.history.get(t)?.labels, at))
    }

    fn best_response(&self, t: usize, _decision: &Vector) -> Result<Vector> {
        Ok(self.history.get(t)?.minimizer.point.clone())
    }

    fn reference(&self, t: usize) -> Result<ReferenceSolution> {
        Ok(self.history.get(t)?.minimizer.clone())
    }

    /// `‖(1/n) Aᵀ(b_t − b_i)‖`; the labels enter the gradient linearly, so
    /// the difference is the same at every `x` and equals the supremum.
    fn gradient_drift_norm(&self, i: usize, t: usize, _x: &Vector) -> Result<f64> {
        let diff = &self.history.get(t)?.labels - &self.history.get(i)?.labels;
        Ok((self.a.transpose() * diff).norm() / self.params.n as f64)
    }
}
