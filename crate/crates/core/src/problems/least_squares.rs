//! Least-squares recovery of a random-walk signal.

use serde::{Deserialize, Serialize};

use super::{
    check_current, check_dim, DriftHistory, OracleSample, ProblemConstants, ReferenceSolution,
    TimeVaryingProblem,
};
use crate::mathkit::{
    ensure_finite, gaussian, matrix_with_spectrum, sample_sphere, Covariance, Matrix, RngStream,
    Vector, INSTANCE_STREAM,
};
use crate::prox::Regularizer;
use crate::{Error, Result};

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
    10.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeastSquaresParams {
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
    #[serde(default = "one")]
    pub delta_drift: f64,
}

impl Default for LeastSquaresParams {
    fn default() -> Self {
        Self {
            d: default_d(),
            n: default_n(),
            mu: 1.0,
            l: 1.0,
            sigma: default_sigma(),
            delta_drift: 1.0,
        }
    }
}

/// `A`, its Gram matrix and the observation noise shared by the dense and
/// sparse least-squares families. The population objective is
/// `½‖A(u − x★)‖² + σ²/(2L)`.
#[derive(Clone, Debug)]
pub(crate) struct LinearModel {
    pub a: Matrix,
    pub gram: Matrix,
    pub mu: f64,
    pub l: f64,
    pub sigma: f64,
    noise: Covariance,
}

impl LinearModel {
    pub fn build(
        d: usize,
        n: usize,
        mu: f64,
        l: f64,
        sigma: f64,
        rng: &mut RngStream,
    ) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidDimension("least squares with d = 0".into()));
        }
        if n < d {
            return Err(Error::InvalidShape(format!("need n >= d, got n={n}, d={d}")));
        }
        if !(mu > 0.0 && mu <= l && l.is_finite()) {
            return Err(Error::InvalidParameter(format!("need 0 < mu <= L, got mu={mu}, L={l}")));
        }
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma {sigma}")));
        }
        let a = matrix_with_spectrum(n, d, mu.sqrt(), l.sqrt(), rng)?;
        let gram = a.transpose() * &a;
        let noise = Covariance::isotropic(sigma * sigma / (n as f64 * l))?;
        Ok(Self {
            a,
            gram,
            mu,
            l,
            sigma,
            noise,
        })
    }

    /// `½ tr Σ`.
    pub fn floor_value(&self) -> f64 {
        self.sigma * self.sigma / (2.0 * self.l)
    }

    pub fn gradient(&self, xstar: &Vector, x: &Vector) -> Vector {
        &self.gram * (x - xstar)
    }

    pub fn loss(&self, xstar: &Vector, x: &Vector) -> f64 {
        0.5 * (&self.a * (x - xstar)).norm_squared() + self.floor_value()
    }

    /// `Aᵀ(Ax − y)` with `y ~ N(Ax★, σ²/(nL) I)`.
    pub fn sample_gradient(&self, xstar: &Vector, x: &Vector, rng: &mut RngStream) -> Result<Vector> {
        let mean = &self.a * xstar;
        let y = gaussian(&mean, &self.noise, rng)?;
        Ok(self.a.transpose() * (&self.a * x - y))
    }
}

/// `f_t(u) = E ½‖Au − y‖²`, `y ~ N(A x★_t, σ²/(nL) I)`, with `x★` a random
/// walk of sphere steps of radius `Δ`.
#[derive(Clone, Debug)]
pub struct LeastSquares {
    params: LeastSquaresParams,
    model: LinearModel,
    x0: Vector,
    walk: DriftHistory<Vector>,
}

impl LeastSquares {
    pub fn new(params: LeastSquaresParams, seed: u64) -> Result<Self> {
        Self::with_history(params, seed, None)
    }

    pub fn with_history(params: LeastSquaresParams, seed: u64, history: Option<usize>) -> Result<Self> {
        if !(params.delta_drift >= 0.0 && params.delta_drift.is_finite()) {
            return Err(Error::InvalidParameter(format!("drift {}", params.delta_drift)));
        }
        let mut rng = RngStream::new(seed, INSTANCE_STREAM);
        let model = LinearModel::build(params.d, params.n, params.mu, params.l, params.sigma, &mut rng)?;
        let xstar0 = rng.gaussian_vector(params.d);
        let x0 = rng.gaussian_vector(params.d);
        Ok(Self {
            params,
            model,
            x0,
            walk: DriftHistory::with_capacity(xstar0, history),
        })
    }

    pub fn params(&self) -> &LeastSquaresParams {
        &self.params
    }

    pub fn matrix(&self) -> &Matrix {
        &self.model.a
    }

    pub fn minimizer(&self, t: usize) -> Result<&Vector> {
        self.walk.get(t)
    }
}

impl TimeVaryingProblem for LeastSquares {
    fn name(&self) -> &'static str {
        "least_squares"
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
        Regularizer::Zero
    }

    fn time(&self) -> usize {
        self.walk.current()
    }

    fn initial_point(&self) -> Vector {
        self.x0.clone()
    }

    fn advance(&mut self, rng: &mut RngStream) -> Result<()> {
        let step = sample_sphere(self.params.d, self.params.delta_drift, rng)?;
        let next = self.walk.latest() + step;
        self.walk.push(next);
        Ok(())
    }

    fn sample_gradient(&self, t: usize, x: &Vector, rng: &mut RngStream) -> Result<OracleSample> {
        check_current(t, self.time())?;
        check_dim(x, self.params.d)?;
        ensure_finite(x, "query point")?;
        let gradient = self.model.sample_gradient(self.walk.latest(), x, rng)?;
        Ok(OracleSample { gradient, t })
    }

    fn gradient(&self, t: usize, _decision: &Vector, at: &Vector) -> Result<Vector> {
        check_dim(at, self.params.d)?;
        Ok(self.model.gradient(self.walk.get(t)?, at))
    }

    fn loss(&self, t: usize, _decision: &Vector, at: &Vector) -> Result<f64> {
        check_dim(at, self.params.d)?;
        Ok(self.model.loss(self.walk.get(t)?, at))
    }

    fn best_response(&self, t: usize, _decision: &Vector) -> Result<Vector> {
        Ok(self.walk.get(t)?.clone())
    }

    fn reference(&self, t: usize) -> Result<ReferenceSolution> {
        Ok(ReferenceSolution {
            point: self.walk.get(t)?.clone(),
            value: self.model.floor_value(),
        })
    }

    /// Constant in `x`: `‖AᵀA(x★_i − x★_t)‖`.
    fn gradient_drift_norm(&self, i: usize, t: usize, _x: &Vector) -> Result<f64> {
        let diff = self.walk.get(i)? - self.walk.get(t)?;
        Ok((&self.model.gram * diff).norm())
    }
}
