//! Performative location problem: the data distribution shifts toward the
//! deployed decision.

use serde::{Deserialize, Serialize};

use super::{check_current, check_dim, OracleSample, ProblemConstants, ReferenceSolution, TimeVaryingProblem};
use crate::mathkit::{ensure_finite, sample_sphere, RngStream, Vector, INSTANCE_STREAM};
use crate::prox::Regularizer;
use crate::{Error, Result};

fn default_d() -> usize {
    5
}
fn one() -> f64 {
    1.0
}
fn default_epsilon() -> f64 {
    0.25
}
fn default_theta() -> f64 {
    0.1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerformativeParams {
    #[serde(default = "default_d")]
    pub d: usize,
    /// Curvature of the loss `(μ_reg/2)‖u − ξ‖²`.
    #[serde(default = "one")]
    pub mu_reg: f64,
    /// Sensitivity of the distribution mean to the decision.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Speed of the distribution mean along its drift direction.
    #[serde(default = "default_theta")]
    pub theta: f64,
    /// Per-coordinate standard deviation of the samples.
    #[serde(default = "one")]
    pub s: f64,
}

impl Default for PerformativeParams {
    fn default() -> Self {
        Self {
            d: default_d(),
            mu_reg: 1.0,
            epsilon: default_epsilon(),
            theta: default_theta(),
            s: 1.0,
        }
    }
}

/// Samples `ξ ~ N(m + θ t w + ε x, s² I)` and loss `(μ_reg/2)‖u − ξ‖²`, so
/// `μ = L = μ_reg` and `γ = ε μ_reg`. The equilibrium is
/// `x̄_t = (m + θ t w)/(1 − ε)`.
#[derive(Clone, Debug)]
pub struct Performative {
    params: PerformativeParams,
    m: Vector,
    w: Vector,
    x0: Vector,
    t: usize,
}

impl Performative {
    pub fn new(params: PerformativeParams, seed: u64) -> Result<Self> {
        if params.d == 0 {
            return Err(Error::InvalidDimension("performative problem with d = 0".into()));
        }
        let mut rng = RngStream::new(seed, INSTANCE_STREAM);
        let m = rng.gaussian_vector(params.d);
        let w = sample_sphere(params.d, 1.0, &mut rng)?;
        let x0 = rng.gaussian_vector(params.d);
        Self::with_center(params, m, w, x0)
    }

    /// Instance with explicit base mean `m`, drift direction `w` (normalised
    /// here) and start point.
    pub fn with_center(params: PerformativeParams, m: Vector, w: Vector, x0: Vector) -> Result<Self> {
        let p = &params;
        if !(p.epsilon >= 0.0) {
            return Err(Error::InvalidParameter(format!("epsilon {}", p.epsilon)));
        }
        if p.epsilon >= 1.0 {
            return Err(Error::RegimeViolation(format!(
                "equilibria need epsilon < 1, got {}",
                p.epsilon
            )));
        }
        if !(p.mu_reg > 0.0 && p.mu_reg.is_finite()) {
            return Err(Error::InvalidParameter(format!("mu_reg {}", p.mu_reg)));
        }
        if !(p.theta >= 0.0 && p.theta.is_finite() && p.s >= 0.0 && p.s.is_finite()) {
            return Err(Error::InvalidParameter(format!("theta {} / s {}", p.theta, p.s)));
        }
        check_dim(&m, p.d)?;
        check_dim(&w, p.d)?;
        check_dim(&x0, p.d)?;
        let wn = w.norm();
        if wn == 0.0 {
            return Err(Error::InvalidParameter("drift direction is zero".into()));
        }
        Ok(Self {
            m,
            w: w / wn,
            x0,
            params,
            t: 0,
        })
    }

    pub fn params(&self) -> &PerformativeParams {
        &self.params
    }

    fn check_time(&self, t: usize) -> Result<()> {
        if t > self.t {
            Err(Error::OutOfSync {
                requested: t,
                current: self.t,
            })
        } else {
            Ok(())
        }
    }

    /// Decision-free part of the sample mean, `m + θ t w`.
    pub fn center(&self, t: usize) -> Vector {
        &self.m + &self.w * (self.params.theta * t as f64)
    }

    pub fn equilibrium(&self, t: usize) -> Vector {
        self.center(t) / (1.0 - self.params.epsilon)
    }

    fn mean(&self, t: usize, decision: &Vector) -> Vector {
        self.center(t) + decision * self.params.epsilon
    }

    fn floor_value(&self) -> f64 {
        let p = &self.params;
        0.5 * p.mu_reg * p.s * p.s * p.d as f64
    }
}

impl TimeVaryingProblem for Performative {
    fn name(&self) -> &'static str {
        "performative"
    }

    fn dim(&self) -> usize {
        self.params.d
    }

    fn constants(&self) -> ProblemConstants {
        let p = &self.params;
        ProblemConstants {
            mu: p.mu_reg,
            l: p.mu_reg,
            sigma: p.mu_reg * p.s * (p.d as f64).sqrt(),
            drift: p.theta / (1.0 - p.epsilon),
            gap_drift: if p.epsilon < 0.5 {
                p.theta / (1.0 - 2.0 * p.epsilon)
            } else {
                f64::INFINITY
            },
            gamma: p.epsilon * p.mu_reg,
        }
    }

    fn regularizer(&self) -> Regularizer {
        Regularizer::Zero
    }

    fn time(&self) -> usize {
        self.t
    }

    fn initial_point(&self) -> Vector {
        self.x0.clone()
    }

    fn advance(&mut self, _rng: &mut RngStream) -> Result<()> {
        self.t += 1;
        Ok(())
    }

    fn sample_gradient(&self, t: usize, x: &Vector, rng: &mut RngStream) -> Result<OracleSample> {
        check_current(t, self.t)?;
        check_dim(x, self.params.d)?;
        ensure_finite(x, "query point")?;
        let mut xi = self.mean(t, x);
        if self.params.s > 0.0 {
            xi += rng.gaussian_vector(self.params.d) * self.params.s;
        }
        Ok(OracleSample {
            gradient: (x - xi) * self.params.mu_reg,
            t,
        })
    }

    fn gradient(&self, t: usize, decision: &Vector, at: &Vector) -> Result<Vector> {
        self.check_time(t)?;
        check_dim(decision, self.params.d)?;
        check_dim(at, self.params.d)?;
        Ok((at - self.mean(t, decision)) * self.params.mu_reg)
    }

    fn loss(&self, t: usize, decision: &Vector, at: &Vector) -> Result<f64> {
        self.check_time(t)?;
        check_dim(decision, self.params.d)?;
        check_dim(at, self.params.d)?;
        Ok(0.5 * self.params.mu_reg * (at - self.mean(t, decision)).norm_squared() + self.floor_value())
    }

    fn best_response(&self, t: usize, decision: &Vector) -> Result<Vector> {
        self.check_time(t)?;
        check_dim(decision, self.params.d)?;
        Ok(self.mean(t, decision))
    }

    fn reference(&self, t: usize) -> Result<ReferenceSolution> {
        self.check_time(t)?;
        Ok(ReferenceSolution {
            point: self.equilibrium(t),
            value: self.floor_value(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::compute_equilibrium;

    fn planar(epsilon: f64, s: f64) -> Performative {
        Performative::with_center(
            PerformativeParams {
                d: 2,
                mu_reg: 1.0,
                epsilon,
                theta: 0.0,
                s,
            },
            Vector::from_vec(vec![1.0, 0.0]),
            Vector::from_vec(vec![0.0, 1.0]),
            Vector::zeros(2),
        )
        .unwrap()
    }

    #[test]
    fn rejects_unstable_feedback() {
        let p = PerformativeParams {
            epsilon: 1.0,
            ..Default::default()
        };
        assert!(matches!(Performative::new(p, 0), Err(Error::RegimeViolation(_))));
    }

    #[test]
    fn equilibrium_by_iteration() {
        let p = planar(0.5, 0.0);
        let eq = compute_equilibrium(&p, 0, 1e-12).unwrap();
        assert!((eq.solution.point - Vector::from_vec(vec![2.0, 0.0])).norm() < 1e-12);
        assert!(eq.ratios.iter().all(|r| *r <= 0.5 + 1e-6), "{:?}", eq.ratios);
        assert!(!eq.ratios.is_empty());
    }

    #[test]
    fn no_feedback_is_one_step() {
        let p = planar(0.0, 1.0);
        let eq = compute_equilibrium(&p, 0, 1e-12).unwrap();
        assert_eq!(eq.iterations, 1);
        assert_eq!(eq.solution.point, p.center(0));
    }

    #[test]
    fn equilibrium_drift_per_step() {
        let mut p = Performative::new(
            PerformativeParams {
                d: 4,
                epsilon: 0.3,
                theta: 0.2,
                ..Default::default()
            },
            6,
        )
        .unwrap();
        let mut rng = RngStream::new(6, 2);
        for t in 0..5 {
            p.advance(&mut rng).unwrap();
            let step = (p.equilibrium(t + 1) - p.equilibrium(t)).norm();
            assert!((step - 0.2 / 0.7).abs() < 1e-12);
            assert!((step - p.constants().drift).abs() < 1e-12);
        }
    }

    #[test]
    fn noiseless_gradient() {
        let p = planar(0.3, 0.0);
        let mut rng = RngStream::new(0, 1);
        let x = Vector::from_vec(vec![0.7, -2.0]);
        let g = p.sample_gradient(0, &x, &mut rng).unwrap().gradient;
        let expected = &x * 0.7 - p.center(0);
        assert!((g - expected).amax() < 1e-15);

        let q = planar(0.0, 0.0);
        let g = q.sample_gradient(0, &q.center(0), &mut rng).unwrap().gradient;
        assert_eq!(g, Vector::zeros(2));
    }

    #[test]
    fn noise_trace() {
        let p = Performative::new(
            PerformativeParams {
                d: 6,
                s: 1.0,
                ..Default::default()
            },
            1,
        )
        .unwrap();
        let mut rng = RngStream::new(1, 1);
        let x = p.initial_point();
        let mean = p.gradient(0, &x, &x).unwrap();
        let n = 10_000;
        let m2 = (0..n)
            .map(|_| (p.sample_gradient(0, &x, &mut rng).unwrap().gradient - &mean).norm_squared())
            .sum::<f64>()
            / n as f64;
        assert!((m2 / 6.0 - 1.0).abs() < 0.05, "{m2}");
    }

    #[test]
    fn reference_is_fixed_point() {
        let p = Performative::new(PerformativeParams::default(), 2).unwrap();
        let r = p.reference(0).unwrap();
        assert!(p.first_order_residual(0, &r.point).unwrap() < 1e-12);
        assert!((p.best_response(0, &r.point).unwrap() - &r.point).norm() < 1e-12);
        assert!(p.gap(0, &r.point).unwrap().abs() < 1e-12);
    }
}
