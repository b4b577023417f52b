//! Proximal operators for the supported regularizers.

use serde::{Deserialize, Serialize};

use crate::mathkit::{ensure_finite, Vector};
use crate::{Error, Result};

/// Relative slack used when testing membership in an l1-ball. Projection
/// leaves points within this slack untouched, which keeps it idempotent
/// despite rounding in the threshold arithmetic.
const BALL_SLACK: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Regularizer {
    Zero,
    /// `λ‖u‖₁`.
    L1 { lambda: f64 },
    /// `(λ/2)‖u‖²`.
    SquaredL2 { lambda: f64 },
    /// Indicator of `{‖u‖₁ ≤ radius}`.
    L1Ball { radius: f64 },
}

impl Regularizer {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Regularizer::Zero => Ok(()),
            Regularizer::L1 { lambda } | Regularizer::SquaredL2 { lambda } => {
                if lambda >= 0.0 && lambda.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter(format!("regularizer weight {lambda}")))
                }
            }
            Regularizer::L1Ball { radius } => {
                if radius > 0.0 && radius.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter(format!("l1-ball radius {radius}")))
                }
            }
        }
    }

    /// `r(u)`; the ball indicator is `+∞` outside a `1e-9` relative slack.
    pub fn value(&self, u: &Vector) -> f64 {
        match *self {
            Regularizer::Zero => 0.0,
            Regularizer::L1 { lambda } => lambda * u.lp_norm(1),
            Regularizer::SquaredL2 { lambda } => 0.5 * lambda * u.norm_squared(),
            Regularizer::L1Ball { radius } => {
                if u.lp_norm(1) <= radius * (1.0 + 1e-9) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    /// `argmin_u r(u) + ‖u − x‖² / (2 step)`.
    pub fn prox(&self, step: f64, x: &Vector) -> Result<Vector> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::InvalidStep(format!("prox step {step}")));
        }
        ensure_finite(x, "prox input")?;
        self.validate()?;
        Ok(match *self {
            Regularizer::Zero => x.clone(),
            Regularizer::L1 { lambda } => soft_threshold(x, step * lambda),
            Regularizer::SquaredL2 { lambda } => x / (1.0 + step * lambda),
            Regularizer::L1Ball { radius } => project_l1_ball(x, radius),
        })
    }

    /// True when the regularizer is an indicator (prox independent of step).
    pub fn is_indicator(&self) -> bool {
        matches!(self, Regularizer::L1Ball { .. })
    }
}

/// Componentwise `sign(x)·max(|x| − τ, 0)`; exactly `|x| = τ` maps to zero.
pub fn soft_threshold(x: &Vector, tau: f64) -> Vector {
    x.map(|v| {
        if v.abs() <= tau {
            0.0
        } else {
            v - tau * v.signum()
        }
    })
}

/// Euclidean projection onto `{‖u‖₁ ≤ radius}` by sorting magnitudes and
/// locating the soft-threshold level.
pub fn project_l1_ball(x: &Vector, radius: f64) -> Vector {
    if x.lp_norm(1) <= radius * (1.0 + BALL_SLACK) {
        return x.clone();
    }
    let mut mags: Vec<f64> = x.iter().map(|v| v.abs()).collect();
    mags.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (k, m) in mags.iter().enumerate() {
        cumsum += m;
        let candidate = (cumsum - radius) / (k + 1) as f64;
        if *m > candidate {
            theta = candidate;
        } else {
            break;
        }
    }
    soft_threshold(x, theta.max(0.0))
}
