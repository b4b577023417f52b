//! Computable tracking envelopes.
//!
//! All envelopes assume a constant step `η ≤ 1/2L`. `mu_eff` is the modulus
//! of the tracked quantity (`μ`, `μ̄` or `μ̂`); `mu` is the base modulus that
//! enters the averaging weight `ρ̂ = μ̂η/(2 − μη)`.

use serde::{Deserialize, Serialize};

use crate::schedules::Schedule;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundParams {
    pub mu: f64,
    pub mu_eff: f64,
    #[serde(rename = "L")]
    pub l: f64,
    pub eta: f64,
    pub sigma: f64,
    pub drift: f64,
    /// Initial squared distance or initial gap, depending on the family.
    pub d0: f64,
    pub delta: f64,
    pub c: f64,
    /// `‖x₀ − x̄₀‖²`, used by the precise high-probability gap envelope.
    pub x0_dist_sq: f64,
}

impl Default for BoundParams {
    fn default() -> Self {
        Self {
            mu: 1.0,
            mu_eff: 1.0,
            l: 1.0,
            eta: 0.5,
            sigma: 0.0,
            drift: 0.0,
            d0: 0.0,
            delta: 0.05,
            c: 1.0,
            x0_dist_sq: 0.0,
        }
    }
}

impl BoundParams {
    fn check(&self) -> Result<()> {
        let finite = [
            self.mu,
            self.mu_eff,
            self.l,
            self.eta,
            self.sigma,
            self.drift,
            self.d0,
            self.x0_dist_sq,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidParameter(format!("non-finite bound parameters {self:?}")));
        }
        if !(self.mu > 0.0 && self.mu_eff > 0.0 && self.l > 0.0 && self.eta > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "moduli and step must be positive: {self:?}"
            )));
        }
        if self.sigma < 0.0 || self.drift < 0.0 || self.d0 < 0.0 || self.x0_dist_sq < 0.0 {
            return Err(Error::InvalidParameter(format!("negative scale in {self:?}")));
        }
        if self.eta > 0.5 / self.l * (1.0 + 1e-12) {
            return Err(Error::OutOfRegime(format!(
                "step {} exceeds 1/2L = {}",
                self.eta,
                0.5 / self.l
            )));
        }
        Ok(())
    }

    fn check_hp(&self) -> Result<()> {
        self.check()?;
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidParameter(format!("delta {} must lie in (0, 1)", self.delta)));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::InvalidParameter(format!("constant c = {} must be positive", self.c)));
        }
        Ok(())
    }

    /// `ρ̂ = μ_eff η / (2 − μη)`.
    pub fn rho_hat(&self) -> f64 {
        self.mu_eff * self.eta / (2.0 - self.mu * self.eta)
    }

    fn log_e_over_delta(&self) -> f64 {
        (std::f64::consts::E / self.delta).ln()
    }
}

/// `(1−μη)^t D0 + 2(ησ²/μ + (Δ/(μη))²)`.
pub fn dist_exp_bound(p: &BoundParams, t: usize) -> Result<f64> {
    p.check()?;
    let m = p.mu_eff;
    let plateau = 2.0 * (p.eta * p.sigma * p.sigma / m + (p.drift / (m * p.eta)).powi(2));
    Ok((1.0 - m * p.eta).powi(t as i32) * p.d0 + plateau)
}

/// `(1−μη/2)^t D0 + (8η(cσ)²/μ + 4(Δ/(μη))²) log(e/δ)`.
pub fn dist_hp_bound(p: &BoundParams, t: usize) -> Result<f64> {
    p.check_hp()?;
    let m = p.mu_eff;
    let cs2 = (p.c * p.sigma).powi(2);
    let plateau = (8.0 * p.eta * cs2 / m + 4.0 * (p.drift / (m * p.eta)).powi(2)) * p.log_e_over_delta();
    Ok((1.0 - 0.5 * m * p.eta).powi(t as i32) * p.d0 + plateau)
}

/// `3(1−ρ̂)^t D0 + ησ² + 88Δ²/(μ̂η²)`.
pub fn gap_exp_bound(p: &BoundParams, t: usize) -> Result<f64> {
    p.check()?;
    let rho = p.rho_hat();
    Ok(3.0 * (1.0 - rho).powi(t as i32) * p.d0
        + p.eta * p.sigma * p.sigma
        + 88.0 * p.drift * p.drift / (p.mu_eff * p.eta * p.eta))
}

/// `β_t = (1−ρ̂)^{t−1}(‖x₀−x̄₀‖² + Δ²t²)·2(cσ)²/ρ̂ + 2η²(cσ)⁴/ρ̂² + 3μ̂Δ²η(cσ)²/ρ̂⁴`.
pub fn gap_hp_beta(p: &BoundParams, t: usize) -> Result<f64> {
    if t == 0 {
        return Err(Error::UndefinedBeta);
    }
    p.check_hp()?;
    let rho = p.rho_hat();
    let cs2 = (p.c * p.sigma).powi(2);
    let tf = t as f64;
    let d2 = p.drift * p.drift;
    Ok((1.0 - rho).powi(t as i32 - 1) * (p.x0_dist_sq + d2 * tf * tf) * 2.0 * cs2 / rho
        + 2.0 * p.eta * p.eta * cs2 * cs2 / (rho * rho)
        + 3.0 * p.mu_eff * d2 * p.eta * cs2 / rho.powi(4))
}

/// `3(1−ρ̂)^t D0 + 80Δ²/(μ̂η²) log(e/δ) + (η(cσ)² + 8Δ²/(μ̂η²) + 5ρ̂√(8β_t)) log(4e/δ)`.
pub fn gap_hp_bound_precise(p: &BoundParams, t: usize) -> Result<f64> {
    let beta = gap_hp_beta(p, t)?;
    let rho = p.rho_hat();
    let drift_term = p.drift * p.drift / (p.mu_eff * p.eta * p.eta);
    let cs2 = (p.c * p.sigma).powi(2);
    let log4 = (4.0 * std::f64::consts::E / p.delta).ln();
    Ok(3.0 * (1.0 - rho).powi(t as i32) * p.d0
        + 80.0 * drift_term * p.log_e_over_delta()
        + (p.eta * cs2 + 8.0 * drift_term + 5.0 * rho * (8.0 * beta).sqrt()) * log4)
}

/// `c((1−ρ̂)^t D0 + ησ² + Δ²/(μ̂η²)) log(e/δ)`.
pub fn gap_hp_bound_simple(p: &BoundParams, t: usize) -> Result<f64> {
    p.check_hp()?;
    let rho = p.rho_hat();
    Ok(p.c
        * ((1.0 - rho).powi(t as i32) * p.d0
            + p.eta * p.sigma * p.sigma
            + p.drift * p.drift / (p.mu_eff * p.eta * p.eta))
        * p.log_e_over_delta())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundFamily {
    DistExp,
    DistHp,
    GapExp,
    GapHp,
    GapHpSimple,
}

impl BoundFamily {
    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "dist_exp" => Self::DistExp,
            "dist_hp" => Self::DistHp,
            "gap_exp" => Self::GapExp,
            "gap_hp" | "gap_hp_precise" => Self::GapHp,
            "gap_hp_simple" => Self::GapHpSimple,
            other => return Err(Error::Config(format!("unknown bound family '{other}'"))),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::DistExp => "dist_exp",
            Self::DistHp => "dist_hp",
            Self::GapExp => "gap_exp",
            Self::GapHp => "gap_hp",
            Self::GapHpSimple => "gap_hp_simple",
        }
    }

    pub fn is_gap(&self) -> bool {
        !matches!(self, Self::DistExp | Self::DistHp)
    }

    pub fn is_high_probability(&self) -> bool {
        !matches!(self, Self::DistExp | Self::GapExp)
    }

    pub fn eval(&self, p: &BoundParams, t: usize) -> Result<f64> {
        match self {
            Self::DistExp => dist_exp_bound(p, t),
            Self::DistHp => dist_hp_bound(p, t),
            Self::GapExp => gap_exp_bound(p, t),
            Self::GapHp => gap_hp_bound_precise(p, t),
            Self::GapHpSimple => gap_hp_bound_simple(p, t),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundCurve {
    pub family: BoundFamily,
    pub params: BoundParams,
}

impl BoundCurve {
    pub fn eval(&self, t: usize) -> Result<f64> {
        self.family.eval(&self.params, t)
    }

    /// Values at `t = 0..=tmax`; `NaN` where the envelope is undefined
    /// (`t = 0` for the precise high-probability gap curve).
    pub fn sample(&self, tmax: usize) -> Result<Vec<f64>> {
        (0..=tmax)
            .map(|t| match self.eval(t) {
                Err(Error::UndefinedBeta) => Ok(f64::NAN),
                other => other,
            })
            .collect()
    }
}

/// Envelope along a schedule for `t = 0..=horizon`.
///
/// For a constant schedule this is [`BoundCurve::sample`]. For a decay
/// schedule each epoch restarts the envelope with its own step, taking the
/// envelope value at the epoch boundary as the new initial term. Epochs
/// whose step exceeds `1/2L` yield `NaN`.
pub fn schedule_curve(
    family: BoundFamily,
    base: &BoundParams,
    schedule: &Schedule,
    horizon: usize,
) -> Result<Vec<f64>> {
    if schedule.is_constant() {
        let params = BoundParams {
            eta: schedule.epochs[0].eta,
            ..*base
        };
        return match (BoundCurve { family, params }).sample(horizon) {
            Err(Error::OutOfRegime(_)) => Ok(vec![f64::NAN; horizon + 1]),
            other => other,
        };
    }
    let mut out = Vec::with_capacity(horizon + 1);
    let mut start = base.d0;
    out.push(start);
    for epoch in schedule.epochs.iter().filter(|e| e.len > 0) {
        if out.len() > horizon {
            break;
        }
        let params = BoundParams {
            eta: epoch.eta,
            d0: start,
            ..*base
        };
        for tau in 1..=epoch.len {
            if out.len() > horizon {
                break;
            }
            let v = match family.eval(&params, tau) {
                Ok(v) => v,
                Err(Error::OutOfRegime(_)) => f64::NAN,
                Err(e) => return Err(e),
            };
            out.push(v);
        }
        start = *out.last().expect("nonempty");
    }
    out.resize(horizon + 1, f64::NAN);
    Ok(out)
}
