//! Critical step size, drift-to-noise regimes and step-decay schedules.
//!
//! Decay schedules start at `η₀ = 1/2L` and halve the distance to the
//! critical step every epoch. Epoch lengths use positive-part logarithms;
//! an epoch of length zero is kept in the table but contributes no steps.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    High,
    Low,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegimeReport {
    /// `Δ/σ` (infinite when `σ = 0`).
    pub ratio: f64,
    /// `√(μ/16L³)`.
    pub threshold: f64,
    pub regime: Regime,
    pub eta_star: f64,
    /// `E = η★σ²/μ + (Δ/(μη★))²`.
    pub error_dist: f64,
    /// `G = μE`.
    pub error_gap: f64,
    /// Set when `σ = 0`; the regime is then reported as high.
    pub degenerate: bool,
}

fn check_constants(mu: f64, l: f64, sigma: f64, drift: f64) -> Result<()> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::InvalidParameter(format!("strong convexity {mu} must be positive")));
    }
    if !(l > 0.0 && l.is_finite()) {
        return Err(Error::InvalidParameter(format!("smoothness {l} must be positive")));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidParameter(format!("noise level {sigma}")));
    }
    if !(drift > 0.0 && drift.is_finite()) {
        return Err(Error::InvalidParameter(format!("drift {drift} must be positive")));
    }
    Ok(())
}

/// `η★ = min{1/2L, (2Δ²/μσ²)^{1/3}}`; `1/2L` when `σ = 0`.
pub fn critical_step(mu: f64, l: f64, sigma: f64, drift: f64) -> Result<f64> {
    check_constants(mu, l, sigma, drift)?;
    let cap = 0.5 / l;
    if sigma == 0.0 {
        return Ok(cap);
    }
    Ok(cap.min((2.0 * drift * drift / (mu * sigma * sigma)).cbrt()))
}

/// Asymptotic distance error `ησ²/μ + (Δ/(μη))²` of a constant step.
pub fn asymptotic_error(mu: f64, sigma: f64, drift: f64, eta: f64) -> f64 {
    eta * sigma * sigma / mu + (drift / (mu * eta)).powi(2)
}

pub fn classify_regime(mu: f64, l: f64, sigma: f64, drift: f64) -> Result<RegimeReport> {
    let eta_star = critical_step(mu, l, sigma, drift)?;
    let threshold = (mu / (16.0 * l.powi(3))).sqrt();
    let degenerate = sigma == 0.0;
    let ratio = if degenerate { f64::INFINITY } else { drift / sigma };
    let regime = if ratio >= threshold { Regime::High } else { Regime::Low };
    let error_dist = asymptotic_error(mu, sigma, drift, eta_star);
    Ok(RegimeReport {
        ratio,
        threshold,
        regime,
        eta_star,
        error_dist,
        error_gap: mu * error_dist,
        degenerate,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    Constant,
    DecayDistExp,
    DecayDistHp,
    DecayGapExp,
    DecayGapHp,
}

impl ScheduleKind {
    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "constant" => Self::Constant,
            "decay_dist_exp" | "dist_exp" => Self::DecayDistExp,
            "decay_dist_hp" | "dist_hp" => Self::DecayDistHp,
            "decay_gap_exp" | "gap_exp" => Self::DecayGapExp,
            "decay_gap_hp" | "gap_hp" => Self::DecayGapHp,
            other => return Err(Error::Config(format!("unknown schedule family '{other}'"))),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Epoch {
    pub index: usize,
    pub eta: f64,
    pub len: usize,
}

/// Constants a decay schedule was built from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub mu_eff: f64,
    #[serde(rename = "L")]
    pub l: f64,
    pub sigma: f64,
    pub drift: f64,
    #[serde(rename = "D")]
    pub d: f64,
    pub delta: Option<f64>,
    pub c: Option<f64>,
    pub eta_star: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub kind: ScheduleKind,
    /// For `Constant`, one epoch whose length is ignored.
    pub epochs: Vec<Epoch>,
    pub provenance: Option<Provenance>,
    /// Union-bound failure probability `Kδ` of the high-probability gap schedule.
    pub failure_level: Option<f64>,
    /// Set when some epoch after the first has zero length.
    pub degenerate: bool,
}

impl Schedule {
    pub fn constant(eta: f64) -> Result<Self> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::InvalidStep(format!("constant step {eta}")));
        }
        Ok(Self {
            kind: ScheduleKind::Constant,
            epochs: vec![Epoch {
                index: 0,
                eta,
                len: 0,
            }],
            provenance: None,
            failure_level: None,
            degenerate: false,
        })
    }

    pub fn is_constant(&self) -> bool {
        self.kind == ScheduleKind::Constant
    }

    /// Total number of steps, `None` for a constant schedule.
    pub fn total_len(&self) -> Option<usize> {
        if self.is_constant() {
            None
        } else {
            Some(self.epochs.iter().map(|e| e.len).sum())
        }
    }

    /// Per-step sizes `η_0, …, η_{T−1}`.
    pub fn step_sizes(&self, horizon: usize) -> Result<Vec<f64>> {
        if self.is_constant() {
            return Ok(vec![self.epochs[0].eta; horizon]);
        }
        let total = self.total_len().unwrap_or(0);
        if total < horizon {
            return Err(Error::Config(format!(
                "schedule covers {total} steps but the horizon is {horizon}"
            )));
        }
        Ok(self
            .epochs
            .iter()
            .flat_map(|e| std::iter::repeat_n(e.eta, e.len))
            .take(horizon)
            .collect())
    }
}

fn pos_ln(x: f64) -> f64 {
    x.ln().max(0.0)
}

fn ceil_len(x: f64) -> usize {
    x.max(0.0).ceil() as usize
}

/// Number of epochs `K = 1 + ⌈log₂((1/L)(σ²μ/Δ²)^{1/3})⌉`.
pub fn epoch_count(mu: f64, l: f64, sigma: f64, drift: f64) -> usize {
    let inner = (sigma * sigma * mu / (drift * drift)).cbrt() / l;
    1 + inner.log2().ceil().max(0.0) as usize
}

/// `η_0 = 1/2L`, `η_k = (η_{k−1} + η★)/2`.
pub fn decay_steps(l: f64, eta_star: f64, k: usize) -> Vec<f64> {
    let mut etas = Vec::with_capacity(k);
    let mut eta = 0.5 / l;
    for _ in 0..k {
        etas.push(eta);
        eta = 0.5 * (eta + eta_star);
    }
    etas
}

struct DecayInput {
    kind: ScheduleKind,
    mu: f64,
    l: f64,
    sigma: f64,
    drift: f64,
    d: f64,
    delta: Option<f64>,
    c: Option<f64>,
}

fn build_decay(
    input: DecayInput,
    first_len: impl Fn(f64) -> usize,
    later_len: impl Fn(f64) -> usize,
) -> Result<Schedule> {
    let DecayInput {
        kind,
        mu,
        l,
        sigma,
        drift,
        d,
        delta,
        c,
    } = input;
    let report = classify_regime(mu, l, sigma, drift)?;
    if report.regime == Regime::High {
        return Err(Error::RegimeViolation(format!(
            "drift-to-noise ratio {:.6} is at or above {:.6}; use the constant step 1/2L instead",
            report.ratio, report.threshold
        )));
    }
    if !(d > 0.0 && d.is_finite()) {
        return Err(Error::InvalidParameter(format!("initial error bound D = {d}")));
    }
    let k = epoch_count(mu, l, sigma, drift);
    let etas = decay_steps(l, report.eta_star, k);
    let epochs: Vec<Epoch> = etas
        .iter()
        .enumerate()
        .map(|(index, &eta)| Epoch {
            index,
            eta,
            len: if index == 0 { first_len(eta) } else { later_len(eta) },
        })
        .collect();
    let degenerate = epochs.iter().skip(1).any(|e| e.len == 0);
    Ok(Schedule {
        kind,
        failure_level: match (kind, delta) {
            (ScheduleKind::DecayGapHp, Some(dl)) => Some(k as f64 * dl),
            _ => None,
        },
        epochs,
        provenance: Some(Provenance {
            mu_eff: mu,
            l,
            sigma,
            drift,
            d,
            delta,
            c,
            eta_star: report.eta_star,
        }),
        degenerate,
    })
}

/// Distance tracking in expectation:
/// `T₀ = ⌈(2L/μ) log(μLD/σ²)⁺⌉`, `T_k = ⌈log 4/(μη_k)⌉`.
pub fn decay_dist_exp(mu: f64, l: f64, sigma: f64, drift: f64, d: f64) -> Result<Schedule> {
    build_decay(
        DecayInput {
            kind: ScheduleKind::DecayDistExp,
            mu,
            l,
            sigma,
            drift,
            d,
            delta: None,
            c: None,
        },
        |_| ceil_len(2.0 * l / mu * pos_ln(mu * l * d / (sigma * sigma))),
        |eta| ceil_len(4f64.ln() / (mu * eta)),
    )
}

/// Distance tracking with high probability:
/// `T₀ = ⌈(4L/μ) log(μLD/σ²)⁺⌉`, `T_k = ⌈2 log 12/(μη_k)⌉`.
pub fn decay_dist_hp(mu: f64, l: f64, sigma: f64, drift: f64, d: f64) -> Result<Schedule> {
    build_decay(
        DecayInput {
            kind: ScheduleKind::DecayDistHp,
            mu,
            l,
            sigma,
            drift,
            d,
            delta: None,
            c: None,
        },
        |_| ceil_len(4.0 * l / mu * pos_ln(mu * l * d / (sigma * sigma))),
        |eta| ceil_len(2.0 * 12f64.ln() / (mu * eta)),
    )
}

/// Gap tracking in expectation with `μ̂`:
/// `T₀ = ⌈(4L/μ̂) log(LD/σ²)⁺⌉`, `T_k = ⌈2 log 12/(μ̂η_k)⌉`.
pub fn decay_gap_exp(mu_hat: f64, l: f64, sigma: f64, drift: f64, d_gap: f64) -> Result<Schedule> {
    build_decay(
        DecayInput {
            kind: ScheduleKind::DecayGapExp,
            mu: mu_hat,
            l,
            sigma,
            drift,
            d: d_gap,
            delta: None,
            c: None,
        },
        |_| ceil_len(4.0 * l / mu_hat * pos_ln(l * d_gap / (sigma * sigma))),
        |eta| ceil_len(2.0 * 12f64.ln() / (mu_hat * eta)),
    )
}

/// Gap tracking with high probability:
/// `T₀` as in [`decay_gap_exp`], `T_k = ⌈2 log(4c log(e/δ))⁺/(μ̂η_k)⌉`.
/// The reported failure level is `Kδ`; `δ` is not divided by `K` here.
pub fn decay_gap_hp(
    mu_hat: f64,
    l: f64,
    sigma: f64,
    drift: f64,
    d_gap: f64,
    delta: f64,
    c: f64,
) -> Result<Schedule> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter(format!("delta {delta} must lie in (0, 1)")));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidParameter(format!("constant c = {c} must be positive")));
    }
    let level = pos_ln(4.0 * c * (std::f64::consts::E / delta).ln());
    build_decay(
        DecayInput {
            kind: ScheduleKind::DecayGapHp,
            mu: mu_hat,
            l,
            sigma,
            drift,
            d: d_gap,
            delta: Some(delta),
            c: Some(c),
        },
        |_| ceil_len(4.0 * l / mu_hat * pos_ln(l * d_gap / (sigma * sigma))),
        |eta| ceil_len(2.0 * level / (mu_hat * eta)),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn critical_step_examples() {
        assert!((critical_step(1.0, 1.0, 10.0, 1.0).unwrap() - 0.27144).abs() < 1e-5);
        assert_eq!(critical_step(1.0, 1.0, 1e-3, 100.0).unwrap(), 0.5);
        assert!((critical_step(1.0, 1.0, 0.5, 0.05).unwrap() - 0.2714).abs() < 1e-4);
        assert_eq!(critical_step(1.0, 2.0, 0.0, 1.0).unwrap(), 0.25);
        assert!(matches!(critical_step(0.0, 1.0, 1.0, 1.0), Err(Error::InvalidParameter(_))));
        assert!(matches!(critical_step(-1.0, 1.0, 1.0, 1.0), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn regime_examples() {
        let r = classify_regime(1.0, 1.0, 10.0, 1.0).unwrap();
        assert_eq!(r.regime, Regime::Low);
        assert_eq!(r.threshold, 0.25);
        assert!((r.error_dist - 40.716).abs() < 1e-3);
        assert_eq!(r.error_gap, r.error_dist);

        assert_eq!(classify_regime(1.0, 1.0, 3.0, 3.0).unwrap().regime, Regime::High);
        let r = classify_regime(2.0, 3.0, 1.5, 0.2).unwrap();
        assert_eq!(r.error_gap, 2.0 * r.error_dist);

        let r = classify_regime(1.0, 1.0, 0.0, 1.0).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.regime, Regime::High);
    }

    #[test]
    fn dist_exp_example() {
        let s = decay_dist_exp(1.0, 1.0, 10.0, 1.0, 100.0).unwrap();
        assert_eq!(s.epochs.len(), 4);
        let expected = [0.5, 0.38572, 0.32858, 0.30001];
        for (e, want) in s.epochs.iter().zip(expected) {
            assert!((e.eta - want).abs() < 1e-4);
        }
        // D = σ²/(μL): log term vanishes, first epoch skipped
        assert_eq!(s.epochs[0].len, 0);
        let lens: Vec<usize> = s.epochs.iter().skip(1).map(|e| e.len).collect();
        assert_eq!(lens, vec![4, 5, 5]);
    }

    #[test]
    fn dist_hp_example() {
        let s = decay_dist_hp(1.0, 1.0, 10.0, 1.0, 1000.0).unwrap();
        let lens: Vec<usize> = s.epochs.iter().skip(1).map(|e| e.len).collect();
        assert_eq!(lens, vec![13, 16, 17]);
        let e = decay_dist_exp(1.0, 1.0, 10.0, 1.0, 1000.0).unwrap();
        assert_eq!(e.epochs.len(), s.epochs.len());
        // T₀: ⌈4 ln 10⌉ = 10 vs ⌈2 ln 10⌉ = 5
        assert_eq!(s.epochs[0].len, 10);
        assert_eq!(e.epochs[0].len, 5);
    }

    #[test]
    fn gap_examples() {
        let s = decay_gap_exp(1.0, 1.0, 10.0, 1.0, 50.0).unwrap();
        assert_eq!(s.epochs.len(), 4);
        assert!((s.provenance.unwrap().eta_star - 0.27144).abs() < 1e-5);
        assert_eq!(s.epochs[0].len, 0);
        let h = decay_dist_hp(1.0, 1.0, 10.0, 1.0, 50.0).unwrap();
        for (a, b) in s.epochs.iter().zip(&h.epochs).skip(1) {
            assert_eq!(a.len, b.len);
        }
    }

    #[test]
    fn gap_hp_epoch_length() {
        let level = (4.0 * (std::f64::consts::E / 0.05).ln()).ln();
        assert_eq!(ceil_len(2.0 * level / 0.3), 19);
        let s = decay_gap_hp(1.0, 1.0, 10.0, 1.0, 500.0, 0.05, 1.0).unwrap();
        assert!((s.failure_level.unwrap() - 4.0 * 0.05).abs() < 1e-15);
        assert!(!s.degenerate);
        // 4c log(e/δ) ≤ 1 makes every later epoch empty
        let s = decay_gap_hp(1.0, 1.0, 10.0, 1.0, 500.0, 0.5, 0.1).unwrap();
        assert!(s.degenerate);
        assert!(s.epochs.iter().skip(1).all(|e| e.len == 0));
        assert!(decay_gap_hp(1.0, 1.0, 10.0, 1.0, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn decay_refuses_high_regime() {
        assert!(matches!(
            decay_dist_exp(1.0, 1.0, 1.0, 1.0, 10.0),
            Err(Error::RegimeViolation(_))
        ));
    }

    #[test]
    fn step_sizes_expand_epochs() {
        let s = decay_dist_exp(1.0, 1.0, 10.0, 1.0, 100.0).unwrap();
        let steps = s.step_sizes(14).unwrap();
        assert_eq!(steps.len(), 14);
        assert_eq!(steps[0], s.epochs[1].eta);
        assert_eq!(steps[13], s.epochs[3].eta);
        assert!(matches!(s.step_sizes(15), Err(Error::Config(_))));
        assert_eq!(Schedule::constant(0.2).unwrap().step_sizes(3).unwrap(), vec![0.2; 3]);
    }

    #[test]
    fn midpoint_closed_form() {
        let eta_star = critical_step(1.0, 1.0, 10.0, 1.0).unwrap();
        for (k, eta) in decay_steps(1.0, eta_star, 12).iter().enumerate() {
            let closed = eta_star + (0.5 - eta_star) / 2f64.powi(k as i32);
            assert!((eta - closed).abs() <= 1e-15);
            assert!(*eta > eta_star);
        }
    }

    #[test]
    fn horizon_constant_sweep() {
        // T ≤ C [(L/μ) log(μLD/σ²)⁺ + σ²/(μ²E)] with C ≤ 20
        let mut rng = crate::RngStream::new(31, 0);
        let mut worst: f64 = 0.0;
        let mut count = 0;
        while count < 100 {
            let mu = 10f64.powf(rng.uniform() * 2.0 - 1.0);
            let l = mu * 10f64.powf(rng.uniform() * 2.0);
            let sigma = 10f64.powf(rng.uniform() * 2.0);
            let drift = 10f64.powf(rng.uniform() * 4.0 - 4.0);
            let d = 10f64.powf(rng.uniform() * 6.0 - 2.0);
            let Ok(s) = decay_dist_exp(mu, l, sigma, drift, d) else {
                continue;
            };
            count += 1;
            let e = (drift * sigma * sigma / (mu * mu)).powf(2.0 / 3.0);
            let scale = l / mu * pos_ln(mu * l * d / (sigma * sigma)) + sigma * sigma / (mu * mu * e);
            worst = worst.max(s.total_len().unwrap() as f64 / scale);
        }
        assert!(worst <= 20.0, "C = {worst}");
    }

    proptest! {
        #[test]
        fn critical_step_minimizes_error(
            mu in 0.1f64..10.0,
            lratio in 1.0f64..10.0,
            sigma in 0.1f64..100.0,
            drift in 0.001f64..10.0,
        ) {
            let l = mu * lratio;
            let eta = critical_step(mu, l, sigma, drift).unwrap();
            let best = asymptotic_error(mu, sigma, drift, eta);
            let cap = 0.5 / l;
            for i in 1..=10_000 {
                let grid = cap * i as f64 / 10_000.0;
                prop_assert!(asymptotic_error(mu, sigma, drift, grid) >= best * (1.0 - 1e-9));
            }
        }
    }
}
