//! Online proximal stochastic gradient methods and the trajectory runner.
//!
//! All four variants share the step `x ← prox_{ηr}(x − ηg)`. The averaged
//! variants additionally maintain `x̂ ← (1 − ρ̂)x̂ + ρ̂x` with
//! `ρ̂ = (μ − 2γ)η/(2 − μη)`; the time-only variants use `γ = 0`.

use serde::{Deserialize, Serialize};

use crate::mathkit::{RngStream, Vector};
use crate::problems::TimeVaryingProblem;
use crate::prox::Regularizer;
use crate::schedules::Schedule;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgorithmKind {
    Psg,
    AveragedPsg,
    Dpsg,
    AveragedDpsg,
}

impl AlgorithmKind {
    pub fn is_averaged(&self) -> bool {
        matches!(self, Self::AveragedPsg | Self::AveragedDpsg)
    }

    pub fn is_decision_dependent(&self) -> bool {
        matches!(self, Self::Dpsg | Self::AveragedDpsg)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Psg => "psg",
            Self::AveragedPsg => "averaged_psg",
            Self::Dpsg => "dpsg",
            Self::AveragedDpsg => "averaged_dpsg",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlgoState {
    pub x: Vector,
    pub x_hat: Vector,
    pub t: usize,
    pub mu: f64,
    /// Decision sensitivity; zero for the time-only variants.
    pub gamma: f64,
}

impl AlgoState {
    pub fn new(x0: Vector, mu: f64, gamma: f64) -> Self {
        Self {
            x_hat: x0.clone(),
            x: x0,
            t: 0,
            mu,
            gamma,
        }
    }
}

/// `ρ̂ = (μ − 2γ)η/(2 − μη)`; requires `0 < η < 1/μ` and `0 ≤ γ < μ/2`.
pub fn averaging_weight(mu: f64, gamma: f64, eta: f64) -> Result<f64> {
    if !(eta > 0.0 && eta * mu < 1.0) {
        return Err(Error::InvalidStep(format!(
            "averaging needs 0 < eta < 1/mu, got eta={eta}, mu={mu}"
        )));
    }
    if !(gamma >= 0.0 && 2.0 * gamma < mu) {
        return Err(Error::RegimeViolation(format!(
            "averaging needs 0 <= gamma < mu/2, got gamma={gamma}, mu={mu}"
        )));
    }
    Ok((mu - 2.0 * gamma) * eta / (2.0 - mu * eta))
}

fn prox_step(state: &AlgoState, g: &Vector, eta: f64, reg: &Regularizer) -> Result<Vector> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::InvalidStep(format!("step {eta}")));
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence(format!("non-finite gradient at t={}", state.t)));
    }
    if g.len() != state.x.len() {
        return Err(Error::InvalidShape(format!(
            "gradient has dimension {}, iterate {}",
            g.len(),
            state.x.len()
        )));
    }
    let next = reg.prox(eta, &(&state.x - g * eta))?;
    if next.iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence(format!("iterate overflowed at t={}", state.t)));
    }
    Ok(next)
}

/// `x_{t+1} = prox_{ηr}(x_t − ηg)`.
pub fn psg_step(state: &AlgoState, g: &Vector, eta: f64, reg: &Regularizer) -> Result<AlgoState> {
    let x = prox_step(state, g, eta, reg)?;
    Ok(AlgoState {
        x,
        x_hat: state.x_hat.clone(),
        t: state.t + 1,
        mu: state.mu,
        gamma: state.gamma,
    })
}

fn averaged(state: &AlgoState, g: &Vector, eta: f64, reg: &Regularizer, gamma: f64) -> Result<AlgoState> {
    let w = averaging_weight(state.mu, gamma, eta)?;
    let mut next = psg_step(state, g, eta, reg)?;
    next.x_hat = &state.x_hat * (1.0 - w) + &next.x * w;
    Ok(next)
}

/// Proximal step followed by `x̂_{t+1} = (1−w)x̂_t + w x_{t+1}`, `w = μη/(2−μη)`.
pub fn averaged_psg_step(state: &AlgoState, g: &Vector, eta: f64, reg: &Regularizer) -> Result<AlgoState> {
    averaged(state, g, eta, reg, 0.0)
}

/// Same update as [`psg_step`]; `g` is sampled at the deployed decision.
pub fn dpsg_step(state: &AlgoState, g: &Vector, eta: f64, reg: &Regularizer) -> Result<AlgoState> {
    psg_step(state, g, eta, reg)
}

/// Averaged step with weight `(μ − 2γ)η/(2 − μη)`.
pub fn averaged_dpsg_step(state: &AlgoState, g: &Vector, eta: f64, reg: &Regularizer) -> Result<AlgoState> {
    averaged(state, g, eta, reg, state.gamma)
}

pub fn step(kind: AlgorithmKind, state: &AlgoState, g: &Vector, eta: f64, reg: &Regularizer) -> Result<AlgoState> {
    match kind {
        AlgorithmKind::Psg => psg_step(state, g, eta, reg),
        AlgorithmKind::AveragedPsg => averaged_psg_step(state, g, eta, reg),
        AlgorithmKind::Dpsg => dpsg_step(state, g, eta, reg),
        AlgorithmKind::AveragedDpsg => averaged_dpsg_step(state, g, eta, reg),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub t: usize,
    pub x: Vector,
    pub x_hat: Vector,
    /// `‖x_t − ref_t‖²`.
    pub dist_sq: f64,
    /// Tracked-objective gap at `x̂_t` (averaged kinds) or `x_t`.
    pub gap: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub kind: AlgorithmKind,
    pub records: Vec<StepRecord>,
    pub step_sizes: Vec<f64>,
    pub drift_stream: u64,
    pub oracle_stream: u64,
}

impl Trajectory {
    pub fn dist_sq(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.dist_sq).collect()
    }

    pub fn gaps(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.gap).collect()
    }
}

/// Independent drift and oracle streams of one Monte-Carlo trial. Trial
/// `k` uses stream ids `2(k+1)` (drift) and `2(k+1)+1` (oracle); id 0 is
/// reserved for building the problem instance.
#[derive(Clone, Debug)]
pub struct TrialStreams {
    pub drift: RngStream,
    pub oracle: RngStream,
}

impl TrialStreams {
    pub fn for_trial(seed: u64, trial: u64) -> Self {
        let base = (trial + 1) << 1;
        Self {
            drift: RngStream::new(seed, base),
            oracle: RngStream::new(seed, base | 1),
        }
    }
}

fn record(problem: &dyn TimeVaryingProblem, kind: AlgorithmKind, state: &AlgoState) -> Result<StepRecord> {
    let t = state.t;
    let reference = problem.reference(t)?;
    let dist_sq = (&state.x - &reference.point).norm_squared();
    let at = if kind.is_averaged() { &state.x_hat } else { &state.x };
    let gap = problem.loss(t, &reference.point, at)? - reference.value;
    Ok(StepRecord {
        t,
        x: state.x.clone(),
        x_hat: state.x_hat.clone(),
        dist_sq,
        gap,
    })
}

/// Runs `horizon` steps: sample at time `t`, step, advance the drift,
/// record against the time-`t+1` reference.
pub fn run(
    problem: &mut dyn TimeVaryingProblem,
    kind: AlgorithmKind,
    schedule: &Schedule,
    horizon: usize,
    streams: &mut TrialStreams,
) -> Result<Trajectory> {
    let c = problem.constants();
    if !kind.is_decision_dependent() && c.gamma > 0.0 {
        return Err(Error::Config(format!(
            "{} ignores decision dependence but the problem declares gamma = {}",
            kind.name(),
            c.gamma
        )));
    }
    if problem.time() != 0 {
        return Err(Error::OutOfSync {
            requested: 0,
            current: problem.time(),
        });
    }
    let steps = schedule.step_sizes(horizon)?;
    let gamma = if kind.is_decision_dependent() { c.gamma } else { 0.0 };
    let reg = problem.regularizer();
    let mut state = AlgoState::new(problem.initial_point(), c.mu, gamma);
    let mut records = Vec::with_capacity(horizon + 1);
    records.push(record(problem, kind, &state).map_err(|e| e.at_step(0))?);
    for (t, &eta) in steps.iter().enumerate() {
        let advance = |problem: &mut dyn TimeVaryingProblem, state: &AlgoState, streams: &mut TrialStreams| {
            let g = problem.sample_gradient(t, &state.x, &mut streams.oracle)?;
            let next = step(kind, state, &g.gradient, eta, &reg)?;
            problem.advance(&mut streams.drift)?;
            let rec = record(problem, kind, &next)?;
            Ok::<_, Error>((next, rec))
        };
        let (next, rec) = advance(problem, &state, streams).map_err(|e| e.at_step(t))?;
        state = next;
        records.push(rec);
    }
    Ok(Trajectory {
        kind,
        records,
        step_sizes: steps,
        drift_stream: streams.drift.stream_id(),
        oracle_stream: streams.oracle.stream_id(),
    })
}

/// `x̂_T = Γ̂_T (x₀ + Σ_{i=1}^T ρ̂_i/Γ̂_i · x_i)` with `Γ̂_t = Π_{i≤t}(1 − ρ̂_i)`.
pub fn closed_form_average(iterates: &[Vector], weights: &[f64]) -> Result<Vector> {
    if iterates.len() != weights.len() + 1 {
        return Err(Error::InvalidShape(format!(
            "{} iterates need {} weights, got {}",
            iterates.len(),
            iterates.len().saturating_sub(1),
            weights.len()
        )));
    }
    let mut gamma = 1.0;
    let mut acc = iterates[0].clone();
    for (x, rho) in iterates[1..].iter().zip(weights) {
        gamma *= 1.0 - rho;
        acc += x * (rho / gamma);
    }
    Ok(acc * gamma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{
        LeastSquares, LeastSquaresParams, Performative, PerformativeParams, SparseLeastSquares, SparseParams,
    };
    use proptest::prelude::*;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_vec(xs.to_vec())
    }

    #[test]
    fn plain_steps() {
        let s = AlgoState::new(v(&[1.0, 2.0]), 1.0, 0.0);
        let n = psg_step(&s, &Vector::zeros(2), 0.3, &Regularizer::Zero).unwrap();
        assert_eq!(n.x, s.x);
        assert_eq!(n.t, 1);
        let g = v(&[0.5, -1.0]);
        let n = psg_step(&s, &g, 0.3, &Regularizer::Zero).unwrap();
        assert_eq!(n.x, &s.x - &g * 0.3);
        assert!(matches!(
            psg_step(&s, &v(&[f64::NAN, 0.0]), 0.3, &Regularizer::Zero),
            Err(Error::Divergence(_))
        ));
    }

    #[test]
    fn quadratic_hand_iteration() {
        let mut s = AlgoState::new(v(&[1.0, 0.0]), 1.0, 0.0);
        let mut xs = vec![];
        for _ in 0..2 {
            let g = s.x.clone();
            s = psg_step(&s, &g, 0.5, &Regularizer::Zero).unwrap();
            xs.push(s.x.clone());
        }
        assert_eq!(xs, vec![v(&[0.5, 0.0]), v(&[0.25, 0.0])]);
    }

    #[test]
    fn weights() {
        assert!((averaging_weight(1.0, 0.0, 0.5).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!((averaging_weight(1.0, 0.25, 0.5).unwrap() - 1.0 / 6.0).abs() < 1e-15);
        assert!(matches!(averaging_weight(1.0, 0.0, 1.0), Err(Error::InvalidStep(_))));
        assert!(matches!(averaging_weight(1.0, 0.5, 0.5), Err(Error::RegimeViolation(_))));
        let s = AlgoState::new(v(&[1.0]), 1.0, 0.5);
        assert!(matches!(
            averaged_dpsg_step(&s, &v(&[0.0]), 0.5, &Regularizer::Zero),
            Err(Error::RegimeViolation(_))
        ));
    }

    #[test]
    fn average_fixed_point() {
        let mut s = AlgoState::new(v(&[1.0, -1.0]), 1.0, 0.0);
        s.x_hat = v(&[1.0, -1.0]);
        let n = averaged_psg_step(&s, &Vector::zeros(2), 0.5, &Regularizer::Zero).unwrap();
        assert_eq!(n.x_hat, s.x_hat);
    }

    fn ls(sigma: f64, delta: f64, seed: u64) -> LeastSquares {
        LeastSquares::new(
            LeastSquaresParams {
                d: 6,
                n: 10,
                mu: 0.5,
                l: 2.0,
                sigma,
                delta_drift: delta,
            },
            seed,
        )
        .unwrap()
    }

    #[test]
    fn empty_horizon() {
        let mut p = ls(1.0, 1.0, 1);
        let traj = run(
            &mut p,
            AlgorithmKind::Psg,
            &Schedule::constant(0.1).unwrap(),
            0,
            &mut TrialStreams::for_trial(1, 0),
        )
        .unwrap();
        assert_eq!(traj.records.len(), 1);
        let x0 = p.initial_point();
        assert_eq!(traj.records[0].dist_sq, (x0 - p.minimizer(0).unwrap()).norm_squared());
    }

    #[test]
    fn deterministic_replay() {
        let go = || {
            let mut p = ls(1.0, 1.0, 2);
            run(
                &mut p,
                AlgorithmKind::AveragedPsg,
                &Schedule::constant(0.2).unwrap(),
                40,
                &mut TrialStreams::for_trial(2, 3),
            )
            .unwrap()
        };
        assert_eq!(go(), go());
    }

    #[test]
    fn averaging_matches_closed_form() {
        for sched in [
            Schedule::constant(0.25).unwrap(),
            crate::schedules::decay_dist_exp(0.5, 2.0, 10.0, 0.1, 1e3).unwrap(),
        ] {
            let mut p = ls(1.0, 0.5, 4);
            let horizon = 50.min(sched.total_len().unwrap_or(50));
            let traj = run(&mut p, AlgorithmKind::AveragedPsg, &sched, horizon, &mut TrialStreams::for_trial(4, 0))
                .unwrap();
            let xs: Vec<Vector> = traj.records.iter().map(|r| r.x.clone()).collect();
            let ws: Vec<f64> = traj
                .step_sizes
                .iter()
                .map(|eta| averaging_weight(0.5, 0.0, *eta).unwrap())
                .collect();
            let closed = closed_form_average(&xs, &ws).unwrap();
            assert!((closed - &traj.records[horizon].x_hat).norm() < 1e-10);
        }
    }

    #[test]
    fn zero_gamma_reduction() {
        for (a, b) in [
            (AlgorithmKind::Psg, AlgorithmKind::Dpsg),
            (AlgorithmKind::AveragedPsg, AlgorithmKind::AveragedDpsg),
        ] {
            let go = |kind| {
                let mut p = ls(2.0, 1.0, 5);
                run(&mut p, kind, &Schedule::constant(0.2).unwrap(), 30, &mut TrialStreams::for_trial(5, 1)).unwrap()
            };
            let (ta, tb) = (go(a), go(b));
            assert_eq!(ta.records, tb.records);
        }
    }

    #[test]
    fn time_only_kind_rejects_feedback() {
        let mut p = Performative::new(PerformativeParams::default(), 0).unwrap();
        let err = run(&mut p, AlgorithmKind::Psg, &Schedule::constant(0.1).unwrap(), 5, &mut TrialStreams::for_trial(0, 0));
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn noiseless_contraction() {
        let mut p = ls(0.0, 0.0, 6);
        let eta = 0.25; // 1/2L
        let traj = run(&mut p, AlgorithmKind::Psg, &Schedule::constant(eta).unwrap(), 60, &mut TrialStreams::for_trial(6, 0))
            .unwrap();
        let d0 = traj.records[0].dist_sq;
        for r in &traj.records {
            assert!(r.dist_sq <= (1.0 - 0.5 * eta).powi(r.t as i32) * d0 * (1.0 + 1e-9));
        }
    }

    #[test]
    fn performative_noiseless_contraction() {
        let mut p = Performative::with_center(
            PerformativeParams {
                d: 3,
                mu_reg: 1.0,
                epsilon: 0.5,
                theta: 0.0,
                s: 0.0,
            },
            v(&[1.0, -1.0, 0.5]),
            v(&[1.0, 0.0, 0.0]),
            v(&[5.0, 5.0, 5.0]),
        )
        .unwrap();
        let eta = 0.5;
        let traj = run(&mut p, AlgorithmKind::Dpsg, &Schedule::constant(eta).unwrap(), 40, &mut TrialStreams::for_trial(0, 0))
            .unwrap();
        let bound = 1.0 - 0.5 * eta / 2.0 + 1e-6;
        for w in traj.records.windows(2) {
            if w[0].dist_sq > 1e-20 {
                assert!((w[1].dist_sq / w[0].dist_sq).sqrt() <= bound);
            }
        }
    }

    #[test]
    fn feasibility_on_ball() {
        let mut p = SparseLeastSquares::new(
            SparseParams {
                d: 12,
                n: 20,
                sigma: 3.0,
                delta_drift: 0.5,
                ..Default::default()
            },
            7,
        )
        .unwrap();
        let traj = run(
            &mut p,
            AlgorithmKind::AveragedPsg,
            &Schedule::constant(0.5).unwrap(),
            100,
            &mut TrialStreams::for_trial(7, 0),
        )
        .unwrap();
        for r in &traj.records {
            assert!(r.x.lp_norm(1) <= 1.0 + 1e-12);
            assert!(r.x_hat.lp_norm(1) <= 1.0 + 1e-12);
            assert!(r.gap >= -1e-9);
        }
    }

    proptest! {
        #[test]
        fn closed_form_random(seq in prop::collection::vec((-3.0f64..3.0, 0.01f64..0.49), 1..60)) {
            let mut s = AlgoState::new(v(&[0.7]), 1.0, 0.0);
            let mut xs = vec![s.x.clone()];
            let mut ws = vec![];
            for (g, eta) in seq {
                s = averaged_psg_step(&s, &v(&[g]), eta, &Regularizer::Zero).unwrap();
                xs.push(s.x.clone());
                ws.push(averaging_weight(1.0, 0.0, eta).unwrap());
            }
            let closed = closed_form_average(&xs, &ws).unwrap();
            prop_assert!((closed - &s.x_hat).norm() <= 1e-10 * s.x_hat.norm().max(1.0));
        }
    }
}
