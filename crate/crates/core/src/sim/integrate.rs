//! Fixed-step RK4 on the augmented system `ẋ = f(x, κ(x, g))`, `ġ = ρ*(x, g)`.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::governor::ReferenceRate;
use crate::plant::JointState;
use crate::sim::log::{StageStats, StepRecord, TrajectoryLog};
use crate::sim::scenario::{RhoEvaluation, Scenario};

/// Plant state together with the applied reference.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedState {
    pub state: JointState,
    pub g: DVector<f64>,
}

impl AugmentedState {
    pub fn initial(scenario: &Scenario) -> Self {
        Self {
            state: scenario.initial_state.clone(),
            g: scenario.initial_reference.clone(),
        }
    }

    fn is_finite(&self) -> bool {
        self.state.is_finite() && self.g.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone)]
struct Derivative {
    state: JointState,
    g: DVector<f64>,
}

impl AugmentedState {
    fn advance(&self, h: f64, d: &Derivative) -> AugmentedState {
        AugmentedState {
            state: self.state.axpy(h, &d.state),
            g: &self.g + &d.g * h,
        }
    }
}

impl Scenario {
    /// `ρ*` at `aug`, or a zero rate (with diagnostics) when the governor is disabled.
    pub fn reference_rate(&self, aug: &AugmentedState, t: f64) -> Result<ReferenceRate> {
        if self.governor_enabled {
            return self.governor.reference_rate(&aug.state, &aug.g, t);
        }
        let eval = self.barrier().evaluate(&aug.state, &aug.g)?;
        let (a, b) = self.barrier().coefficients(&eval);
        Ok(ReferenceRate {
            rho: DVector::zeros(aug.g.len()),
            constraint_active: false,
            feasibility_slack: b,
            projection_residual: 0.0,
            a,
            b,
            barrier: eval,
        })
    }
}

fn derivative(scenario: &Scenario, aug: &AugmentedState, rho: DVector<f64>) -> Result<Derivative> {
    Ok(Derivative {
        state: scenario.model().state_derivative(&aug.state, &aug.g)?,
        g: rho,
    })
}

fn stage_rate(
    scenario: &Scenario,
    aug: &AugmentedState,
    held: &DVector<f64>,
    stats: &mut StageStats,
) -> Result<DVector<f64>> {
    match scenario.rho_evaluation {
        RhoEvaluation::Zoh => Ok(held.clone()),
        RhoEvaluation::Stage => {
            if !scenario.governor_enabled {
                return Ok(DVector::zeros(aug.g.len()));
            }
            // Stage points are not trajectory states, so no breach check here.
            let r = scenario.governor.unchecked_rate(&aug.state, &aug.g)?;
            stats.observe(r.feasibility_slack, r.projection_residual, r.barrier.h_value, r.b);
            Ok(r.rho)
        }
    }
}

/// Completes an RK4 step whose first-stage rate `first` is already known.
fn rk4_from(
    scenario: &Scenario,
    aug: &AugmentedState,
    t: f64,
    dt: f64,
    first: &ReferenceRate,
    stats: &mut StageStats,
) -> Result<AugmentedState> {
    let held = &first.rho;
    let k1 = derivative(scenario, aug, first.rho.clone())?;
    let a2 = aug.advance(0.5 * dt, &k1);
    let k2 = derivative(scenario, &a2, stage_rate(scenario, &a2, held, stats)?)?;
    let a3 = aug.advance(0.5 * dt, &k2);
    let k3 = derivative(scenario, &a3, stage_rate(scenario, &a3, held, stats)?)?;
    let a4 = aug.advance(dt, &k3);
    let k4 = derivative(scenario, &a4, stage_rate(scenario, &a4, held, stats)?)?;
    let next = AugmentedState {
        state: JointState {
            q: &aug.state.q + (&k1.state.q + (&k2.state.q + &k3.state.q) * 2.0 + &k4.state.q) * (dt / 6.0),
            qdot: &aug.state.qdot
                + (&k1.state.qdot + (&k2.state.qdot + &k3.state.qdot) * 2.0 + &k4.state.qdot) * (dt / 6.0),
        },
        g: &aug.g + (&k1.g + (&k2.g + &k3.g) * 2.0 + &k4.g) * (dt / 6.0),
    };
    if !next.is_finite() {
        return Err(Error::NumericalSingularity(format!(
            "non-finite state after step at t = {t}"
        )));
    }
    Ok(next)
}

/// One classical RK4 step of length `dt` starting at time `t`.
pub fn rk4_step(aug: &AugmentedState, t: f64, dt: f64, scenario: &Scenario) -> Result<AugmentedState> {
    if !(dt > 0.0) {
        return Err(Error::contract(format!("step size must be positive, got {dt}")));
    }
    let mut stats = StageStats::default();
    let first = scenario.reference_rate(aug, t)?;
    rk4_from(scenario, aug, t, dt, &first, &mut stats)
}

fn record(t: f64, aug: &AugmentedState, rate: &ReferenceRate) -> StepRecord {
    let e = &rate.barrier;
    StepRecord {
        t,
        q: aug.state.q.iter().copied().collect(),
        qdot: aug.state.qdot.iter().copied().collect(),
        g: aug.g.iter().copied().collect(),
        rho: rate.rho.iter().copied().collect(),
        h: e.h_value,
        delta_arm: e.delta_arm(),
        h_arm: e.h_arm(),
        v: e.lyapunov,
        min_dist: e.min_point_distance,
        feas_slack: rate.feasibility_slack,
        proj_residual: rate.projection_residual,
        grad_g_h_norm: e.grad_g.norm(),
    }
}

/// Result of a single run: the log up to the last successful sample and the
/// error that stopped it early, if any.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub log: TrajectoryLog,
    pub error: Option<Error>,
}

impl RunOutcome {
    pub fn final_state(&self) -> Option<&crate::sim::log::StepRecord> {
        self.log.last()
    }
}

/// Integrates the scenario over its full horizon, logging every step.
pub fn run_scenario(scenario: &Scenario) -> RunOutcome {
    let n = scenario.model().dof();
    let steps = scenario.step_count();
    let dt = scenario.dt;
    let mut log = TrajectoryLog::new(n);
    log.records.reserve(steps + 1);
    let mut stats = StageStats::default();
    let mut aug = AugmentedState::initial(scenario);

    let mut error = None;
    for k in 0..=steps {
        let t = k as f64 * dt;
        let rate = match scenario.reference_rate(&aug, t) {
            Ok(r) => r,
            Err(e) => {
                error = Some(e);
                break;
            }
        };
        if scenario.governor_enabled {
            stats.observe(
                rate.feasibility_slack,
                rate.projection_residual,
                rate.barrier.h_value,
                rate.b,
            );
        }
        log.records.push(record(t, &aug, &rate));
        if k == steps {
            break;
        }
        match rk4_from(scenario, &aug, t, dt, &rate, &mut stats) {
            Ok(next) => aug = next,
            Err(e) => {
                error = Some(e);
                break;
            }
        }
    }
    if scenario.governor_enabled {
        log.stage_stats = Some(stats);
    }
    RunOutcome { log, error }
}
