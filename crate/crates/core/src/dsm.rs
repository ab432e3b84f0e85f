//! Dynamic safety margins.
//!
//! A DSM measures how much Lyapunov energy is left before the transient of the
//! prestabilized loop, with the reference frozen, could violate a constraint.
//! The generic form is the softmin of a threshold margin `m1 = Γ*(g) - V` and an
//! optional stability margin `m2 = (1-ε)Γ̄ - V`. For the planar arm `Γ*` has a
//! closed form built from the smooth arm-obstacle distance and the kinematic
//! Lipschitz bound.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::plant::{ArmModel, JointState, Obstacle};
use crate::smoothmin::{softmin, SoftminResult};

/// Stability-margin branch, only needed when `V` is valid on a bounded region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityMargin {
    /// Margin fraction ε in (0, 1).
    pub epsilon: f64,
    /// User-supplied stability level Γ̄ (energy units), held constant in `g`.
    pub gamma_bar: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DsmConfig {
    pub beta_delta: f64,
    /// `None` uses `Δ = m1` directly.
    pub stability_margin: Option<StabilityMargin>,
}

impl DsmConfig {
    pub fn new(beta_delta: f64, stability_margin: Option<StabilityMargin>) -> Result<Self> {
        if !(beta_delta > 0.0 && beta_delta.is_finite()) {
            return Err(Error::contract(format!(
                "beta_delta must be positive, got {beta_delta}"
            )));
        }
        if let Some(sm) = stability_margin {
            if !(sm.epsilon > 0.0 && sm.epsilon < 1.0) {
                return Err(Error::contract(format!(
                    "epsilon must lie in (0, 1), got {}",
                    sm.epsilon
                )));
            }
            if !(sm.gamma_bar >= 0.0 && sm.gamma_bar.is_finite()) {
                return Err(Error::contract(format!(
                    "gamma_bar must be finite and >= 0, got {}",
                    sm.gamma_bar
                )));
            }
        }
        Ok(Self {
            beta_delta,
            stability_margin,
        })
    }

    /// Threshold margin only.
    pub fn threshold_only(beta_delta: f64) -> Self {
        Self {
            beta_delta,
            stability_margin: None,
        }
    }

    pub fn stability_margin_enabled(&self) -> bool {
        self.stability_margin.is_some()
    }
}

/// `m2 = (1 - ε) Γ̄ - V`.
pub fn stability_margin(v: f64, margin: &StabilityMargin) -> f64 {
    (1.0 - margin.epsilon) * margin.gamma_bar - v
}

fn compose(m1: f64, m2: Option<f64>, config: &DsmConfig) -> Result<SoftminResult> {
    match (m2, config.stability_margin_enabled()) {
        (None, false) => Ok(SoftminResult {
            value: m1,
            weights: vec![1.0],
        }),
        (Some(m2), true) => softmin(&[m1, m2], config.beta_delta),
        (None, true) => Err(Error::contract("stability margin enabled but m2 not supplied")),
        (Some(_), false) => Err(Error::contract("m2 supplied but stability margin disabled")),
    }
}

/// `Δ = softmin_{β_Δ}{m1, m2}`, or exactly `m1` without a stability margin.
pub fn dsm_composite(m1: f64, m2: Option<f64>, config: &DsmConfig) -> Result<f64> {
    compose(m1, m2, config).map(|r| r.value)
}

/// Smooth minimum distance from the sampled arm points to the obstacle center.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftDistance {
    pub value: f64,
    pub grad: DVector<f64>,
    /// Exact distance of every sampled point.
    pub distances: Vec<f64>,
}

impl SoftDistance {
    pub fn min_distance(&self) -> f64 {
        self.distances.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// `Γ*(g)` and its gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct SafetyThreshold {
    pub gamma_star: f64,
    pub grad_g: DVector<f64>,
}

/// Below this a sampled point counts as sitting on the obstacle center.
pub const DEGENERATE_DISTANCE: f64 = 1e-9;

/// How the arm's distance to one circular obstacle is sampled and smoothed.
#[derive(Debug, Clone, PartialEq)]
pub struct ObstacleClearance {
    pub obstacle: Obstacle,
    pub points_per_link: usize,
    /// Softmin sharpness over the sampled point distances.
    pub beta: f64,
}

impl ObstacleClearance {
    pub fn new(obstacle: Obstacle, points_per_link: usize, beta: f64) -> Result<Self> {
        if points_per_link == 0 {
            return Err(Error::contract("points_per_link must be at least 1"));
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::contract(format!("distance beta must be positive, got {beta}")));
        }
        Ok(Self {
            obstacle,
            points_per_link,
            beta,
        })
    }

    /// `d̃(q) = -(1/β) log Σ exp(-β d_{k,j}(q))` and `∇_q d̃`.
    pub fn soft_distance(&self, model: &ArmModel, q: &DVector<f64>) -> Result<SoftDistance> {
        let center = self.obstacle.center();
        let points = model.link_points(q, self.points_per_link);
        let distances: Vec<f64> = points.iter().map(|p| (p - center).norm()).collect();
        if let Some((index, &distance)) = distances.iter().enumerate().find(|(_, d)| !(**d > DEGENERATE_DISTANCE)) {
            return Err(Error::DegenerateGeometry { index, distance });
        }
        let sm = softmin(&distances, self.beta)?;
        let jacobians = model.link_point_jacobians(q, self.points_per_link);
        let mut grad = DVector::zeros(model.dof());
        for ((p, jac), (d, w)) in points.iter().zip(&jacobians).zip(distances.iter().zip(&sm.weights)) {
            let unit = (p - center) / *d;
            grad += jac.transpose() * unit * *w;
        }
        Ok(SoftDistance {
            value: sm.value,
            grad,
            distances,
        })
    }

    /// `h(g) = d̃(g) - R`, evaluated at the equilibrium configuration `q = g`.
    pub fn steady_state_constraint(&self, model: &ArmModel, g: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        let sd = self.soft_distance(model, &model.equilibrium(g).q)?;
        Ok((sd.value - self.obstacle.radius(), sd.grad))
    }

    /// `Γ*(g) = λ_min(Kp) / (2 L²) · max{0, d̃(g) - R}²`.
    pub fn threshold(&self, model: &ArmModel, g: &DVector<f64>) -> Result<SafetyThreshold> {
        let sd = self.soft_distance(model, &model.equilibrium(g).q)?;
        Ok(self.threshold_from(model, &sd))
    }

    pub(crate) fn threshold_from(&self, model: &ArmModel, sd: &SoftDistance) -> SafetyThreshold {
        let l = model.lipschitz_bound();
        let gain = model.kp_min_eigenvalue() / (l * l);
        let clearance = (sd.value - self.obstacle.radius()).max(0.0);
        SafetyThreshold {
            gamma_star: 0.5 * gain * clearance * clearance,
            grad_g: &sd.grad * (gain * clearance),
        }
    }

    /// `Δ(x, g)` and `∇_g Δ` for the arm.
    pub fn dsm_arm(
        &self,
        model: &ArmModel,
        config: &DsmConfig,
        state: &JointState,
        g: &DVector<f64>,
    ) -> Result<(f64, DVector<f64>)> {
        let threshold = self.threshold(model, g)?;
        let v = model.lyapunov(state, g)?;
        dsm_from_parts(model, config, &threshold, v, state, g)
    }
}

/// Assembles `Δ` from a precomputed threshold and Lyapunov value.
///
/// Both margins share `-V`, so `∇_g Δ = w1 ∇Γ* + Kp (q - g)` with `w1` the
/// softmin weight of `m1` (1 without a stability margin).
pub(crate) fn dsm_from_parts(
    model: &ArmModel,
    config: &DsmConfig,
    threshold: &SafetyThreshold,
    v: f64,
    state: &JointState,
    g: &DVector<f64>,
) -> Result<(f64, DVector<f64>)> {
    let m1 = threshold.gamma_star - v;
    let m2 = config.stability_margin.as_ref().map(|sm| stability_margin(v, sm));
    let composite = compose(m1, m2, config)?;
    let grad = &threshold.grad_g * composite.weights[0] + model.kp() * (&state.q - g);
    Ok((composite.value, grad))
}
