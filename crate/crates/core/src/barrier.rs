//! Softmin barrier over all DSMs and steady-state constraints.
//!
//! `H(x, g) = softmin_{β_H}(Δ_arm(x, g), h_arm(g))`. Differentiating through the
//! softmin gives convex-combination gradients; the CBF condition
//! `Ḣ + α H ≥ 0` on `ġ = ρ` becomes the single halfspace `aᵀρ ≤ b` with
//! `a = -∇_g H` and `b = ∇_x Hᵀ f + α H`.

use nalgebra::DVector;

use crate::dsm::{dsm_from_parts, DsmConfig, ObstacleClearance};
use crate::error::{Error, Result};
use crate::plant::{ArmModel, JointState};
use crate::smoothmin::softmin;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierConfig {
    pub beta_h: f64,
    /// Linear class-K gain: `α_H(s) = alpha_gain · s`.
    pub alpha_gain: f64,
}

impl BarrierConfig {
    pub fn new(beta_h: f64, alpha_gain: f64) -> Result<Self> {
        if !(beta_h > 0.0 && beta_h.is_finite()) {
            return Err(Error::contract(format!("beta_h must be positive, got {beta_h}")));
        }
        if !(alpha_gain > 0.0 && alpha_gain.is_finite()) {
            return Err(Error::contract(format!(
                "alpha_gain must be positive, got {alpha_gain}"
            )));
        }
        Ok(Self { beta_h, alpha_gain })
    }

    pub fn alpha(&self, h: f64) -> f64 {
        self.alpha_gain * h
    }
}

/// Everything the governor needs from the barrier at one `(x, g)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BarrierEvaluation {
    pub h_value: f64,
    pub weights_dsm: Vec<f64>,
    pub weights_ss: Vec<f64>,
    pub grad_g: DVector<f64>,
    /// `∇_x Hᵀ f(x, κ(x, g))`.
    pub flow_term: f64,
    pub dsm_values: Vec<f64>,
    pub ss_values: Vec<f64>,
    /// Exact minimum distance of the sampled arm points (at the current `q`)
    /// to the obstacle center.
    pub min_point_distance: f64,
    /// `V(x, g)`.
    pub lyapunov: f64,
}

impl BarrierEvaluation {
    pub fn delta_arm(&self) -> f64 {
        self.dsm_values[0]
    }

    pub fn h_arm(&self) -> f64 {
        self.ss_values[0]
    }
}

/// `a = -∇_g H`, `b = ∇_x Hᵀ f + α_H(H)`.
pub fn cbf_coefficients(eval: &BarrierEvaluation, config: &BarrierConfig) -> (DVector<f64>, f64) {
    (-&eval.grad_g, eval.flow_term + config.alpha(eval.h_value))
}

/// Arm + single obstacle barrier: one DSM term and one steady-state term.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmBarrier {
    pub model: ArmModel,
    pub clearance: ObstacleClearance,
    pub dsm: DsmConfig,
    pub config: BarrierConfig,
}

impl ArmBarrier {
    pub fn evaluate(&self, state: &JointState, g: &DVector<f64>) -> Result<BarrierEvaluation> {
        if !state.is_finite() || g.iter().any(|v| !v.is_finite()) {
            return Err(Error::contract("barrier evaluated at a non-finite point"));
        }
        let model = &self.model;
        let equilibrium = model.equilibrium(g);
        let sd = self.clearance.soft_distance(model, &equilibrium.q)?;
        let h_arm = sd.value - self.clearance.obstacle.radius();
        let threshold = self.clearance.threshold_from(model, &sd);
        let v = model.lyapunov(state, g)?;
        let (delta, grad_delta) = dsm_from_parts(model, &self.dsm, &threshold, v, state, g)?;

        let sm = softmin(&[delta, h_arm], self.config.beta_h)?;
        let (w_delta, w_h) = (sm.weights[0], sm.weights[1]);
        let grad_g = grad_delta * w_delta + &sd.grad * w_h;
        // ∇_x Δ = -∇_x V and ∇_x h(x_g, g) = 0, so only the DSM weight carries -V̇.
        let flow_term = -w_delta * model.lyapunov_rate(state);

        let center = self.clearance.obstacle.center();
        let min_point_distance = model
            .link_points(&state.q, self.clearance.points_per_link)
            .iter()
            .map(|p| (p - center).norm())
            .fold(f64::INFINITY, f64::min);

        Ok(BarrierEvaluation {
            h_value: sm.value,
            weights_dsm: vec![w_delta],
            weights_ss: vec![w_h],
            grad_g,
            flow_term,
            dsm_values: vec![delta],
            ss_values: vec![h_arm],
            min_point_distance,
            lyapunov: v,
        })
    }

    pub fn coefficients(&self, eval: &BarrierEvaluation) -> (DVector<f64>, f64) {
        cbf_coefficients(eval, &self.config)
    }
}
