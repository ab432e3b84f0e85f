//! Reference update law.
//!
//! The nominal reference flow descends the attraction potential
//! `V_g = ½ (g - r)ᵀ P (g - r)`. The applied rate is the Euclidean projection of
//! that flow onto the barrier halfspace `{ρ : aᵀρ ≤ b}`, which has the closed
//! form implemented in [`project_halfspace`]. Since `ρ = 0` is always in the
//! halfspace when `H ≥ 0`, the projection is always well-defined.

use nalgebra::{DMatrix, DVector};

use crate::barrier::{ArmBarrier, BarrierEvaluation};
use crate::error::{Error, Result};
use crate::plant::JointState;

/// `‖a‖²` below this is treated as a vanishing constraint normal.
pub const ZERO_NORMAL_SQ: f64 = 1e-18;

/// Default admitted barrier drift before the governor reports a breach.
pub const DEFAULT_BREACH_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GovernorConfig {
    attraction: DMatrix<f64>,
    target: DVector<f64>,
}

impl GovernorConfig {
    pub fn new(attraction: DMatrix<f64>, target: DVector<f64>) -> Result<Self> {
        let n = target.len();
        if attraction.nrows() != n || attraction.ncols() != n {
            return Err(Error::contract(format!(
                "attraction gain must be {n}x{n}, got {}x{}",
                attraction.nrows(),
                attraction.ncols()
            )));
        }
        if attraction.iter().chain(target.iter()).any(|v| !v.is_finite()) {
            return Err(Error::contract("attraction gain and target must be finite"));
        }
        if (&attraction - attraction.transpose()).amax() > 1e-12 {
            return Err(Error::contract("attraction gain is not symmetric"));
        }
        if !(attraction.clone().symmetric_eigenvalues().min() > 0.0) {
            return Err(Error::contract("attraction gain is not positive definite"));
        }
        Ok(Self { attraction, target })
    }

    pub fn attraction(&self) -> &DMatrix<f64> {
        &self.attraction
    }

    pub fn target(&self) -> &DVector<f64> {
        &self.target
    }

    /// `V_g(g, r) = ½ (g - r)ᵀ P (g - r)`.
    pub fn potential(&self, g: &DVector<f64>) -> f64 {
        let e = g - &self.target;
        0.5 * e.dot(&(&self.attraction * &e))
    }

    /// `∇_g V_g = P (g - r)`.
    pub fn potential_grad(&self, g: &DVector<f64>) -> DVector<f64> {
        &self.attraction * (g - &self.target)
    }
}

/// Euclidean projection of `v` onto `{ρ : aᵀρ ≤ b}`.
///
/// Returns `v` itself (bit for bit) when it is already feasible or when `a`
/// vanishes. The result always satisfies `aᵀρ ≤ b` as evaluated in floating
/// point, so the projection is exactly idempotent.
pub fn project_halfspace(v: &DVector<f64>, a: &DVector<f64>, b: f64) -> DVector<f64> {
    let a_sq = a.norm_squared();
    if a_sq < ZERO_NORMAL_SQ {
        return v.clone();
    }
    let excess = a.dot(v) - b;
    if excess <= 0.0 {
        return v.clone();
    }
    let mut rho = v - a * (excess / a_sq);
    // Roundoff can leave ρ a few ulps outside the halfspace. Push it back in so
    // that projecting again is a no-op.
    let mut scale = 1.0;
    for _ in 0..64 {
        let over = a.dot(&rho) - b;
        if over <= 0.0 {
            break;
        }
        rho -= a * (scale * over / a_sq);
        scale *= 2.0;
    }
    rho
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceRate {
    pub rho: DVector<f64>,
    pub constraint_active: bool,
    /// `b - aᵀρ`.
    pub feasibility_slack: f64,
    /// `∇V_gᵀρ + ‖ρ‖²`, nonpositive for the exact projection.
    pub projection_residual: f64,
    pub a: DVector<f64>,
    pub b: f64,
    pub barrier: BarrierEvaluation,
}

/// Barrier plus attraction potential: computes `ρ*(x, g)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Governor {
    pub barrier: ArmBarrier,
    pub config: GovernorConfig,
    pub breach_tolerance: f64,
}

impl Governor {
    pub fn new(barrier: ArmBarrier, config: GovernorConfig) -> Result<Self> {
        if config.target().len() != barrier.model.dof() {
            return Err(Error::contract("target dimension does not match the arm"));
        }
        Ok(Self {
            barrier,
            config,
            breach_tolerance: DEFAULT_BREACH_TOLERANCE,
        })
    }

    /// Applied reference rate at `(state, g)`; `t` only labels breach diagnostics.
    pub fn reference_rate(&self, state: &JointState, g: &DVector<f64>, t: f64) -> Result<ReferenceRate> {
        let eval = self.barrier.evaluate(state, g)?;
        if eval.h_value < -self.breach_tolerance {
            return Err(Error::SafetyBreach {
                t,
                h: eval.h_value,
                tolerance: self.breach_tolerance,
            });
        }
        Ok(self.rate_from(eval, g))
    }

    /// Same as [`Governor::reference_rate`] without the breach check, for RK
    /// stage points that are not states of the trajectory.
    pub fn unchecked_rate(&self, state: &JointState, g: &DVector<f64>) -> Result<ReferenceRate> {
        Ok(self.rate_from(self.barrier.evaluate(state, g)?, g))
    }

    pub(crate) fn rate_from(&self, eval: BarrierEvaluation, g: &DVector<f64>) -> ReferenceRate {
        let (a, b) = self.barrier.coefficients(&eval);
        debug_assert!(
            eval.h_value < 0.0 || b >= -1e-12,
            "ρ = 0 infeasible with H = {} ≥ 0, b = {b}",
            eval.h_value
        );
        let grad = self.config.potential_grad(g);
        let nominal = -&grad;
        let constraint_active = a.dot(&nominal) > b;
        let rho = project_halfspace(&nominal, &a, b);
        ReferenceRate {
            feasibility_slack: b - a.dot(&rho),
            projection_residual: grad.dot(&rho) + rho.norm_squared(),
            constraint_active,
            rho,
            a,
            b,
            barrier: eval,
        }
    }
}
