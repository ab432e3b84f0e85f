//! Explicit reference governor driven by a softmin control barrier function.
//!
//! A prestabilized plant tracks an applied reference `g`. The reference moves
//! toward the target `r` along the projection of the nominal gradient flow onto
//! a single halfspace derived from the barrier `H(x, g)`, which aggregates every
//! dynamic safety margin and steady-state constraint with a softmin. Since
//! `ρ = 0` satisfies the halfspace whenever `H ≥ 0`, the update is always
//! feasible and has a closed form.
//!
//! Module map:
//! - [`smoothmin`]: stable softmin and its weights
//! - [`plant`]: planar arm kinematics, two-link dynamics, PD loop, Lyapunov function
//! - [`dsm`]: dynamic safety margins and the arm's closed-form threshold
//! - [`barrier`]: the aggregated barrier and its affine constraint
//! - [`governor`]: halfspace projection and the reference rate
//! - [`sim`]: scenarios, RK4 integration, batch runs, logs and the invariant audit
//! - [`verify`]: sampled property checks of the analytic identities

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod barrier;
pub mod dsm;
pub mod error;
pub mod governor;
pub mod plant;
pub mod sim;
pub mod smoothmin;
pub mod verify;

pub use barrier::{cbf_coefficients, ArmBarrier, BarrierConfig, BarrierEvaluation};
pub use dsm::{dsm_composite, DsmConfig, ObstacleClearance, SafetyThreshold, SoftDistance, StabilityMargin};
pub use error::{Error, Result};
pub use governor::{project_halfspace, Governor, GovernorConfig, ReferenceRate};
pub use plant::{ArmModel, JointState, Obstacle};
pub use smoothmin::{softmin, SoftminResult};
