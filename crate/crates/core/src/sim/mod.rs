//! Scenario orchestration: integration, batch runs, trajectory logs and the audit.

pub mod audit;
pub mod batch;
pub mod integrate;
pub mod log;
pub mod scenario;

pub use audit::{invariant_audit, AuditContext, AuditReport, AuditThresholds, Check};
pub use batch::{batch_run, sample_initial_configurations, BatchRow, BatchSummary, RunStatus};
pub use integrate::{rk4_step, run_scenario, AugmentedState, RunOutcome};
pub use log::{csv_header, StageStats, StepRecord, TrajectoryLog};
pub use scenario::{parse_override, JointBox, Override, RhoEvaluation, Scenario, ScenarioFile, PAPER_2DOF};

impl Scenario {
    /// Audit context for logs of this scenario.
    pub fn audit_context(&self) -> AuditContext {
        AuditContext {
            obstacle_radius: self.obstacle().radius(),
            target: Some(self.target().clone()),
            thresholds: self.audit.clone(),
        }
    }
}
