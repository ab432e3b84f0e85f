//! Post-run checks of the safety and feasibility guarantees on a logged trajectory.

use std::fmt::Write as _;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::sim::log::TrajectoryLog;

/// Pass/fail thresholds of the invariant audit.
#[derive(Debug, Clone, PartialEq)]
pub struct AuditThresholds {
    /// Smallest admitted barrier value (integrator drift budget).
    pub min_h: f64,
    /// Smallest admitted `b - aᵀρ`.
    pub min_feasibility_slack: f64,
    /// Largest admitted `∇V_gᵀρ + ‖ρ‖²`.
    pub max_projection_residual: f64,
    /// Smallest admitted `b_H` while `H ≥ 0`.
    pub min_trivial_rhs: f64,
    /// Per-step increase of `V` tolerated while the reference is frozen.
    pub v_increase_tolerance: f64,
    /// Final `‖g - r‖` and `‖q - r‖` bound.
    pub convergence_tolerance: f64,
}

impl Default for AuditThresholds {
    fn default() -> Self {
        Self {
            min_h: -1e-6,
            min_feasibility_slack: -1e-10,
            max_projection_residual: 1e-10,
            min_trivial_rhs: -1e-12,
            v_increase_tolerance: 1e-8,
            convergence_tolerance: 1e-2,
        }
    }
}

impl AuditThresholds {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("audit_min_h", self.min_h),
            ("audit_min_feasibility_slack", self.min_feasibility_slack),
            ("audit_max_projection_residual", self.max_projection_residual),
            ("audit_min_trivial_rhs", self.min_trivial_rhs),
            ("audit_v_increase_tolerance", self.v_increase_tolerance),
            ("audit_convergence_tolerance", self.convergence_tolerance),
        ];
        for (key, v) in all {
            if !v.is_finite() {
                return Err(Error::config(key, "must be finite"));
            }
        }
        if !(self.convergence_tolerance > 0.0) {
            return Err(Error::config("audit_convergence_tolerance", "must be positive"));
        }
        Ok(())
    }

    pub fn entries(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("min_h", self.min_h),
            ("min_feasibility_slack", self.min_feasibility_slack),
            ("max_projection_residual", self.max_projection_residual),
            ("min_trivial_rhs", self.min_trivial_rhs),
            ("v_increase_tolerance", self.v_increase_tolerance),
            ("convergence_tolerance", self.convergence_tolerance),
        ]
    }
}

/// What the audit needs besides the log itself.
#[derive(Debug, Clone, PartialEq)]
pub struct AuditContext {
    pub obstacle_radius: f64,
    /// Convergence is only checked when a target is given.
    pub target: Option<DVector<f64>>,
    pub thresholds: AuditThresholds,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    /// Human-readable bound, e.g. `>= -1e-6`.
    pub bound: String,
    pub passed: bool,
    /// First logged time at which the check failed.
    pub first_failure: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditReport {
    pub checks: Vec<Check>,
    /// Reported without pass/fail.
    pub observations: Vec<(&'static str, f64)>,
    pub warnings: Vec<String>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failed_checks(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Structured `key = value` report; `header` lines are echoed first.
    pub fn render(&self, header: &[(String, String)], thresholds: &AuditThresholds) -> String {
        let mut s = String::from("[run]\n");
        for (k, v) in header {
            let _ = writeln!(s, "{k} = {v}");
        }
        s.push_str("\n[thresholds]\n");
        for (k, v) in thresholds.entries() {
            let _ = writeln!(s, "{k} = {v:e}");
        }
        s.push_str("\n[checks]\n");
        for c in &self.checks {
            let status = if c.passed { "PASS" } else { "FAIL" };
            let _ = write!(s, "{} = {status} value={:.6e} bound={}", c.name, c.value, c.bound);
            if let Some(t) = c.first_failure {
                let _ = write!(s, " first_failure_t={t}");
            }
            s.push('\n');
        }
        if !self.observations.is_empty() {
            s.push_str("\n[observations]\n");
            for (k, v) in &self.observations {
                let _ = writeln!(s, "{k} = {v:.6e}");
            }
        }
        for w in &self.warnings {
            let _ = writeln!(s, "warning = {w}");
        }
        let _ = writeln!(s, "\nresult = {}", if self.passed() { "PASS" } else { "FAIL" });
        s
    }
}

fn lower_check(name: &'static str, samples: impl Iterator<Item = (f64, f64)>, bound: f64) -> Check {
    let mut value = f64::INFINITY;
    let mut first_failure = None;
    for (t, v) in samples {
        value = value.min(v);
        if !(v >= bound) && first_failure.is_none() {
            first_failure = Some(t);
        }
    }
    Check {
        name,
        value,
        bound: format!(">= {bound:e}"),
        passed: first_failure.is_none(),
        first_failure,
    }
}

fn upper_check(name: &'static str, samples: impl Iterator<Item = (f64, f64)>, bound: f64) -> Check {
    let mut c = lower_check(name, samples.map(|(t, v)| (t, -v)), -bound);
    c.value = -c.value;
    c.bound = format!("<= {bound:e}");
    c
}

fn distance(a: &[f64], b: &DVector<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Runs every check on `log`. An empty log passes vacuously with a warning.
pub fn invariant_audit(log: &TrajectoryLog, ctx: &AuditContext) -> AuditReport {
    let th = &ctx.thresholds;
    let mut report = AuditReport {
        checks: Vec::new(),
        observations: Vec::new(),
        warnings: Vec::new(),
    };
    if log.is_empty() {
        report.warnings.push("empty log: all checks pass vacuously".to_string());
        return report;
    }
    let recs = &log.records;

    report.checks.push(lower_check(
        "barrier_nonnegative",
        recs.iter().map(|r| (r.t, r.h)),
        th.min_h,
    ));
    report.checks.push(lower_check(
        "collision_free",
        recs.iter().map(|r| (r.t, r.min_dist)),
        ctx.obstacle_radius,
    ));

    let mut slack = lower_check(
        "feasibility_slack",
        recs.iter().map(|r| (r.t, r.feas_slack)),
        th.min_feasibility_slack,
    );
    let mut residual = upper_check(
        "projection_residual",
        recs.iter().map(|r| (r.t, r.proj_residual)),
        th.max_projection_residual,
    );
    if let Some(stats) = &log.stage_stats {
        if stats.evaluations > 0 {
            slack.value = slack.value.min(stats.min_feasibility_slack);
            slack.passed &= stats.min_feasibility_slack >= th.min_feasibility_slack;
            residual.value = residual.value.max(stats.max_projection_residual);
            residual.passed &= stats.max_projection_residual <= th.max_projection_residual;
            if stats.min_trivial_rhs.is_finite() {
                report.checks.push(Check {
                    name: "trivial_update_feasible",
                    value: stats.min_trivial_rhs,
                    bound: format!(">= {:e}", th.min_trivial_rhs),
                    passed: stats.min_trivial_rhs >= th.min_trivial_rhs,
                    first_failure: None,
                });
            }
            report
                .observations
                .push(("governor_evaluations", stats.evaluations as f64));
        }
    }
    report.checks.push(slack);
    report.checks.push(residual);

    // V may only rise while the reference moves; count rises with g frozen.
    let mut violations = 0usize;
    let mut worst = 0.0f64;
    let mut first = None;
    for w in recs.windows(2) {
        let frozen = w[0].g == w[1].g;
        let rise = w[1].v - w[0].v;
        if frozen {
            worst = worst.max(rise);
            if rise > th.v_increase_tolerance {
                violations += 1;
                first.get_or_insert(w[1].t);
            }
        }
    }
    report.checks.push(Check {
        name: "lyapunov_monotone_frozen_reference",
        value: worst,
        bound: format!("<= {:e} per step", th.v_increase_tolerance),
        passed: violations == 0,
        first_failure: first,
    });

    if let Some(r) = &ctx.target {
        let last = recs.last().expect("nonempty");
        let (tail_t, g_err, q_err) = (last.t, distance(&last.g, r), distance(&last.q, r));
        for (name, err) in [("reference_converged", g_err), ("state_converged", q_err)] {
            let passed = err <= th.convergence_tolerance;
            report.checks.push(Check {
                name,
                value: err,
                bound: format!("<= {:e}", th.convergence_tolerance),
                passed,
                first_failure: (!passed).then_some(tail_t),
            });
        }
    }

    let min_grad = recs.iter().map(|r| r.grad_g_h_norm).fold(f64::INFINITY, f64::min);
    report.observations.push(("min_grad_g_h_norm", min_grad));
    report
        .observations
        .push(("final_time", recs.last().map(|r| r.t).unwrap_or(0.0)));
    report
}
