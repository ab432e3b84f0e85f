//! Independent runs from many initial configurations.

use std::fmt::{self, Write as _};
use std::io::Write;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::sim::integrate::run_scenario;
use crate::sim::scenario::Scenario;

/// Rejection-sampling attempts allowed per requested configuration.
const ATTEMPTS_PER_SAMPLE: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    Completed,
    /// Initial configuration has `H < 0`; not simulated.
    Infeasible,
    Failed(Error),
}

impl fmt::Display for RunStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunStatus::Completed => f.write_str("completed"),
            RunStatus::Infeasible => f.write_str("infeasible"),
            RunStatus::Failed(m) => write!(f, "failed: {m}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchRow {
    pub initial_q: Vec<f64>,
    pub status: RunStatus,
    pub converged: bool,
    pub final_g_error: f64,
    pub final_q_error: f64,
    pub min_h: f64,
    pub min_distance: f64,
    pub collision: bool,
    /// Largest `∇V_gᵀρ + ‖ρ‖²` over every governor evaluation of the run.
    pub max_projection_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BatchSummary {
    pub rows: Vec<BatchRow>,
}

impl BatchSummary {
    pub fn simulated(&self) -> impl Iterator<Item = &BatchRow> {
        self.rows.iter().filter(|r| r.status != RunStatus::Infeasible)
    }

    pub fn converged_count(&self) -> usize {
        self.rows.iter().filter(|r| r.converged).count()
    }

    pub fn collision_count(&self) -> usize {
        self.rows.iter().filter(|r| r.collision).count()
    }

    pub fn breach_count(&self) -> usize {
        self.rows
            .iter()
            .filter(|r| matches!(r.status, RunStatus::Failed(Error::SafetyBreach { .. })))
            .count()
    }

    /// Every simulated run completed, converged and stayed collision-free.
    pub fn all_ok(&self) -> bool {
        self.simulated()
            .all(|r| r.status == RunStatus::Completed && r.converged && !r.collision)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let n = self.rows.first().map_or(0, |r| r.initial_q.len());
        let mut header: Vec<String> = vec!["run".into()];
        header.extend((1..=n).map(|i| format!("q{i}_0")));
        header.extend(
            [
                "converged",
                "final_g_error",
                "final_q_error",
                "min_h",
                "min_dist",
                "collision",
                "max_proj_residual",
                "status",
            ]
            .map(String::from),
        );
        writeln!(out, "{}", header.join(","))?;
        for (i, r) in self.rows.iter().enumerate() {
            let mut fields = vec![i.to_string()];
            fields.extend(r.initial_q.iter().map(|v| format!("{v:.16e}")));
            fields.push(r.converged.to_string());
            for v in [r.final_g_error, r.final_q_error, r.min_h, r.min_distance] {
                fields.push(format!("{v:.16e}"));
            }
            fields.push(r.collision.to_string());
            fields.push(format!("{:.16e}", r.max_projection_residual));
            fields.push(format!("\"{}\"", r.status.to_string().replace('"', "'")));
            writeln!(out, "{}", fields.join(","))?;
        }
        out.flush()?;
        Ok(())
    }
}

impl BatchSummary {
    /// Text audit of the batch: `header` lines, one line per run, totals.
    pub fn render(&self, header: &[(String, String)]) -> String {
        let mut s = String::from("[batch]\n");
        for (k, v) in header {
            let _ = writeln!(s, "{k} = {v}");
        }
        s.push_str("\n[runs]\n");
        for (i, r) in self.rows.iter().enumerate() {
            let q0: Vec<String> = r.initial_q.iter().map(|v| format!("{v:.6}")).collect();
            let _ = writeln!(
                s,
                "run_{i} = q0=[{}] status={} converged={} collision={} min_h={:.6e} min_dist={:.6e} g_err={:.6e} q_err={:.6e} max_proj_residual={:.6e}",
                q0.join(", "),
                r.status,
                r.converged,
                r.collision,
                r.min_h,
                r.min_distance,
                r.final_g_error,
                r.final_q_error,
                r.max_projection_residual,
            );
        }
        let worst_residual = self
            .rows
            .iter()
            .map(|r| r.max_projection_residual)
            .fold(f64::NEG_INFINITY, f64::max);
        let min_h = self.rows.iter().map(|r| r.min_h).fold(f64::INFINITY, f64::min);
        let n = self.rows.len();
        s.push_str("\n[summary]\n");
        let _ = writeln!(s, "runs = {n}");
        let _ = writeln!(s, "converged = {}/{n}", self.converged_count());
        let _ = writeln!(s, "collisions = {}/{n}", self.collision_count());
        let _ = writeln!(s, "breaches = {}/{n}", self.breach_count());
        let _ = writeln!(s, "min_h = {min_h:.6e}");
        let _ = writeln!(s, "max_proj_residual = {worst_residual:.6e}");
        let _ = writeln!(s, "\nresult = {}", if self.all_ok() { "PASS" } else { "FAIL" });
        s
    }
}

fn distance(a: &[f64], b: &DVector<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn run_one(template: &Scenario, q0: &DVector<f64>) -> BatchRow {
    let scenario = template.with_initial_configuration(q0.clone());
    let tol = template.audit.convergence_tolerance;
    let mut row = BatchRow {
        initial_q: q0.iter().copied().collect(),
        status: RunStatus::Completed,
        converged: false,
        final_g_error: f64::NAN,
        final_q_error: f64::NAN,
        min_h: f64::NAN,
        min_distance: f64::NAN,
        collision: false,
        max_projection_residual: f64::NAN,
    };
    match scenario.initial_barrier() {
        Ok(h) if h >= 0.0 => {}
        Ok(_) => {
            row.status = RunStatus::Infeasible;
            return row;
        }
        Err(e) => {
            row.status = RunStatus::Failed(e);
            return row;
        }
    }
    let outcome = run_scenario(&scenario);
    let recs = &outcome.log.records;
    if let Some(last) = recs.last() {
        row.final_g_error = distance(&last.g, scenario.target());
        row.final_q_error = distance(&last.q, scenario.target());
        row.min_h = recs.iter().map(|r| r.h).fold(f64::INFINITY, f64::min);
        row.min_distance = recs.iter().map(|r| r.min_dist).fold(f64::INFINITY, f64::min);
        row.collision = row.min_distance < scenario.obstacle().radius();
    }
    row.max_projection_residual = outcome.log.stage_stats.map_or(f64::NAN, |s| s.max_projection_residual);
    match outcome.error {
        Some(e) => row.status = RunStatus::Failed(e),
        None => row.converged = row.final_g_error <= tol && row.final_q_error <= tol,
    }
    row
}

/// Runs `template` from rest at each configuration, in parallel. Rows keep input order.
pub fn batch_run(template: &Scenario, initial_configurations: &[DVector<f64>]) -> BatchSummary {
    BatchSummary {
        rows: initial_configurations
            .par_iter()
            .map(|q0| run_one(template, q0))
            .collect(),
    }
}

/// Draws `count` configurations uniformly from the scenario's batch box,
/// keeping only those with `H ≥ 0` at rest with `g = q`.
pub fn sample_initial_configurations(template: &Scenario, count: usize, seed: u64) -> Result<Vec<DVector<f64>>> {
    let bounds = template
        .batch_box
        .as_ref()
        .ok_or_else(|| Error::config("batch_q_min", "scenario has no batch box"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0usize;
    while out.len() < count {
        if attempts >= ATTEMPTS_PER_SAMPLE * count.max(1) {
            return Err(Error::config(
                "batch_q_min",
                format!(
                    "only {} of {count} safe configurations found in the batch box",
                    out.len()
                ),
            ));
        }
        attempts += 1;
        let q = DVector::from_iterator(
            bounds.min.len(),
            bounds
                .min
                .iter()
                .zip(bounds.max.iter())
                .map(|(lo, hi)| rng.gen_range(*lo..*hi)),
        );
        let candidate = template.with_initial_configuration(q.clone());
        if matches!(candidate.initial_barrier(), Ok(h) if h >= 0.0) {
            out.push(q);
        }
    }
    Ok(out)
}
