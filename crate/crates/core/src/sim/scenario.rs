//! Scenario files: flat TOML key/value pairs, one key per scenario field.
//!
//! ```toml
//! lengths = [1.0, 0.8]
//! kp = [[50.0, 0.0], [0.0, 50.0]]
//! target = [-1.2, 1.8]
//! dt = 1e-3
//! ```
//!
//! Any top-level key can be replaced with a `key=value` override before the
//! file is validated; values use TOML syntax, with bare words taken as strings.

use std::path::Path;

use nalgebra::{DMatrix, DVector, Vector2};
use serde::Deserialize;

use crate::barrier::{ArmBarrier, BarrierConfig};
use crate::dsm::{DsmConfig, ObstacleClearance, StabilityMargin};
use crate::error::{Error, Result};
use crate::governor::{Governor, GovernorConfig, DEFAULT_BREACH_TOLERANCE};
use crate::plant::{ArmModel, JointState, Obstacle};
use crate::sim::audit::AuditThresholds;

/// The shipped two-link scenario.
pub const PAPER_2DOF: &str = include_str!("../../../../scenarios/paper_2dof.toml");

/// How often the reference rate is recomputed inside an RK4 step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RhoEvaluation {
    /// Every stage (the augmented system is one smooth vector field).
    Stage,
    /// Once per step, held over the stages.
    Zoh,
}

fn default_true() -> bool {
    true
}

fn default_rho() -> RhoEvaluation {
    RhoEvaluation::Stage
}

fn default_breach() -> f64 {
    DEFAULT_BREACH_TOLERANCE
}

/// Raw, unvalidated scenario file contents.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default)]
    pub name: Option<String>,
    pub lengths: Vec<f64>,
    pub masses: Vec<f64>,
    pub kp: Vec<Vec<f64>>,
    pub kd: Vec<Vec<f64>>,
    pub obstacle_center: Vec<f64>,
    pub obstacle_radius: f64,
    pub points_per_link: i64,
    pub beta_distance: f64,
    pub beta_h: f64,
    pub alpha_gain: f64,
    pub beta_delta: f64,
    #[serde(default)]
    pub stability_margin_enabled: bool,
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub gamma_bar: Option<f64>,
    pub attraction_gain: Vec<Vec<f64>>,
    pub target: Vec<f64>,
    pub initial_q: Vec<f64>,
    #[serde(default)]
    pub initial_qdot: Option<Vec<f64>>,
    #[serde(default)]
    pub initial_reference: Option<Vec<f64>>,
    pub dt: f64,
    pub duration: f64,
    #[serde(default = "default_true")]
    pub governor_enabled: bool,
    #[serde(default = "default_rho")]
    pub rho_evaluation: RhoEvaluation,
    #[serde(default = "default_breach")]
    pub breach_tolerance: f64,
    #[serde(default)]
    pub batch_q_min: Option<Vec<f64>>,
    #[serde(default)]
    pub batch_q_max: Option<Vec<f64>>,
    #[serde(default)]
    pub audit_min_h: Option<f64>,
    #[serde(default)]
    pub audit_min_feasibility_slack: Option<f64>,
    #[serde(default)]
    pub audit_max_projection_residual: Option<f64>,
    #[serde(default)]
    pub audit_min_trivial_rhs: Option<f64>,
    #[serde(default)]
    pub audit_v_increase_tolerance: Option<f64>,
    #[serde(default)]
    pub audit_convergence_tolerance: Option<f64>,
}

/// A `key=value` override.
#[derive(Debug, Clone, PartialEq)]
pub struct Override {
    pub key: String,
    pub value: toml::Value,
    /// The text after `=`, as given.
    pub raw: String,
}

/// Parses `key=value`. The value is read as a TOML value; bare words that do
/// not parse are kept as strings.
pub fn parse_override(text: &str) -> Result<Override> {
    let (key, raw) = text
        .split_once('=')
        .ok_or_else(|| Error::config(text, "override must look like key=value"))?;
    let key = key.trim();
    let raw = raw.trim();
    if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
        return Err(Error::config(key, "override key must be a plain identifier"));
    }
    if raw.is_empty() {
        return Err(Error::config(key, "override value is empty"));
    }
    let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) if t.len() == 1 => t.remove("v").expect("single key"),
        _ if !raw.contains(['\n', '"', '\'', '[', ']', '{', '}', '=']) => toml::Value::String(raw.to_string()),
        _ => return Err(Error::config(key, format!("cannot parse value `{raw}`"))),
    };
    Ok(Override {
        key: key.to_string(),
        value,
        raw: raw.to_string(),
    })
}

fn field_of_toml_error(message: &str) -> String {
    // serde messages name the offending field in backquotes
    message
        .split('`')
        .nth(1)
        .map(str::to_string)
        .unwrap_or_else(|| "scenario".to_string())
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_with_overrides(text, &[])
    }

    /// Parses `text`, replaces top-level keys with `overrides`, then deserializes.
    pub fn parse_with_overrides(text: &str, overrides: &[Override]) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        for o in overrides {
            table.insert(o.key.clone(), o.value.clone());
        }
        serde_path_to_error::deserialize(toml::Value::Table(table)).map_err(|e| {
            let path = e.path().to_string();
            let message = e.inner().message().to_string();
            let key = if path == "." {
                field_of_toml_error(&message)
            } else {
                path
            };
            Error::config(key, message)
        })
    }

    /// Audit thresholds with the file's overrides applied to the defaults.
    pub fn audit_thresholds(&self) -> AuditThresholds {
        let d = AuditThresholds::default();
        AuditThresholds {
            min_h: self.audit_min_h.unwrap_or(d.min_h),
            min_feasibility_slack: self.audit_min_feasibility_slack.unwrap_or(d.min_feasibility_slack),
            max_projection_residual: self.audit_max_projection_residual.unwrap_or(d.max_projection_residual),
            min_trivial_rhs: self.audit_min_trivial_rhs.unwrap_or(d.min_trivial_rhs),
            v_increase_tolerance: self.audit_v_increase_tolerance.unwrap_or(d.v_increase_tolerance),
            convergence_tolerance: self.audit_convergence_tolerance.unwrap_or(d.convergence_tolerance),
        }
    }
}

fn vector(key: &str, values: &[f64], n: usize) -> Result<DVector<f64>> {
    if values.len() != n {
        return Err(Error::config(
            key,
            format!("expected {n} entries, got {}", values.len()),
        ));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::config(key, "entries must be finite"));
    }
    Ok(DVector::from_column_slice(values))
}

fn matrix(key: &str, rows: &[Vec<f64>], n: usize) -> Result<DMatrix<f64>> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(Error::config(key, format!("expected a {n}x{n} matrix")));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::config(key, "entries must be finite"));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn positive(key: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::config(key, format!("must be positive and finite, got {v}")))
    }
}

fn keyed<T>(key: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::ContractViolation(m) => Error::config(key, m),
        other => other,
    })
}

/// Box from which batch initial configurations are drawn.
#[derive(Debug, Clone, PartialEq)]
pub struct JointBox {
    pub min: DVector<f64>,
    pub max: DVector<f64>,
}

/// A validated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub governor: Governor,
    pub initial_state: JointState,
    pub initial_reference: DVector<f64>,
    pub dt: f64,
    pub duration: f64,
    pub governor_enabled: bool,
    pub rho_evaluation: RhoEvaluation,
    pub batch_box: Option<JointBox>,
    pub audit: AuditThresholds,
}

impl Scenario {
    /// Builds and validates the scenario, including `H ≥ 0` at the initial point.
    pub fn from_file(file: &ScenarioFile) -> Result<Self> {
        let n = file.lengths.len();
        if n == 0 {
            return Err(Error::config("lengths", "at least one link required"));
        }
        let model = keyed(
            "lengths",
            ArmModel::new(
                file.lengths.clone(),
                file.masses.clone(),
                matrix("kp", &file.kp, n)?,
                matrix("kd", &file.kd, n)?,
            ),
        )?;
        let center = vector("obstacle_center", &file.obstacle_center, 2)?;
        let obstacle = keyed(
            "obstacle_radius",
            Obstacle::new(Vector2::new(center[0], center[1]), file.obstacle_radius),
        )?;
        if !(1..=10_000).contains(&file.points_per_link) {
            return Err(Error::config("points_per_link", "must be between 1 and 10000"));
        }
        let clearance = keyed(
            "beta_distance",
            ObstacleClearance::new(obstacle, file.points_per_link as usize, file.beta_distance),
        )?;
        let margin = if file.stability_margin_enabled {
            let epsilon = file
                .epsilon
                .ok_or_else(|| Error::config("epsilon", "required when stability_margin_enabled"))?;
            let gamma_bar = file
                .gamma_bar
                .ok_or_else(|| Error::config("gamma_bar", "required when stability_margin_enabled"))?;
            Some(StabilityMargin { epsilon, gamma_bar })
        } else {
            None
        };
        let dsm = keyed(
            "epsilon",
            DsmConfig::new(positive("beta_delta", file.beta_delta)?, margin),
        )?;
        let config = keyed(
            "alpha_gain",
            BarrierConfig::new(positive("beta_h", file.beta_h)?, file.alpha_gain),
        )?;
        let barrier = ArmBarrier {
            model,
            clearance,
            dsm,
            config,
        };
        let governor_config = keyed(
            "attraction_gain",
            GovernorConfig::new(
                matrix("attraction_gain", &file.attraction_gain, n)?,
                vector("target", &file.target, n)?,
            ),
        )?;
        let mut governor = keyed("target", Governor::new(barrier, governor_config))?;
        governor.breach_tolerance = positive("breach_tolerance", file.breach_tolerance)?;

        let q0 = vector("initial_q", &file.initial_q, n)?;
        let qdot0 = match &file.initial_qdot {
            Some(v) => vector("initial_qdot", v, n)?,
            None => DVector::zeros(n),
        };
        let g0 = match &file.initial_reference {
            Some(v) => vector("initial_reference", v, n)?,
            None => q0.clone(),
        };
        let dt = positive("dt", file.dt)?;
        let duration = positive("duration", file.duration)?;
        if duration < dt {
            return Err(Error::config("duration", "must be at least dt"));
        }
        if duration / dt > 1e8 {
            return Err(Error::config("duration", "more than 1e8 steps"));
        }
        let batch_box = match (&file.batch_q_min, &file.batch_q_max) {
            (Some(lo), Some(hi)) => {
                let min = vector("batch_q_min", lo, n)?;
                let max = vector("batch_q_max", hi, n)?;
                if min.iter().zip(max.iter()).any(|(a, b)| a >= b) {
                    return Err(Error::config("batch_q_max", "each entry must exceed batch_q_min"));
                }
                Some(JointBox { min, max })
            }
            (None, None) => None,
            (Some(_), None) => return Err(Error::config("batch_q_max", "missing (batch_q_min given)")),
            (None, Some(_)) => return Err(Error::config("batch_q_min", "missing (batch_q_max given)")),
        };
        let audit = file.audit_thresholds();
        audit.validate()?;

        let scenario = Self {
            name: file.name.clone().unwrap_or_else(|| "scenario".to_string()),
            governor,
            initial_state: JointState::new(q0, qdot0),
            initial_reference: g0,
            dt,
            duration,
            governor_enabled: file.governor_enabled,
            rho_evaluation: file.rho_evaluation,
            batch_box,
            audit,
        };
        scenario.check_initial_barrier()?;
        Ok(scenario)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_file(&ScenarioFile::parse(text)?)
    }

    pub fn parse_with_overrides(text: &str, overrides: &[Override]) -> Result<Self> {
        Self::from_file(&ScenarioFile::parse_with_overrides(text, overrides)?)
    }

    pub fn load(path: &Path, overrides: &[Override]) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
        Self::parse_with_overrides(&text, overrides)
    }

    /// The shipped two-link scenario.
    pub fn paper_2dof() -> Self {
        Self::parse(PAPER_2DOF).expect("shipped scenario is valid")
    }

    pub fn model(&self) -> &ArmModel {
        &self.governor.barrier.model
    }

    pub fn barrier(&self) -> &ArmBarrier {
        &self.governor.barrier
    }

    pub fn obstacle(&self) -> &Obstacle {
        &self.governor.barrier.clearance.obstacle
    }

    pub fn target(&self) -> &DVector<f64> {
        self.governor.config.target()
    }

    /// Number of RK4 steps, `floor(duration / dt)` with a relative guard for
    /// quotients like 20 / 1e-3 that land a few ulps below an integer.
    pub fn step_count(&self) -> usize {
        let ratio = self.duration / self.dt;
        (ratio * (1.0 + 1e-12)).floor() as usize
    }

    /// Same scenario started at rest at `q0` with `g(0) = q0`.
    pub fn with_initial_configuration(&self, q0: DVector<f64>) -> Self {
        let mut s = self.clone();
        s.initial_reference = q0.clone();
        s.initial_state = JointState::at_rest(q0);
        s
    }

    /// `H(x(0), g(0))`.
    pub fn initial_barrier(&self) -> Result<f64> {
        self.barrier()
            .evaluate(&self.initial_state, &self.initial_reference)
            .map(|e| e.h_value)
    }

    fn check_initial_barrier(&self) -> Result<()> {
        let h = keyed("initial_q", self.initial_barrier()).map_err(|e| match e {
            Error::DegenerateGeometry { .. } => Error::config("initial_q", e.to_string()),
            other => other,
        })?;
        if h < 0.0 {
            return Err(Error::config(
                "initial_q",
                format!("initial barrier value H = {h:e} is negative"),
            ));
        }
        Ok(())
    }
}
