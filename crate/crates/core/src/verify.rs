//! Randomized property suite behind the `verify` command.
//!
//! Every property draws `samples` random points from a seeded ChaCha8 stream
//! and compares an analytic quantity against an independent computation
//! (finite differences, brute force, or a closed-form bound).

use std::fmt::Write as _;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::governor::project_halfspace;
use crate::plant::JointState;
use crate::sim::Scenario;
use crate::smoothmin::softmin;

/// Central-difference step used by every gradient property.
pub const FD_STEP: f64 = 1e-6;

/// Deliberate corruption of one quantity under test, used to check that the
/// suite can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Analytic link-point Jacobians scaled by 1.001.
    JacobianScale,
    /// Projected rates shifted along the constraint normal.
    ProjectionShift,
    /// Softmin weights scaled by 1.01.
    SoftminWeights,
}

impl FromStr for Fault {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jacobian-scale" => Ok(Fault::JacobianScale),
            "projection-shift" => Ok(Fault::ProjectionShift),
            "softmin-weights" => Ok(Fault::SoftminWeights),
            other => Err(Error::Parse(format!("unknown fault `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VerifyOptions {
    pub samples: usize,
    pub seed: u64,
    pub fault: Option<Fault>,
}

impl VerifyOptions {
    pub fn new(samples: usize, seed: u64) -> Self {
        Self {
            samples,
            seed,
            fault: None,
        }
    }
}

/// Outcome of one property over all its draws.
#[derive(Debug, Clone, PartialEq)]
pub struct PropertyResult {
    pub name: &'static str,
    pub checked: usize,
    pub passed: usize,
    /// Draws rejected before checking (kink neighborhoods, unsafe points).
    pub skipped: usize,
    /// Largest error seen, in the property's own units.
    pub worst: f64,
    pub tolerance: f64,
}

impl PropertyResult {
    fn new(name: &'static str, tolerance: f64) -> Self {
        Self {
            name,
            checked: 0,
            passed: 0,
            skipped: 0,
            worst: 0.0,
            tolerance,
        }
    }

    fn record(&mut self, error: f64) {
        self.checked += 1;
        if error <= self.tolerance {
            self.passed += 1;
        }
        // NaN counts as a failure and must show up as the worst error.
        if !(error <= self.worst) {
            self.worst = error;
        }
    }

    pub fn ok(&self) -> bool {
        self.checked > 0 && self.passed == self.checked
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub samples: usize,
    pub seed: u64,
    pub properties: Vec<PropertyResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.properties.iter().all(PropertyResult::ok)
    }

    pub fn failed(&self) -> impl Iterator<Item = &PropertyResult> {
        self.properties.iter().filter(|p| !p.ok())
    }

    pub fn property(&self, name: &str) -> Option<&PropertyResult> {
        self.properties.iter().find(|p| p.name == name)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "samples = {}", self.samples);
        let _ = writeln!(out, "seed = {}", self.seed);
        for p in &self.properties {
            let _ = writeln!(
                out,
                "{:<28} {:>6}/{:<6} skipped {:>5}  worst {:.3e}  tol {:.1e}  {}",
                p.name,
                p.passed,
                p.checked,
                p.skipped,
                p.worst,
                p.tolerance,
                if p.ok() { "PASS" } else { "FAIL" }
            );
        }
        let _ = writeln!(out, "result = {}", if self.passed() { "PASS" } else { "FAIL" });
        out
    }
}

/// Runs every property against the arm, obstacle and governor of `scenario`.
pub fn verify_properties(scenario: &Scenario, options: &VerifyOptions) -> VerifyReport {
    let n = options.samples.max(1);
    let fault = options.fault;
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let properties = vec![
        softmin_sandwich(&mut rng, n),
        softmin_gradient(&mut rng, n, fault),
        link_jacobian(scenario, &mut rng, n, fault),
        spatial_lipschitz(scenario, &mut rng, n),
        skew_symmetry(scenario, &mut rng, n),
        dsm_x_gradient(scenario, &mut rng, n),
        barrier_gradients(scenario, &mut rng, n),
        projection_kkt(&mut rng, n, fault),
        trivial_rate_feasible(scenario, &mut rng, n),
    ];
    VerifyReport {
        samples: n,
        seed: options.seed,
        properties,
    }
}

fn uniform_vec(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.gen_range(lo..hi))
}

fn relative_error(analytic: &DVector<f64>, reference: &DVector<f64>) -> f64 {
    let scale = analytic.norm().max(reference.norm());
    let diff = (analytic - reference).norm();
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

fn central_difference<F>(x: &DVector<f64>, mut f: F) -> Option<DVector<f64>>
where
    F: FnMut(&DVector<f64>) -> Option<f64>,
{
    let mut grad = DVector::zeros(x.len());
    for i in 0..x.len() {
        let mut plus = x.clone();
        let mut minus = x.clone();
        plus[i] += FD_STEP;
        minus[i] -= FD_STEP;
        grad[i] = (f(&plus)? - f(&minus)?) / (2.0 * FD_STEP);
    }
    Some(grad)
}

const BETAS: [f64; 3] = [1.0, 10.0, 100.0];

fn softmin_sandwich(rng: &mut ChaCha8Rng, samples: usize) -> PropertyResult {
    let mut res = PropertyResult::new("softmin_sandwich", 1e-12);
    for _ in 0..samples {
        let len = rng.gen_range(1..=12);
        let s: Vec<f64> = (0..len).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let beta = BETAS[rng.gen_range(0..BETAS.len())];
        let Ok(sm) = softmin(&s, beta) else {
            res.record(f64::INFINITY);
            continue;
        };
        let min = s.iter().copied().fold(f64::INFINITY, f64::min);
        let lower = min - (len as f64).ln() / beta;
        let sum: f64 = sm.weights.iter().sum();
        let mut err = (sum - 1.0).abs();
        err = err.max(sm.value - min).max(lower - sm.value);
        if sm.weights.iter().any(|w| *w < 0.0) {
            err = f64::INFINITY;
        }
        res.record(err.max(0.0));
    }
    res
}

fn softmin_gradient(rng: &mut ChaCha8Rng, samples: usize, fault: Option<Fault>) -> PropertyResult {
    let mut res = PropertyResult::new("softmin_gradient", 1e-6);
    for _ in 0..samples {
        let len = rng.gen_range(1..=8);
        let s = uniform_vec(rng, len, -1.0, 1.0);
        let beta = BETAS[rng.gen_range(0..BETAS.len())];
        let Ok(sm) = softmin(s.as_slice(), beta) else {
            res.record(f64::INFINITY);
            continue;
        };
        let mut w = DVector::from_vec(sm.weights);
        if fault == Some(Fault::SoftminWeights) {
            w *= 1.01;
        }
        match central_difference(&s, |x| softmin(x.as_slice(), beta).ok().map(|r| r.value)) {
            Some(fd) => res.record(relative_error(&w, &fd)),
            None => res.record(f64::INFINITY),
        }
    }
    res
}

fn link_jacobian(scenario: &Scenario, rng: &mut ChaCha8Rng, samples: usize, fault: Option<Fault>) -> PropertyResult {
    let model = scenario.model();
    let k = scenario.barrier().clearance.points_per_link;
    let mut res = PropertyResult::new("link_jacobian_fd", 1e-5);
    for _ in 0..samples {
        let q = uniform_vec(rng, model.dof(), -std::f64::consts::PI, std::f64::consts::PI);
        let jacobians = model.link_point_jacobians(&q, k);
        let mut worst: f64 = 0.0;
        for (idx, jac) in jacobians.iter().enumerate() {
            let mut analytic = DMatrix::from_iterator(2, model.dof(), jac.iter().copied());
            if fault == Some(Fault::JacobianScale) {
                analytic *= 1.001;
            }
            let mut fd = DMatrix::zeros(2, model.dof());
            for i in 0..model.dof() {
                let mut plus = q.clone();
                let mut minus = q.clone();
                plus[i] += FD_STEP;
                minus[i] -= FD_STEP;
                let d = (model.link_points(&plus, k)[idx] - model.link_points(&minus, k)[idx]) / (2.0 * FD_STEP);
                fd[(0, i)] = d.x;
                fd[(1, i)] = d.y;
            }
            let scale = analytic.norm().max(fd.norm()).max(f64::MIN_POSITIVE);
            worst = worst.max((analytic - fd).norm() / scale);
        }
        res.record(worst);
    }
    res
}

fn spatial_lipschitz(scenario: &Scenario, rng: &mut ChaCha8Rng, samples: usize) -> PropertyResult {
    let model = scenario.model();
    let k = scenario.barrier().clearance.points_per_link;
    let l = model.lipschitz_bound();
    // Reported error is the excess of the observed ratio over the bound.
    let mut res = PropertyResult::new("spatial_lipschitz", 1e-12);
    for _ in 0..samples {
        let q1 = uniform_vec(rng, model.dof(), -std::f64::consts::PI, std::f64::consts::PI);
        let q2 = &q1 + uniform_vec(rng, model.dof(), -1.0, 1.0);
        let dq = (&q1 - &q2).norm();
        if dq == 0.0 {
            res.skipped += 1;
            continue;
        }
        let p1 = model.link_points(&q1, k);
        let p2 = model.link_points(&q2, k);
        let ratio = p1.iter().zip(&p2).map(|(a, b)| (a - b).norm() / dq).fold(0.0, f64::max);
        res.record((ratio - l).max(0.0));
    }
    res
}

fn skew_symmetry(scenario: &Scenario, rng: &mut ChaCha8Rng, samples: usize) -> PropertyResult {
    let model = scenario.model();
    // A larger step than FD_STEP: the residual is a difference of O(1) terms,
    // so the step balances roundoff against truncation.
    let h = 1e-5;
    let mut res = PropertyResult::new("skew_symmetry", 1e-9);
    for _ in 0..samples {
        let q = uniform_vec(rng, model.dof(), -std::f64::consts::PI, std::f64::consts::PI);
        let qdot = uniform_vec(rng, model.dof(), -1.0, 1.0);
        let (Ok(m_plus), Ok(m_minus), Ok(c)) = (
            model.mass_matrix(&(&q + &qdot * h)),
            model.mass_matrix(&(&q - &qdot * h)),
            model.coriolis_matrix(&q, &qdot),
        ) else {
            res.record(f64::INFINITY);
            continue;
        };
        let m_dot = (m_plus - m_minus) / (2.0 * h);
        let nmat = m_dot - c * 2.0;
        let sym = (&nmat + nmat.transpose()).amax();
        let quad = qdot.dot(&(&nmat * &qdot)).abs();
        res.record(sym.max(quad));
    }
    res
}

/// Draws a joint state near `g` so that V stays moderate.
fn nearby_state(rng: &mut ChaCha8Rng, g: &DVector<f64>) -> JointState {
    let n = g.len();
    JointState::new(g + uniform_vec(rng, n, -0.3, 0.3), uniform_vec(rng, n, -1.0, 1.0))
}

fn dsm_x_gradient(scenario: &Scenario, rng: &mut ChaCha8Rng, samples: usize) -> PropertyResult {
    let model = scenario.model();
    let barrier = scenario.barrier();
    let n = model.dof();
    let mut res = PropertyResult::new("dsm_x_gradient", 1e-7);
    for _ in 0..samples {
        let g = uniform_vec(rng, n, -std::f64::consts::PI, std::f64::consts::PI);
        let state = nearby_state(rng, &g);
        let x = DVector::from_iterator(2 * n, state.q.iter().chain(state.qdot.iter()).copied());
        let split = |x: &DVector<f64>| JointState::new(x.rows(0, n).into_owned(), x.rows(n, n).into_owned());
        let delta_fd = central_difference(&x, |x| {
            barrier
                .clearance
                .dsm_arm(model, &barrier.dsm, &split(x), &g)
                .ok()
                .map(|r| r.0)
        });
        let v_fd = central_difference(&x, |x| model.lyapunov(&split(x), &g).ok());
        match (delta_fd, v_fd) {
            (Some(d), Some(v)) => res.record((d + v).amax()),
            _ => res.skipped += 1,
        }
    }
    res
}

fn barrier_gradients(scenario: &Scenario, rng: &mut ChaCha8Rng, samples: usize) -> PropertyResult {
    let model = scenario.model();
    let barrier = scenario.barrier();
    let clearance = &barrier.clearance;
    let radius = clearance.obstacle.radius();
    let n = model.dof();
    let mut res = PropertyResult::new("barrier_gradient_fd", 1e-5);
    for _ in 0..samples {
        let g = uniform_vec(rng, n, -std::f64::consts::PI, std::f64::consts::PI);
        let state = nearby_state(rng, &g);
        let Ok(sd) = clearance.soft_distance(model, &g) else {
            res.skipped += 1;
            continue;
        };
        // Γ* has a kink at d̃ = R.
        if (sd.value - radius).abs() < 1e-4 {
            res.skipped += 1;
            continue;
        }
        let (Ok(threshold), Ok(dsm), Ok(eval)) = (
            clearance.threshold(model, &g),
            clearance.dsm_arm(model, &barrier.dsm, &state, &g),
            barrier.evaluate(&state, &g),
        ) else {
            res.skipped += 1;
            continue;
        };
        let fds = (
            central_difference(&g, |g| clearance.soft_distance(model, g).ok().map(|s| s.value)),
            central_difference(&g, |g| clearance.threshold(model, g).ok().map(|t| t.gamma_star)),
            central_difference(&g, |g| {
                clearance.dsm_arm(model, &barrier.dsm, &state, g).ok().map(|r| r.0)
            }),
            central_difference(&g, |g| barrier.evaluate(&state, g).ok().map(|e| e.h_value)),
        );
        let (Some(fd_d), Some(fd_gamma), Some(fd_delta), Some(fd_h)) = fds else {
            res.skipped += 1;
            continue;
        };
        let err = relative_error(&sd.grad, &fd_d)
            .max(relative_error(&threshold.grad_g, &fd_gamma))
            .max(relative_error(&dsm.1, &fd_delta))
            .max(relative_error(&eval.grad_g, &fd_h));
        res.record(err);
    }
    res
}

fn projection_kkt(rng: &mut ChaCha8Rng, samples: usize, fault: Option<Fault>) -> PropertyResult {
    let mut res = PropertyResult::new("projection_kkt", 1e-10);
    for _ in 0..samples {
        let dim = rng.gen_range(1..=6);
        let v = uniform_vec(rng, dim, -10.0, 10.0);
        let a = uniform_vec(rng, dim, -5.0, 5.0);
        let b = rng.gen_range(-10.0..10.0);
        let mut rho = project_halfspace(&v, &a, b);
        if fault == Some(Fault::ProjectionShift) {
            rho -= &a * 1e-3;
        }
        res.record(kkt_error(&v, &a, b, &rho));
    }
    res
}

/// Largest violation of the KKT conditions of `min ‖ρ - v‖²` s.t. `aᵀρ ≤ b`,
/// plus an idempotence failure flag (reported as infinity).
pub fn kkt_error(v: &DVector<f64>, a: &DVector<f64>, b: f64, rho: &DVector<f64>) -> f64 {
    let a_sq = a.norm_squared();
    let scale = 1.0 + v.norm() * a.norm().max(1.0) + b.abs();
    let primal = ((a.dot(rho) - b) / scale).max(0.0);
    // Stationarity: v - ρ = μ a with μ ≥ 0 and μ (aᵀρ - b) = 0.
    let mu = if a_sq > 0.0 { a.dot(&(v - rho)) / a_sq } else { 0.0 };
    let stationarity = (v - rho - a * mu).amax() / scale;
    let dual = (-mu).max(0.0);
    let complementarity = (mu * (a.dot(rho) - b)).abs() / scale;
    if project_halfspace(rho, a, b) != *rho {
        return f64::INFINITY;
    }
    primal.max(stationarity).max(dual).max(complementarity)
}

fn trivial_rate_feasible(scenario: &Scenario, rng: &mut ChaCha8Rng, samples: usize) -> PropertyResult {
    let barrier = scenario.barrier();
    let n = barrier.model.dof();
    // Error is the amount by which b falls below zero.
    let mut res = PropertyResult::new("trivial_rate_feasible", 1e-12);
    let mut attempts = 0usize;
    while res.checked < samples && attempts < samples.saturating_mul(1000) {
        attempts += 1;
        let g = uniform_vec(rng, n, -std::f64::consts::PI, std::f64::consts::PI);
        let state = JointState::new(&g + uniform_vec(rng, n, -0.2, 0.2), uniform_vec(rng, n, -0.5, 0.5));
        let Ok(eval) = barrier.evaluate(&state, &g) else {
            continue;
        };
        if eval.h_value < 0.0 {
            res.skipped += 1;
            continue;
        }
        let (_, b) = barrier.coefficients(&eval);
        res.record((-b).max(0.0));
    }
    res
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clean_suite_passes() {
        let report = verify_properties(&Scenario::paper_2dof(), &VerifyOptions::new(50, 3));
        assert!(report.passed(), "{}", report.render());
    }

    #[test]
    fn each_fault_fails_its_property() {
        let cases = [
            (Fault::JacobianScale, "link_jacobian_fd"),
            (Fault::ProjectionShift, "projection_kkt"),
            (Fault::SoftminWeights, "softmin_gradient"),
        ];
        for (fault, name) in cases {
            let opts = VerifyOptions {
                fault: Some(fault),
                ..VerifyOptions::new(5, 1)
            };
            let report = verify_properties(&Scenario::paper_2dof(), &opts);
            let failed: Vec<_> = report.failed().map(|p| p.name).collect();
            assert_eq!(failed, vec![name]);
        }
    }

    #[test]
    fn fault_names_parse() {
        assert_eq!("jacobian-scale".parse::<Fault>().unwrap(), Fault::JacobianScale);
        assert!("nope".parse::<Fault>().is_err());
    }
}
