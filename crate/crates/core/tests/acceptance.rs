//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

mod common;

use std::time::Instant;

use common::*;
use ergcbf::sim::{
    batch_run, invariant_audit, run_scenario, sample_initial_configurations, AugmentedState, RunStatus, Scenario,
};
use ergcbf::{project_halfspace, softmin};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn distance(a: &[f64], b: &DVector<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Largest `∇V_gᵀρ + ‖ρ‖²` seen across criteria 1 and 2.
struct ResidualTracker(f64);

fn flagship(residuals: &mut ResidualTracker) -> Outcome {
    let s = Scenario::paper_2dof();
    let start = Instant::now();
    let out = run_scenario(&s);
    let elapsed = start.elapsed().as_secs_f64();
    let Some(last) = out.log.last() else {
        return outcome(false, "empty log".into());
    };
    let min_dist = out.log.records.iter().map(|r| r.min_dist).fold(f64::INFINITY, f64::min);
    let min_h = out.log.records.iter().map(|r| r.h).fold(f64::INFINITY, f64::min);
    let g_err = distance(&last.g, s.target());
    let q_err = distance(&last.q, s.target());
    let stage_residual = out
        .log
        .stage_stats
        .map_or(f64::INFINITY, |st| st.max_projection_residual);
    let log_residual = out
        .log
        .records
        .iter()
        .map(|r| r.proj_residual)
        .fold(f64::NEG_INFINITY, f64::max);
    residuals.0 = residuals.0.max(stage_residual).max(log_residual);
    let audit = invariant_audit(&out.log, &s.audit_context());
    let passed = out.error.is_none()
        && (last.t - 20.0).abs() < 1e-9
        && min_dist >= s.obstacle().radius()
        && min_h >= -1e-6
        && g_err <= 1e-2
        && q_err <= 1e-2
        && elapsed <= 10.0
        && audit.passed();
    outcome(
        passed,
        format!(
            "min_dist {min_dist:.4} (R = {}), min H {min_h:.3e}, |g-r| {g_err:.2e}, |q-r| {q_err:.2e}, {elapsed:.2} s, audit {}",
            s.obstacle().radius(),
            if audit.passed() { "PASS" } else { "FAIL" }
        ),
    )
}

fn batch(residuals: &mut ResidualTracker) -> Outcome {
    let s = Scenario::paper_2dof();
    let start = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let summary = pool.install(|| {
        let configs = sample_initial_configurations(&s, 20, 7).unwrap();
        batch_run(&s, &configs)
    });
    let elapsed = start.elapsed().as_secs_f64();
    let mut csv = Vec::new();
    summary.write_csv(&mut csv).unwrap();
    let csv_rows = String::from_utf8(csv).unwrap().lines().count() - 1;
    for r in &summary.rows {
        residuals.0 = residuals.0.max(r.max_projection_residual);
    }
    let completed = summary.rows.iter().filter(|r| r.status == RunStatus::Completed).count();
    let passed = summary.rows.len() == 20
        && completed == 20
        && summary.converged_count() == 20
        && summary.collision_count() == 0
        && csv_rows == 20
        && elapsed <= 60.0;
    outcome(
        passed,
        format!(
            "{}/20 converged, {}/20 collisions, {csv_rows} CSV rows, {elapsed:.1} s serial",
            summary.converged_count(),
            summary.collision_count()
        ),
    )
}

fn trivial_update_feasible() -> Outcome {
    let s = Scenario::paper_2dof();
    let barrier = s.barrier();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut checked = 0;
    let mut worst = f64::INFINITY;
    while checked < 10_000 {
        let (state, g) = random_point(&mut rng);
        let Ok(e) = barrier.evaluate(&state, &g) else { continue };
        if e.h_value < 0.0 {
            continue;
        }
        let (_, b) = barrier.coefficients(&e);
        worst = worst.min(b);
        checked += 1;
    }
    outcome(
        worst >= -1e-12,
        format!("{checked} pairs with H >= 0, min b {worst:.3e}"),
    )
}

fn projection_residual_bound(residuals: &ResidualTracker) -> Outcome {
    outcome(
        residuals.0 <= 1e-10,
        format!(
            "max residual {:.3e} over every governor evaluation of criteria 1-2",
            residuals.0
        ),
    )
}

fn projection_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    let mut idempotent = true;
    for _ in 0..1000 {
        let n = rng.gen_range(1..=6);
        let v = uniform(&mut rng, n, -10.0, 10.0);
        let a = uniform(&mut rng, n, -5.0, 5.0);
        let b = rng.gen_range(-10.0..10.0);
        let rho = project_halfspace(&v, &a, b);
        worst = worst.max((&rho - kkt_projection(&v, &a, b)).amax());
        idempotent &= project_halfspace(&rho, &a, b) == rho;
    }
    outcome(
        worst <= 1e-10 && idempotent,
        format!("1000 projections, max deviation from KKT solution {worst:.3e}, idempotent {idempotent}"),
    )
}

fn gradient_suite() -> Outcome {
    const H: f64 = 1e-6;
    let s = Scenario::paper_2dof();
    let model = s.model();
    let b = s.barrier();
    let c = &b.clearance;
    let radius = c.obstacle.radius();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut points, mut skipped) = (0, 0);
    let mut worst: f64 = 0.0;
    while points < 200 {
        let (state, g) = random_point(&mut rng);
        let Ok(sd) = c.soft_distance(model, &g) else {
            skipped += 1;
            continue;
        };
        if (sd.value - radius).abs() < 1e-4 {
            skipped += 1;
            continue;
        }
        let e = b.evaluate(&state, &g).unwrap();
        let t = c.threshold(model, &g).unwrap();
        let (_, grad_delta) = c.dsm_arm(model, &b.dsm, &state, &g).unwrap();
        let fd_h = central_diff(&g, H, |g| b.evaluate(&state, g).unwrap().h_value);
        let fd_delta = central_diff(&g, H, |g| c.dsm_arm(model, &b.dsm, &state, g).unwrap().0);
        let fd_d = central_diff(&g, H, |g| c.soft_distance(model, g).unwrap().value);
        let fd_gamma = central_diff(&g, H, |g| c.threshold(model, g).unwrap().gamma_star);
        worst = worst
            .max(rel_err(&e.grad_g, &fd_h))
            .max(rel_err(&grad_delta, &fd_delta))
            .max(rel_err(&sd.grad, &fd_d))
            .max(rel_err(&t.grad_g, &fd_gamma));
        for (idx, jac) in model.link_point_jacobians(&g, c.points_per_link).iter().enumerate() {
            for axis in 0..2 {
                let fd = central_diff(&g, H, |q| model.link_points(q, c.points_per_link)[idx][axis]);
                let row = DVector::from_iterator(2, jac.row(axis).iter().copied());
                worst = worst.max(rel_err(&row, &fd));
            }
        }
        points += 1;
    }
    outcome(
        worst <= 1e-5,
        format!("{points} points ({skipped} skipped near the kink), max relative error {worst:.3e}"),
    )
}

fn softmin_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst_bound: f64 = 0.0;
    let mut worst_sum: f64 = 0.0;
    let mut negative_weight = false;
    for i in 0..1000 {
        let beta = [1.0, 10.0, 100.0][i % 3];
        let n = rng.gen_range(1..=20);
        let s: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let r = softmin(&s, beta).unwrap();
        let min = s.iter().copied().fold(f64::INFINITY, f64::min);
        worst_bound = worst_bound
            .max(r.value - min)
            .max(min - (n as f64).ln() / beta - r.value);
        worst_sum = worst_sum.max((r.weights.iter().sum::<f64>() - 1.0).abs());
        negative_weight |= r.weights.iter().any(|w| *w < 0.0);
    }
    let mut finite = true;
    for _ in 0..1000 {
        let n = rng.gen_range(1..=20);
        let s: Vec<f64> = (0..n).map(|_| rng.gen_range(-700.0..700.0)).collect();
        for beta in [1.0, 10.0, 100.0] {
            let r = softmin(&s, beta).unwrap();
            finite &= r.value.is_finite() && r.weights.iter().all(|w| w.is_finite());
        }
    }
    outcome(
        worst_bound <= 0.0 && worst_sum <= 1e-12 && !negative_weight && finite,
        format!("sandwich excess {worst_bound:.1e}, weight-sum error {worst_sum:.1e}, finite on [-700, 700] {finite}"),
    )
}

fn mechanics() -> Outcome {
    let s = Scenario::paper_2dof();
    let model = s.model();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let h = 1e-5;
    let mut skew: f64 = 0.0;
    for _ in 0..1000 {
        let q = uniform(&mut rng, 2, -std::f64::consts::PI, std::f64::consts::PI);
        let qdot = uniform(&mut rng, 2, -1.0, 1.0);
        let m_dot =
            (model.mass_matrix(&(&q + &qdot * h)).unwrap() - model.mass_matrix(&(&q - &qdot * h)).unwrap()) / (2.0 * h);
        let n = m_dot - model.coriolis_matrix(&q, &qdot).unwrap() * 2.0;
        skew = skew.max(qdot.dot(&(&n * &qdot)).abs()).max((&n + n.transpose()).amax());
    }

    let frozen = scenario_with(&["governor_enabled=false", "initial_qdot=[0.8,-1.5]"]);
    let mut aug = AugmentedState::initial(&frozen);
    let g = aug.g.clone();
    let mut rate_err: f64 = 0.0;
    let mut v_rise: f64 = f64::NEG_INFINITY;
    let mut prev = model.lyapunov(&aug.state, &g).unwrap();
    for k in 0..3000 {
        if k % 100 == 0 {
            let hh = 1e-4;
            let fwd = ergcbf::sim::rk4_step(&aug, 0.0, hh, &frozen).unwrap();
            let back = reverse_rk4(model, &aug.state, &g, hh);
            let fd = (model.lyapunov(&fwd.state, &g).unwrap() - model.lyapunov(&back, &g).unwrap()) / (2.0 * hh);
            rate_err = rate_err.max((fd - model.lyapunov_rate(&aug.state)).abs());
        }
        aug = ergcbf::sim::rk4_step(&aug, k as f64 * 1e-3, 1e-3, &frozen).unwrap();
        let v = model.lyapunov(&aug.state, &g).unwrap();
        v_rise = v_rise.max(v - prev);
        prev = v;
    }
    outcome(
        skew <= 1e-9 && rate_err <= 1e-5 && v_rise <= 1e-8,
        format!("skew residual {skew:.2e}, V-rate FD error {rate_err:.2e}, max V increase per step {v_rise:.2e}"),
    )
}

fn integrator_order() -> Outcome {
    let s = Scenario::paper_2dof();
    let dt = 5e-4;
    let ratio = richardson_ratio(&s, 0.0, dt);
    outcome(
        (12.0..=20.0).contains(&ratio),
        format!("error ratio {ratio:.2} on [0, 1] s at dt = {dt:e} (reference dt/64)"),
    )
}

type Criterion = (&'static str, Box<dyn FnOnce(&mut ResidualTracker) -> Outcome>);

fn main() {
    let mut residuals = ResidualTracker(f64::NEG_INFINITY);
    let criteria: Vec<Criterion> = vec![
        ("flagship scenario", Box::new(flagship)),
        ("seeded batch", Box::new(batch)),
        ("trivial update feasible", Box::new(|_| trivial_update_feasible())),
        ("projection residual", Box::new(|r| projection_residual_bound(r))),
        ("projection oracle", Box::new(|_| projection_oracle())),
        ("gradient suite", Box::new(|_| gradient_suite())),
        ("softmin bounds", Box::new(|_| softmin_properties())),
        ("mechanics identities", Box::new(|_| mechanics())),
        ("integrator order", Box::new(|_| integrator_order())),
    ];
    let mut failures = 0;
    for (i, (name, check)) in criteria.into_iter().enumerate() {
        let o = check(&mut residuals);
        if !o.passed {
            failures += 1;
        }
        println!(
            "{} criterion {}: {name}: {}",
            if o.passed { "PASS" } else { "FAIL" },
            i + 1,
            o.detail
        );
    }
    println!("acceptance: {} of 9 criteria passed", 9 - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
