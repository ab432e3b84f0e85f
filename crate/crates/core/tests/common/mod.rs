//! Test-side oracles written from first principles, independent of the library
//! internals: direct trigonometric kinematics, point-mass energy, naive
//! log-sum-exp, and finite differences.
#![allow(dead_code)]

use ergcbf::sim::Scenario;
use ergcbf::JointState;
use nalgebra::{DMatrix, DVector, Vector2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn v2(a: f64, b: f64) -> DVector<f64> {
    DVector::from_vec(vec![a, b])
}

pub fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.gen_range(lo..hi))
}

pub fn central_diff<F: Fn(&DVector<f64>) -> f64>(x: &DVector<f64>, h: f64, f: F) -> DVector<f64> {
    DVector::from_fn(x.len(), |i, _| {
        let mut p = x.clone();
        let mut m = x.clone();
        p[i] += h;
        m[i] -= h;
        (f(&p) - f(&m)) / (2.0 * h)
    })
}

pub fn rel_err(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let scale = a.norm().max(b.norm());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).norm() / scale
    }
}

/// `-(1/β) log Σ exp(-β s)` with a plain max-shift.
pub fn naive_softmin(s: &[f64], beta: f64) -> f64 {
    let m = s.iter().copied().fold(f64::INFINITY, f64::min);
    m - (s.iter().map(|x| (-beta * (x - m)).exp()).sum::<f64>()).ln() / beta
}

/// Two-link arm with point masses at the link tips and one circular obstacle.
#[derive(Debug, Clone)]
pub struct RefArm {
    pub l: [f64; 2],
    pub m: [f64; 2],
    pub kp: DMatrix<f64>,
    pub kd: DMatrix<f64>,
    pub center: Vector2<f64>,
    pub radius: f64,
    pub n_points: usize,
    pub beta: f64,
    pub beta_h: f64,
    pub alpha: f64,
}

impl RefArm {
    pub fn two_link() -> Self {
        Self {
            l: [1.0, 0.8],
            m: [2.0, 1.0],
            kp: DMatrix::identity(2, 2) * 50.0,
            kd: DMatrix::identity(2, 2) * 3.0,
            center: Vector2::new(1.4, 0.0),
            radius: 0.3,
            n_points: 5,
            beta: 100.0,
            beta_h: 100.0,
            alpha: 3.0,
        }
    }

    pub fn joints(&self, q: &DVector<f64>) -> [Vector2<f64>; 3] {
        let (a, b) = (q[0], q[0] + q[1]);
        let p1 = Vector2::new(self.l[0] * a.cos(), self.l[0] * a.sin());
        let p2 = p1 + Vector2::new(self.l[1] * b.cos(), self.l[1] * b.sin());
        [Vector2::zeros(), p1, p2]
    }

    pub fn sample_points(&self, q: &DVector<f64>) -> Vec<Vector2<f64>> {
        let j = self.joints(q);
        let n = self.n_points as f64;
        let mut pts = Vec::new();
        for link in 0..2 {
            for k in 1..=self.n_points {
                pts.push(j[link] + (j[link + 1] - j[link]) * (k as f64 / n));
            }
        }
        pts
    }

    /// Point-mass kinetic energy `½ Σ m_i |ṗ_i|²`, velocities by direct differentiation.
    pub fn kinetic_energy(&self, q: &DVector<f64>, qdot: &DVector<f64>) -> f64 {
        let (a, b) = (q[0], q[0] + q[1]);
        let (ad, bd) = (qdot[0], qdot[0] + qdot[1]);
        let v1 = Vector2::new(-self.l[0] * a.sin() * ad, self.l[0] * a.cos() * ad);
        let v2 = v1 + Vector2::new(-self.l[1] * b.sin() * bd, self.l[1] * b.cos() * bd);
        0.5 * (self.m[0] * v1.norm_squared() + self.m[1] * v2.norm_squared())
    }

    /// Mass matrix recovered from the kinetic energy: `M_ij = ∂²T/∂q̇_i∂q̇_j`
    /// by polarization (T is exactly quadratic in q̇).
    pub fn mass_matrix(&self, q: &DVector<f64>) -> DMatrix<f64> {
        let e = |i: usize| DVector::from_fn(2, |k, _| if k == i { 1.0 } else { 0.0 });
        DMatrix::from_fn(2, 2, |i, j| {
            if i == j {
                2.0 * self.kinetic_energy(q, &e(i))
            } else {
                self.kinetic_energy(q, &(e(i) + e(j))) - self.kinetic_energy(q, &e(i)) - self.kinetic_energy(q, &e(j))
            }
        })
    }

    /// Christoffel-symbol Coriolis matrix from finite differences of `M`.
    pub fn coriolis_fd(&self, q: &DVector<f64>, qdot: &DVector<f64>, h: f64) -> DMatrix<f64> {
        let dm: Vec<DMatrix<f64>> = (0..2)
            .map(|k| {
                let mut p = q.clone();
                let mut m = q.clone();
                p[k] += h;
                m[k] -= h;
                (self.mass_matrix(&p) - self.mass_matrix(&m)) / (2.0 * h)
            })
            .collect();
        DMatrix::from_fn(2, 2, |i, j| {
            (0..2)
                .map(|k| 0.5 * (dm[k][(i, j)] + dm[j][(i, k)] - dm[i][(j, k)]) * qdot[k])
                .sum()
        })
    }

    pub fn lipschitz(&self) -> f64 {
        ((self.l[0] + self.l[1]).powi(2) + self.l[1].powi(2)).sqrt()
    }

    pub fn soft_distance(&self, q: &DVector<f64>) -> f64 {
        let d: Vec<f64> = self.sample_points(q).iter().map(|p| (p - self.center).norm()).collect();
        naive_softmin(&d, self.beta)
    }

    pub fn min_distance(&self, q: &DVector<f64>) -> f64 {
        self.sample_points(q)
            .iter()
            .map(|p| (p - self.center).norm())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn kp_min(&self) -> f64 {
        self.kp.clone().symmetric_eigenvalues().min()
    }

    pub fn gamma_star(&self, g: &DVector<f64>) -> f64 {
        let c = (self.soft_distance(g) - self.radius).max(0.0);
        self.kp_min() / (2.0 * self.lipschitz().powi(2)) * c * c
    }

    pub fn lyapunov(&self, s: &JointState, g: &DVector<f64>) -> f64 {
        let e = &s.q - g;
        self.kinetic_energy(&s.q, &s.qdot) + 0.5 * e.dot(&(&self.kp * &e))
    }

    pub fn delta(&self, s: &JointState, g: &DVector<f64>) -> f64 {
        self.gamma_star(g) - self.lyapunov(s, g)
    }

    pub fn h_ss(&self, g: &DVector<f64>) -> f64 {
        self.soft_distance(g) - self.radius
    }

    pub fn barrier(&self, s: &JointState, g: &DVector<f64>) -> f64 {
        naive_softmin(&[self.delta(s, g), self.h_ss(g)], self.beta_h)
    }

    /// `M q̈ = -Kp(q - g) - Kd q̇ - C q̇`, with `C` from finite differences of `M`.
    pub fn accel(&self, s: &JointState, g: &DVector<f64>) -> DVector<f64> {
        let c = self.coriolis_fd(&s.q, &s.qdot, 1e-6);
        let rhs = -(&self.kp * (&s.q - g)) - &self.kd * &s.qdot - c * &s.qdot;
        self.mass_matrix(&s.q)
            .lu()
            .solve(&rhs)
            .expect("mass matrix is invertible")
    }
}

/// Minimizer of `‖ρ - v‖²` over `aᵀρ ≤ b` from the KKT linear system.
pub fn kkt_projection(v: &DVector<f64>, a: &DVector<f64>, b: f64) -> DVector<f64> {
    if a.dot(v) <= b {
        return v.clone();
    }
    let n = v.len();
    let mut k = DMatrix::zeros(n + 1, n + 1);
    let mut rhs = DVector::zeros(n + 1);
    for i in 0..n {
        k[(i, i)] = 1.0;
        k[(i, n)] = a[i];
        k[(n, i)] = a[i];
        rhs[i] = v[i];
    }
    rhs[n] = b;
    let sol = k.lu().solve(&rhs).expect("KKT system is nonsingular");
    assert!(sol[n] >= -1e-12, "negative multiplier {}", sol[n]);
    sol.rows(0, n).into_owned()
}

/// Random `(state, g)` near an equilibrium.
pub fn random_point(rng: &mut ChaCha8Rng) -> (JointState, DVector<f64>) {
    let g = uniform(rng, 2, -std::f64::consts::PI, std::f64::consts::PI);
    let q = &g + uniform(rng, 2, -0.3, 0.3);
    let qdot = uniform(rng, 2, -1.0, 1.0);
    (JointState::new(q, qdot), g)
}

pub fn scenario_with(overrides: &[&str]) -> Scenario {
    let ovs: Vec<_> = overrides
        .iter()
        .map(|o| ergcbf::sim::parse_override(o).unwrap())
        .collect();
    Scenario::parse_with_overrides(ergcbf::sim::PAPER_2DOF, &ovs).unwrap()
}

/// One RK4 step of the time-reversed plant under a frozen reference: the
/// state at `t - h`.
pub fn reverse_rk4(model: &ergcbf::ArmModel, x: &JointState, g: &DVector<f64>, h: f64) -> JointState {
    let f = |x: &JointState| {
        let d = model.state_derivative(x, g).unwrap();
        JointState::new(-d.q, -d.qdot)
    };
    let k1 = f(x);
    let k2 = f(&x.axpy(0.5 * h, &k1));
    let k3 = f(&x.axpy(0.5 * h, &k2));
    let k4 = f(&x.axpy(h, &k3));
    JointState::new(
        &x.q + (&k1.q + (&k2.q + &k3.q) * 2.0 + &k4.q) * (h / 6.0),
        &x.qdot + (&k1.qdot + (&k2.qdot + &k3.qdot) * 2.0 + &k4.qdot) * (h / 6.0),
    )
}

fn stack(aug: &ergcbf::sim::AugmentedState) -> DVector<f64> {
    DVector::from_iterator(
        3 * aug.g.len(),
        aug.state
            .q
            .iter()
            .chain(aug.state.qdot.iter())
            .chain(aug.g.iter())
            .copied(),
    )
}

/// Integrates from `start` at time `t0` for 1 s in `steps` equal RK4 steps.
pub fn segment_endpoint(s: &Scenario, start: &ergcbf::sim::AugmentedState, t0: f64, steps: usize) -> DVector<f64> {
    let dt = 1.0 / steps as f64;
    let mut aug = start.clone();
    for k in 0..steps {
        aug = ergcbf::sim::rk4_step(&aug, t0 + k as f64 * dt, dt, s).unwrap();
    }
    stack(&aug)
}

/// `‖x_dt - x_ref‖ / ‖x_{dt/2} - x_ref‖` on the 1 s segment starting at `t0`,
/// with `x_ref` integrated at `dt/64`. The state at `t0` comes from the fine
/// step as well.
pub fn richardson_ratio(s: &Scenario, t0: f64, dt: f64) -> f64 {
    let n = (1.0 / dt).round() as usize;
    let fine = dt / 64.0;
    let mut start = ergcbf::sim::AugmentedState::initial(s);
    let pre = (t0 / fine).round() as usize;
    for k in 0..pre {
        start = ergcbf::sim::rk4_step(&start, k as f64 * fine, fine, s).unwrap();
    }
    let reference = segment_endpoint(s, &start, t0, n * 64);
    let e1 = (segment_endpoint(s, &start, t0, n) - &reference).norm();
    let e2 = (segment_endpoint(s, &start, t0, 2 * n) - &reference).norm();
    e1 / e2
}
