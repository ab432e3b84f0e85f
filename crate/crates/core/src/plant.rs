//! Planar serial manipulator under joint-space PD control.
//!
//! Kinematics (forward kinematics, sampled link points, point Jacobians and the
//! Lipschitz bound) work for any number of revolute joints. The closed-form
//! dynamics cover the two-joint arm with point masses at the link tips and no
//! gravity (horizontal plane).

use nalgebra::{DMatrix, DVector, Matrix2xX, Vector2};

use crate::error::{Error, Result};

const SYMMETRY_TOL: f64 = 1e-12;

fn perp(v: Vector2<f64>) -> Vector2<f64> {
    Vector2::new(-v.y, v.x)
}

/// Joint positions and velocities, `x = [q; q̇]`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointState {
    pub q: DVector<f64>,
    pub qdot: DVector<f64>,
}

impl JointState {
    pub fn new(q: DVector<f64>, qdot: DVector<f64>) -> Self {
        Self { q, qdot }
    }

    pub fn at_rest(q: DVector<f64>) -> Self {
        let n = q.len();
        Self {
            q,
            qdot: DVector::zeros(n),
        }
    }

    pub fn dof(&self) -> usize {
        self.q.len()
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(self.qdot.iter()).all(|v| v.is_finite())
    }

    /// `self + h * rate`, componentwise on both halves.
    pub fn axpy(&self, h: f64, rate: &JointState) -> JointState {
        JointState {
            q: &self.q + &rate.q * h,
            qdot: &self.qdot + &rate.qdot * h,
        }
    }
}

/// Circular obstacle in the plane of motion.
#[derive(Debug, Clone, PartialEq)]
pub struct Obstacle {
    center: Vector2<f64>,
    radius: f64,
}

impl Obstacle {
    pub fn new(center: Vector2<f64>, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::contract(format!(
                "obstacle radius must be positive, got {radius}"
            )));
        }
        if !(center.x.is_finite() && center.y.is_finite()) {
            return Err(Error::contract("obstacle center must be finite"));
        }
        Ok(Self { center, radius })
    }

    pub fn center(&self) -> Vector2<f64> {
        self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }
}

/// Link geometry, tip masses and PD gains of a planar arm.
///
/// Derived quantities (smallest eigenvalue of `Kp`, Lipschitz bound) are
/// computed once here.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmModel {
    lengths: Vec<f64>,
    masses: Vec<f64>,
    kp: DMatrix<f64>,
    kd: DMatrix<f64>,
    kp_min_eigenvalue: f64,
    lipschitz: f64,
}

fn check_gain(name: &str, m: &DMatrix<f64>, n: usize) -> Result<f64> {
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::contract(format!(
            "{name} must be {n}x{n}, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::contract(format!("{name} has non-finite entries")));
    }
    if (m - m.transpose()).amax() > SYMMETRY_TOL {
        return Err(Error::contract(format!("{name} is not symmetric")));
    }
    let min_eig = m.clone().symmetric_eigenvalues().min();
    if !(min_eig > 0.0) {
        return Err(Error::contract(format!(
            "{name} is not positive definite (smallest eigenvalue {min_eig})"
        )));
    }
    Ok(min_eig)
}

impl ArmModel {
    pub fn new(lengths: Vec<f64>, masses: Vec<f64>, kp: DMatrix<f64>, kd: DMatrix<f64>) -> Result<Self> {
        let n = lengths.len();
        if n == 0 {
            return Err(Error::contract("arm needs at least one link"));
        }
        if masses.len() != n {
            return Err(Error::contract(format!("{n} link lengths but {} masses", masses.len())));
        }
        if lengths
            .iter()
            .chain(masses.iter())
            .any(|v| !(*v > 0.0 && v.is_finite()))
        {
            return Err(Error::contract("link lengths and masses must be positive and finite"));
        }
        let kp_min_eigenvalue = check_gain("Kp", &kp, n)?;
        check_gain("Kd", &kd, n)?;
        let lipschitz = lipschitz_of(&lengths);
        Ok(Self {
            lengths,
            masses,
            kp,
            kd,
            kp_min_eigenvalue,
            lipschitz,
        })
    }

    pub fn dof(&self) -> usize {
        self.lengths.len()
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn kp(&self) -> &DMatrix<f64> {
        &self.kp
    }

    pub fn kd(&self) -> &DMatrix<f64> {
        &self.kd
    }

    /// λ_min(Kp).
    pub fn kp_min_eigenvalue(&self) -> f64 {
        self.kp_min_eigenvalue
    }

    /// `L_max = sqrt(Σ_m (Σ_{i≥m} l_i)²)`, a Lipschitz constant of every
    /// point on the arm with respect to the joint angles.
    pub fn lipschitz_bound(&self) -> f64 {
        self.lipschitz
    }

    /// Closed-loop equilibrium for a constant reference: `x_g = (g, 0)`.
    pub fn equilibrium(&self, g: &DVector<f64>) -> JointState {
        JointState::at_rest(g.clone())
    }

    fn check_dim(&self, what: &str, v: &DVector<f64>) -> Result<()> {
        if v.len() != self.dof() {
            return Err(Error::contract(format!(
                "{what} has {} entries, model has {} joints",
                v.len(),
                self.dof()
            )));
        }
        Ok(())
    }

    fn check_two_link(&self) -> Result<()> {
        if self.dof() != 2 {
            return Err(Error::UnsupportedModel(self.dof()));
        }
        Ok(())
    }

    pub fn mass_matrix(&self, q: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_two_link()?;
        self.check_dim("q", q)?;
        let (l1, l2) = (self.lengths[0], self.lengths[1]);
        let (m1, m2) = (self.masses[0], self.masses[1]);
        let c2 = q[1].cos();
        let m11 = m1 * l1 * l1 + m2 * (l1 * l1 + l2 * l2 + 2.0 * l1 * l2 * c2);
        let m12 = m2 * (l2 * l2 + l1 * l2 * c2);
        let m22 = m2 * l2 * l2;
        Ok(DMatrix::from_row_slice(2, 2, &[m11, m12, m12, m22]))
    }

    /// Christoffel-symbol Coriolis matrix; `Ṁ - 2C` is skew-symmetric.
    pub fn coriolis_matrix(&self, q: &DVector<f64>, qdot: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_two_link()?;
        self.check_dim("q", q)?;
        self.check_dim("qdot", qdot)?;
        let h = -self.masses[1] * self.lengths[0] * self.lengths[1] * q[1].sin();
        Ok(DMatrix::from_row_slice(
            2,
            2,
            &[h * qdot[1], h * (qdot[0] + qdot[1]), -h * qdot[0], 0.0],
        ))
    }

    /// `τ = -Kp (q - g) - Kd q̇`.
    pub fn pd_torque(&self, state: &JointState, g: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim("q", &state.q)?;
        self.check_dim("qdot", &state.qdot)?;
        self.check_dim("g", g)?;
        Ok(-(&self.kp * (&state.q - g)) - &self.kd * &state.qdot)
    }

    /// Closed-loop vector field `[q̇; M⁻¹(τ - C q̇)]`.
    pub fn state_derivative(&self, state: &JointState, g: &DVector<f64>) -> Result<JointState> {
        let tau = self.pd_torque(state, g)?;
        let m = self.mass_matrix(&state.q)?;
        let c = self.coriolis_matrix(&state.q, &state.qdot)?;
        let rhs = tau - c * &state.qdot;
        let chol = m.cholesky().ok_or_else(|| {
            Error::NumericalSingularity(format!("mass matrix not positive definite at q = {}", state.q))
        })?;
        Ok(JointState {
            q: state.qdot.clone(),
            qdot: chol.solve(&rhs),
        })
    }

    /// Joint positions `P_0 = 0, P_1, .., P_n`.
    ///
    /// Panics if `q` does not have one entry per joint.
    pub fn forward_kinematics(&self, q: &DVector<f64>) -> Vec<Vector2<f64>> {
        assert_eq!(q.len(), self.dof(), "joint vector length");
        let mut points = Vec::with_capacity(self.dof() + 1);
        let mut p = Vector2::zeros();
        let mut angle = 0.0;
        points.push(p);
        for (l, qi) in self.lengths.iter().zip(q.iter()) {
            angle += qi;
            p += Vector2::new(angle.cos(), angle.sin()) * *l;
            points.push(p);
        }
        points
    }

    /// Points `p_{k,j} = P_{k-1} + (j/N)(P_k - P_{k-1})`, `j = 1..N`, link by link.
    pub fn link_points(&self, q: &DVector<f64>, points_per_link: usize) -> Vec<Vector2<f64>> {
        let joints = self.forward_kinematics(q);
        let nk = points_per_link as f64;
        joints
            .windows(2)
            .flat_map(|w| {
                let (a, b) = (w[0], w[1]);
                (1..=points_per_link).map(move |j| a + (b - a) * (j as f64 / nk))
            })
            .collect()
    }

    /// `∂p_{k,j}/∂q` for every sampled point, in the order of [`Self::link_points`].
    pub fn link_point_jacobians(&self, q: &DVector<f64>, points_per_link: usize) -> Vec<Matrix2xX<f64>> {
        let joints = self.forward_kinematics(q);
        let n = self.dof();
        let points = self.link_points(q, points_per_link);
        points
            .iter()
            .enumerate()
            .map(|(idx, p)| {
                let link = idx / points_per_link; // 0-based: joints 0..=link move this point
                let mut jac = Matrix2xX::zeros(n);
                for (i, joint) in joints.iter().enumerate().take(link + 1) {
                    jac.set_column(i, &perp(p - joint));
                }
                jac
            })
            .collect()
    }

    /// `V(x, g) = ½ q̇ᵀ M(q) q̇ + ½ (q - g)ᵀ Kp (q - g)`.
    pub fn lyapunov(&self, state: &JointState, g: &DVector<f64>) -> Result<f64> {
        self.check_dim("g", g)?;
        let m = self.mass_matrix(&state.q)?;
        let e = &state.q - g;
        Ok(0.5 * state.qdot.dot(&(m * &state.qdot)) + 0.5 * e.dot(&(&self.kp * &e)))
    }

    /// `V̇ = -q̇ᵀ Kd q̇` along the closed loop with frozen reference.
    pub fn lyapunov_rate(&self, state: &JointState) -> f64 {
        -state.qdot.dot(&(&self.kd * &state.qdot))
    }
}

fn lipschitz_of(lengths: &[f64]) -> f64 {
    (0..lengths.len())
        .map(|m| lengths[m..].iter().sum::<f64>().powi(2))
        .sum::<f64>()
        .sqrt()
}
