//! Six-degree-of-freedom rigid-body model of the vehicle.
//!
//! Body-frame dynamics
//!
//! ```text
//! M u_dot + C(u) u + D(u) u = tau + tau_E
//! eta_dot = J(eta) u
//! ```
//!
//! with neutral buoyancy (no restoring term), diagonal inertia and added mass
//! about the centre of gravity, and diagonal linear plus quadratic damping.
//! Attitude is ZYX Euler angles.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{DMatrix, Matrix3, Matrix6, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum distance of pitch from +/-pi/2 before the Euler-rate map is refused.
pub const GIMBAL_MARGIN: f64 = 1e-6;

const CANONICAL_MODEL_JSON: &str = include_str!("../../../configs/canonical_model.json");

/// Wrap an angle to (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

/// One of the six rigid-body degrees of freedom. The index is shared by pose,
/// velocity and wrench vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dof {
    Surge,
    Sway,
    Heave,
    Roll,
    Pitch,
    Yaw,
}

impl Dof {
    pub const ALL: [Dof; 6] = [Dof::Surge, Dof::Sway, Dof::Heave, Dof::Roll, Dof::Pitch, Dof::Yaw];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_angular(self) -> bool {
        self.index() >= 3
    }

    pub fn name(self) -> &'static str {
        match self {
            Dof::Surge => "surge",
            Dof::Sway => "sway",
            Dof::Heave => "heave",
            Dof::Roll => "roll",
            Dof::Pitch => "pitch",
            Dof::Yaw => "yaw",
        }
    }

    /// Name of the pose coordinate driven by this DOF.
    pub fn pose_name(self) -> &'static str {
        ["x", "y", "z", "phi", "theta", "psi"][self.index()]
    }
}

/// Ordered subset of DOFs handled by a controller task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DofSelector(Vec<Dof>);

impl DofSelector {
    pub fn new(dofs: Vec<Dof>) -> Result<Self> {
        if dofs.is_empty() {
            return Err(Error::Config("DOF selector must not be empty".into()));
        }
        for (i, d) in dofs.iter().enumerate() {
            if dofs[..i].contains(d) {
                return Err(Error::Config(format!("duplicate DOF {:?} in selector", d)));
            }
        }
        Ok(Self(dofs))
    }

    pub fn single(dof: Dof) -> Self {
        Self(vec![dof])
    }

    pub fn full() -> Self {
        Self(Dof::ALL.to_vec())
    }

    /// Heave, roll, pitch and yaw.
    pub fn depth_orientation() -> Self {
        Self(vec![Dof::Heave, Dof::Roll, Dof::Pitch, Dof::Yaw])
    }

    pub fn dofs(&self) -> &[Dof] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn indices(&self) -> Vec<usize> {
        self.0.iter().map(|d| d.index()).collect()
    }

    /// Rows and columns of `m` picked by the selector.
    pub fn restrict(&self, m: &Matrix6<f64>) -> DMatrix<f64> {
        let idx = self.indices();
        DMatrix::from_fn(idx.len(), idx.len(), |r, c| m[(idx[r], idx[c])])
    }

    pub fn pick(&self, v: &Vector6<f64>) -> Vec<f64> {
        self.0.iter().map(|d| v[d.index()]).collect()
    }
}

/// Position and ZYX Euler attitude in the inertial frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub phi: f64,
    pub theta: f64,
    pub psi: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, z: f64, phi: f64, theta: f64, psi: f64) -> Self {
        Self { x, y, z, phi, theta, psi }
    }

    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Self::new(v[0], v[1], v[2], v[3], v[4], v[5])
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(self.x, self.y, self.z, self.phi, self.theta, self.psi)
    }

    /// Same pose with the three angles wrapped to (-pi, pi].
    pub fn wrapped(&self) -> Self {
        Self { phi: wrap_angle(self.phi), theta: wrap_angle(self.theta), psi: wrap_angle(self.psi), ..*self }
    }

    pub fn get(&self, dof: Dof) -> f64 {
        self.to_vector()[dof.index()]
    }
}

/// Linear and angular velocity in the body frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BodyVelocity {
    pub u: f64,
    pub v: f64,
    pub w: f64,
    pub p: f64,
    pub q: f64,
    pub r: f64,
}

impl BodyVelocity {
    pub fn new(u: f64, v: f64, w: f64, p: f64, q: f64, r: f64) -> Self {
        Self { u, v, w, p, q, r }
    }

    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Self::new(v[0], v[1], v[2], v[3], v[4], v[5])
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(self.u, self.v, self.w, self.p, self.q, self.r)
    }

    pub fn is_finite(&self) -> bool {
        self.to_vector().iter().all(|c| c.is_finite())
    }

    pub fn get(&self, dof: Dof) -> f64 {
        self.to_vector()[dof.index()]
    }
}

/// Body-frame forces and moments.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Wrench {
    pub fx: f64,
    pub fy: f64,
    pub fz: f64,
    pub mx: f64,
    pub my: f64,
    pub mz: f64,
}

impl Wrench {
    pub fn new(fx: f64, fy: f64, fz: f64, mx: f64, my: f64, mz: f64) -> Self {
        Self { fx, fy, fz, mx, my, mz }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Self::new(v[0], v[1], v[2], v[3], v[4], v[5])
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(self.fx, self.fy, self.fz, self.mx, self.my, self.mz)
    }

    pub fn from_parts(force: Vector3<f64>, moment: Vector3<f64>) -> Self {
        Self::new(force.x, force.y, force.z, moment.x, moment.y, moment.z)
    }

    /// Wrench with only the selected components set.
    pub fn from_selected(selector: &DofSelector, values: &[f64]) -> Self {
        let mut v = Vector6::zeros();
        for (d, val) in selector.dofs().iter().zip(values) {
            v[d.index()] = *val;
        }
        Self::from_vector(&v)
    }

    pub fn get(&self, dof: Dof) -> f64 {
        self.to_vector()[dof.index()]
    }

    pub fn is_finite(&self) -> bool {
        self.to_vector().iter().all(|c| c.is_finite())
    }
}

impl std::ops::Add for Wrench {
    type Output = Wrench;
    fn add(self, rhs: Wrench) -> Wrench {
        Wrench::from_vector(&(self.to_vector() + rhs.to_vector()))
    }
}

impl std::ops::Mul<f64> for Wrench {
    type Output = Wrench;
    fn mul(self, s: f64) -> Wrench {
        Wrench::from_vector(&(self.to_vector() * s))
    }
}

/// Pose and body velocity together.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleState {
    pub pose: Pose,
    pub velocity: BodyVelocity,
}

impl VehicleState {
    pub fn new(pose: Pose, velocity: BodyVelocity) -> Self {
        Self { pose, velocity }
    }
}

/// Mass, inertia, added mass and damping of the vehicle, plus the thruster
/// mounting dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub mass: f64,
    /// Ixx, Iyy, Izz about the centre of gravity.
    pub inertia: [f64; 3],
    pub added_mass: [f64; 6],
    pub linear_damping: [f64; 6],
    pub quadratic_damping: [f64; 6],
    /// Distance between the front and rear thrusters.
    pub length_l: f64,
    /// Distance between the left and right thrusters.
    pub width_d: f64,
}

impl ModelParams {
    /// The canonical parameter set shipped in `configs/canonical_model.json`.
    pub fn canonical() -> Self {
        Self::from_json(CANONICAL_MODEL_JSON).expect("canonical model config is valid")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let p: ModelParams = serde_json::from_str(s)?;
        p.validate()?;
        Ok(p)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("params serialize")
    }

    pub fn validate(&self) -> Result<()> {
        let all = std::iter::once(self.mass)
            .chain(self.inertia)
            .chain(self.added_mass)
            .chain(self.linear_damping)
            .chain(self.quadratic_damping)
            .chain([self.length_l, self.width_d]);
        if all.clone().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams("non-finite value".into()));
        }
        if self.mass <= 0.0 || self.inertia.iter().any(|&i| i <= 0.0) {
            return Err(Error::InvalidParams("mass and inertia must be positive".into()));
        }
        if self.mass_diagonal().iter().any(|&m| m <= 0.0) {
            return Err(Error::InvalidParams("mass matrix is not positive definite".into()));
        }
        if self.linear_damping.iter().chain(&self.quadratic_damping).any(|&d| d < 0.0) {
            return Err(Error::InvalidParams("damping coefficients must be >= 0".into()));
        }
        if self.length_l <= 0.0 || self.width_d <= 0.0 {
            return Err(Error::InvalidParams("vehicle length and width must be positive".into()));
        }
        Ok(())
    }

    /// Diagonal of M = M_RB + M_A.
    pub fn mass_diagonal(&self) -> Vector6<f64> {
        let m = self.mass;
        let i = self.inertia;
        let a = self.added_mass;
        Vector6::new(m + a[0], m + a[1], m + a[2], i[0] + a[3], i[1] + a[4], i[2] + a[5])
    }

    pub fn mass_matrix(&self) -> Matrix6<f64> {
        Matrix6::from_diagonal(&self.mass_diagonal())
    }

    pub fn mass_matrix_inverse(&self) -> Matrix6<f64> {
        Matrix6::from_diagonal(&self.mass_diagonal().map(|m| 1.0 / m))
    }

    /// Kinetic energy 0.5 u' M u.
    pub fn kinetic_energy(&self, u: &BodyVelocity) -> f64 {
        let v = u.to_vector();
        0.5 * v.dot(&(self.mass_matrix() * v))
    }
}

fn skew(a: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -a.z, a.y, a.z, 0.0, -a.x, -a.y, a.x, 0.0)
}

/// Rigid-body plus added-mass Coriolis/centripetal matrix.
///
/// For a diagonal M about the centre of gravity both contributions collapse to
/// `[[0, -S(M1 v1)], [-S(M1 v1), -S(M2 v2)]]`, which is skew-symmetric.
pub fn coriolis_matrix(params: &ModelParams, u: &BodyVelocity) -> Matrix6<f64> {
    let md = params.mass_diagonal();
    let v = u.to_vector();
    let lin = Vector3::new(md[0] * v[0], md[1] * v[1], md[2] * v[2]);
    let ang = Vector3::new(md[3] * v[3], md[4] * v[4], md[5] * v[5]);
    let s_lin = -skew(&lin);
    let s_ang = -skew(&ang);
    let mut c = Matrix6::zeros();
    c.fixed_view_mut::<3, 3>(0, 3).copy_from(&s_lin);
    c.fixed_view_mut::<3, 3>(3, 0).copy_from(&s_lin);
    c.fixed_view_mut::<3, 3>(3, 3).copy_from(&s_ang);
    c
}

/// Diagonal damping with entries `linear_i + quadratic_i * |u_i|`.
pub fn damping_matrix(params: &ModelParams, u: &BodyVelocity) -> Matrix6<f64> {
    let v = u.to_vector();
    Matrix6::from_fn(
        |r, c| {
            if r == c {
                params.linear_damping[r] + params.quadratic_damping[r] * v[r].abs()
            } else {
                0.0
            }
        },
    )
}

/// ZYX rotation from body to inertial frame.
pub fn rotation_matrix(phi: f64, theta: f64, psi: f64) -> Matrix3<f64> {
    let (sf, cf) = phi.sin_cos();
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = psi.sin_cos();
    Matrix3::new(
        cp * ct,
        -sp * cf + cp * st * sf,
        sp * sf + cp * cf * st,
        sp * ct,
        cp * cf + sf * st * sp,
        -cp * sf + st * sp * cf,
        -st,
        ct * sf,
        ct * cf,
    )
}

/// Body angular rates to Euler-angle rates.
pub fn euler_rate_matrix(phi: f64, theta: f64) -> Result<Matrix3<f64>> {
    if (theta.abs() - PI / 2.0).abs() < GIMBAL_MARGIN || theta.abs() > PI / 2.0 {
        return Err(Error::GimbalLock { theta });
    }
    let (sf, cf) = phi.sin_cos();
    let (tt, ct) = (theta.tan(), theta.cos());
    Ok(Matrix3::new(1.0, sf * tt, cf * tt, 0.0, cf, -sf, 0.0, sf / ct, cf / ct))
}

/// Block-diagonal J(eta) mapping body velocity to pose rate.
pub fn kinematic_jacobian(eta: &Pose) -> Result<Matrix6<f64>> {
    let t = euler_rate_matrix(eta.phi, eta.theta)?;
    let mut j = Matrix6::zeros();
    j.fixed_view_mut::<3, 3>(0, 0).copy_from(&rotation_matrix(eta.phi, eta.theta, eta.psi));
    j.fixed_view_mut::<3, 3>(3, 3).copy_from(&t);
    Ok(j)
}

/// Body acceleration from Newton-Euler balance.
pub fn acceleration(params: &ModelParams, state: &VehicleState, tau: &Wrench, tau_env: &Wrench) -> BodyVelocity {
    let u = &state.velocity;
    let v = u.to_vector();
    let rhs = tau.to_vector() + tau_env.to_vector() - coriolis_matrix(params, u) * v - damping_matrix(params, u) * v;
    BodyVelocity::from_vector(&rhs.component_div(&params.mass_diagonal()))
}

fn state_derivative(
    params: &ModelParams,
    pose: &Vector6<f64>,
    vel: &Vector6<f64>,
    tau: &Wrench,
    tau_env: &Wrench,
) -> Result<(Vector6<f64>, Vector6<f64>)> {
    let state = VehicleState::new(Pose::from_vector(pose), BodyVelocity::from_vector(vel));
    let j = kinematic_jacobian(&state.pose)?;
    let eta_dot = j * vel;
    let u_dot = acceleration(params, &state, tau, tau_env).to_vector();
    Ok((eta_dot, u_dot))
}

/// Advance the plant by one classic fourth-order Runge-Kutta step. The wrench
/// is held constant over the step; angles are wrapped afterwards.
pub fn step_plant(
    params: &ModelParams,
    state: &VehicleState,
    tau: &Wrench,
    tau_env: &Wrench,
    dt: f64,
) -> Result<VehicleState> {
    if !(dt > 0.0) {
        return Err(Error::Config(format!("time step must be positive, got {dt}")));
    }
    let e0 = state.pose.to_vector();
    let v0 = state.velocity.to_vector();
    let (ke1, kv1) = state_derivative(params, &e0, &v0, tau, tau_env)?;
    let (ke2, kv2) = state_derivative(params, &(e0 + ke1 * (dt / 2.0)), &(v0 + kv1 * (dt / 2.0)), tau, tau_env)?;
    let (ke3, kv3) = state_derivative(params, &(e0 + ke2 * (dt / 2.0)), &(v0 + kv2 * (dt / 2.0)), tau, tau_env)?;
    let (ke4, kv4) = state_derivative(params, &(e0 + ke3 * dt), &(v0 + kv3 * dt), tau, tau_env)?;
    let e1 = e0 + (ke1 + ke2 * 2.0 + ke3 * 2.0 + ke4) * (dt / 6.0);
    let v1 = v0 + (kv1 + kv2 * 2.0 + kv3 * 2.0 + kv4) * (dt / 6.0);
    Ok(VehicleState::new(Pose::from_vector(&e1).wrapped(), BodyVelocity::from_vector(&v1)))
}

/// Forward-Euler state-space pair used by the controller.
///
/// Pose model `eta[k+1] = phi1 eta[k] + gamma1 u[k]`, velocity model
/// `u[k+1] = phi2 u[k] + gamma2 tau[k]`, both restricted to the selected DOFs.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModelPair {
    pub phi1: DMatrix<f64>,
    pub gamma1: DMatrix<f64>,
    pub phi2: DMatrix<f64>,
    pub gamma2: DMatrix<f64>,
    pub dt: f64,
}

/// Velocity-model matrices `(phi2, gamma2)` linearised at `u_lin`.
pub fn velocity_model(
    params: &ModelParams,
    u_lin: &BodyVelocity,
    dt: f64,
    selector: &DofSelector,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let m_inv = params.mass_matrix_inverse();
    let cd = coriolis_matrix(params, u_lin) + damping_matrix(params, u_lin);
    let phi2 = Matrix6::identity() - m_inv * cd * dt;
    let gamma2 = m_inv * dt;
    (selector.restrict(&phi2), selector.restrict(&gamma2))
}

/// Pose-model input matrix `J(eta) dt` restricted to the selected DOFs.
pub fn pose_input_matrix(eta: &Pose, dt: f64, selector: &DofSelector) -> Result<DMatrix<f64>> {
    Ok(selector.restrict(&(kinematic_jacobian(eta)? * dt)))
}

/// Discretise both models about `(eta, u_lin)`.
pub fn discretize(
    params: &ModelParams,
    eta: &Pose,
    u_lin: &BodyVelocity,
    dt: f64,
    selector: &DofSelector,
) -> Result<LinearModelPair> {
    if !(dt > 0.0) {
        return Err(Error::Config(format!("time step must be positive, got {dt}")));
    }
    let n = selector.len();
    let (phi2, gamma2) = velocity_model(params, u_lin, dt, selector);
    Ok(LinearModelPair {
        phi1: DMatrix::identity(n, n),
        gamma1: pose_input_matrix(eta, dt, selector)?,
        phi2,
        gamma2,
        dt,
    })
}
