//! Closed-loop controllers for one task (a fixed set of DOFs).
//!
//! The cascade runs two incremental MPC loops per cycle. The outer loop plans
//! over the pose model `eta[k+1] = eta[k] + J(eta) dt v[k]` and hands its
//! velocity command to the inner loop, which plans over
//! `v[k+1] = Phi2 v[k] + Gamma2 tau[k]` and returns the wrench.
//!
//! * [`ControllerKind::Ffampc`]: outer input matrix rebuilt from the measured
//!   attitude each cycle; inner model relinearised at the measured velocity
//!   and corrected by the gated adaptive law.
//! * [`ControllerKind::Mpc`]: the same cascade with both models frozen at the
//!   zero state.
//! * [`ControllerKind::Pid`]: independent parallel-form PID per DOF.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::adaptive::{feedforward_gamma, AdaptiveConfig, EstimatedModel, GateStatus, RegressorSample};
use crate::error::{Error, Result};
use crate::model::{velocity_model, wrap_angle, BodyVelocity, DofSelector, ModelParams, Pose};
use crate::mpc::{augment, augmented_state, solve_step, AugmentedModel, MpcConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerKind {
    Ffampc,
    Mpc,
    Pid,
}

impl ControllerKind {
    pub fn name(self) -> &'static str {
        match self {
            ControllerKind::Ffampc => "ffampc",
            ControllerKind::Mpc => "mpc",
            ControllerKind::Pid => "pid",
        }
    }
}

impl std::str::FromStr for ControllerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "ffampc" => Ok(Self::Ffampc),
            "mpc" => Ok(Self::Mpc),
            "pid" => Ok(Self::Pid),
            other => Err(Error::Config(format!("unknown controller '{other}'"))),
        }
    }
}

/// Multiplicative error injected into the controller's velocity model.
///
/// `phi2 = state * (I - damping * dt M^-1 (C + D))`, `gamma2 = input * dt M^-1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelBias {
    pub damping: f64,
    pub input: f64,
    pub state: f64,
}

impl Default for ModelBias {
    fn default() -> Self {
        Self { damping: 1.0, input: 1.0, state: 1.0 }
    }
}

impl ModelBias {
    pub fn is_identity(&self) -> bool {
        *self == Self::default()
    }

    pub fn validate(&self) -> Result<()> {
        if [self.damping, self.input, self.state].iter().any(|v| !v.is_finite()) || self.input == 0.0 {
            return Err(Error::Config("model bias factors must be finite and input non-zero".into()));
        }
        Ok(())
    }
}

/// Velocity-model pair of the selected DOFs with `bias` applied.
pub fn biased_velocity_model(
    params: &ModelParams,
    u_lin: &BodyVelocity,
    dt: f64,
    selector: &DofSelector,
    bias: &ModelBias,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let (phi2, gamma2) = velocity_model(params, u_lin, dt, selector);
    let n = selector.len();
    let eye = DMatrix::<f64>::identity(n, n);
    let phi2 = (&eye - (&eye - phi2) * bias.damping) * bias.state;
    (phi2, gamma2 * bias.input)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PidConfig {
    pub kp: Vec<f64>,
    pub ki: Vec<f64>,
    pub kd: Vec<f64>,
    /// Bound on the magnitude of each integral state.
    pub integral_clamp: f64,
    /// First-order derivative filter pole in [0, 1); 0 disables filtering.
    #[serde(default)]
    pub derivative_filter: f64,
}

impl PidConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.kp.len() != n || self.ki.len() != n || self.kd.len() != n {
            return Err(Error::Config(format!("PID gains must have {n} entries")));
        }
        if !(self.integral_clamp > 0.0) {
            return Err(Error::Config("integral clamp must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.derivative_filter) {
            return Err(Error::Config("derivative filter must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PidState {
    pub integral: Vec<f64>,
    pub derivative: Vec<f64>,
    pub prev_error: Option<Vec<f64>>,
}

/// Tracking error per DOF; angular errors wrapped.
fn pose_error(selector: &DofSelector, reference: &[f64], eta: &Pose) -> Vec<f64> {
    selector
        .dofs()
        .iter()
        .zip(reference)
        .map(|(d, r)| {
            let e = r - eta.get(*d);
            if d.is_angular() {
                wrap_angle(e)
            } else {
                e
            }
        })
        .collect()
}

/// Parallel-form discrete PID with a clamped integral and a filtered
/// derivative. The first call has no derivative term.
pub fn pid_step(config: &PidConfig, error: &[f64], dt: f64, state: &PidState) -> Result<(Vec<f64>, PidState)> {
    let n = error.len();
    config.validate(n)?;
    if !(dt > 0.0) {
        return Err(Error::Config("dt must be positive".into()));
    }
    let mut next = PidState {
        integral: if state.integral.len() == n { state.integral.clone() } else { vec![0.0; n] },
        derivative: if state.derivative.len() == n { state.derivative.clone() } else { vec![0.0; n] },
        prev_error: Some(error.to_vec()),
    };
    let a = config.derivative_filter;
    let mut out = vec![0.0; n];
    for i in 0..n {
        next.integral[i] = (next.integral[i] + error[i] * dt).clamp(-config.integral_clamp, config.integral_clamp);
        let raw = match &state.prev_error {
            Some(prev) if prev.len() == n => (error[i] - prev[i]) / dt,
            _ => 0.0,
        };
        next.derivative[i] = a * next.derivative[i] + (1.0 - a) * raw;
        out[i] = config.kp[i] * error[i] + config.ki[i] * next.integral[i] + config.kd[i] * next.derivative[i];
    }
    Ok((out, next))
}

/// Everything a controller needs besides its own parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerConfig {
    #[serde(rename = "type")]
    pub kind: ControllerKind,
    #[serde(default)]
    pub outer: MpcConfig,
    #[serde(default)]
    pub inner: MpcConfig,
    #[serde(default)]
    pub adaptive: AdaptiveConfig,
    #[serde(default)]
    pub pid: Option<PidConfig>,
}

/// Output of one control cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlOutput {
    /// Commanded wrench on the selected DOFs.
    pub tau: Vec<f64>,
    /// Velocity command passed from the outer to the inner loop.
    pub u_r: Option<Vec<f64>>,
    /// First increment of the inner solve.
    pub delta_tau: Option<Vec<f64>>,
    /// Outcome of the adaptive update this cycle, if one ran.
    pub gate: Option<GateStatus>,
    pub outer_kkt: Option<f64>,
    pub inner_kkt: Option<f64>,
}

fn dvec(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

/// Measurements from the previous cycle.
#[derive(Debug, Clone, PartialEq)]
struct CycleMemory {
    pose: Vec<f64>,
    velocity: Vec<f64>,
    inner_state: DVector<f64>,
}

/// The two-loop MPC, with or without the feedforward/adaptive updates.
#[derive(Debug, Clone)]
pub struct CascadeController {
    adaptive_enabled: bool,
    selector: DofSelector,
    params: ModelParams,
    bias: ModelBias,
    outer_cfg: MpcConfig,
    inner_cfg: MpcConfig,
    adaptive_cfg: AdaptiveConfig,
    initial_estimate: EstimatedModel,
    frozen_outer: AugmentedModel,
    frozen_inner: AugmentedModel,
    // cycle state
    estimate: EstimatedModel,
    nominal: DMatrix<f64>,
    memory: Option<CycleMemory>,
    /// Wrench actually applied on the previous cycle.
    tau_prev: DVector<f64>,
    /// `tau_prev` as it was when the current command was formed.
    tau_base: DVector<f64>,
    /// Increment actually applied on the previous cycle.
    dtau_prev: DVector<f64>,
}

impl CascadeController {
    pub fn new(
        adaptive_enabled: bool,
        selector: DofSelector,
        params: ModelParams,
        bias: ModelBias,
        outer_cfg: MpcConfig,
        inner_cfg: MpcConfig,
        adaptive_cfg: AdaptiveConfig,
    ) -> Result<Self> {
        params.validate()?;
        bias.validate()?;
        outer_cfg.validate()?;
        inner_cfg.validate()?;
        adaptive_cfg.validate()?;
        if (outer_cfg.dt - inner_cfg.dt).abs() > 1e-15 {
            return Err(Error::Config("outer and inner loops must share dt".into()));
        }
        let dt = inner_cfg.dt;
        let n = selector.len();
        let frozen_outer = augment(&DMatrix::identity(n, n), &feedforward_gamma(&Pose::default(), dt, &selector)?)?;
        let (phi2, gamma2) = biased_velocity_model(&params, &BodyVelocity::default(), dt, &selector, &bias);
        let frozen_inner = augment(&phi2, &gamma2)?;
        let nominal = frozen_inner.packed();
        let mut init = frozen_inner.clone();
        init.b *= adaptive_cfg.initial_bias;
        let initial_estimate = EstimatedModel::new(&init, &adaptive_cfg)?;
        Ok(Self {
            adaptive_enabled,
            selector,
            params,
            bias,
            outer_cfg,
            inner_cfg,
            adaptive_cfg,
            estimate: initial_estimate.clone(),
            initial_estimate,
            frozen_outer,
            frozen_inner,
            nominal,
            memory: None,
            tau_prev: DVector::zeros(n),
            tau_base: DVector::zeros(n),
            dtau_prev: DVector::zeros(n),
        })
    }

    pub fn selector(&self) -> &DofSelector {
        &self.selector
    }

    pub fn outer_config(&self) -> &MpcConfig {
        &self.outer_cfg
    }

    pub fn inner_config(&self) -> &MpcConfig {
        &self.inner_cfg
    }

    pub fn adaptive_config(&self) -> &AdaptiveConfig {
        &self.adaptive_cfg
    }

    pub fn bias(&self) -> &ModelBias {
        &self.bias
    }

    /// The adaptive estimate, when adaptation is enabled.
    pub fn estimate(&self) -> Option<&EstimatedModel> {
        self.adaptive_enabled.then_some(&self.estimate)
    }

    /// Model used by the inner loop for the next solve.
    pub fn inner_model(&self) -> AugmentedModel {
        if self.adaptive_enabled {
            self.estimate.model()
        } else {
            self.frozen_inner.clone()
        }
    }

    pub fn reset(&mut self) {
        self.estimate = self.initial_estimate.clone();
        self.nominal = self.frozen_inner.packed();
        self.memory = None;
        self.tau_prev.fill(0.0);
        self.tau_base.fill(0.0);
        self.dtau_prev.fill(0.0);
    }

    /// Record the wrench that actually reached the vehicle (after saturation).
    /// Without this call the command is assumed to have been applied as is.
    pub fn note_applied(&mut self, tau_applied: &[f64]) {
        let applied = dvec(tau_applied);
        self.dtau_prev = &applied - &self.tau_base;
        self.tau_prev = applied;
    }

    /// One cycle. `pose_refs` holds the `np` upcoming pose references of the
    /// selected DOFs, starting at `k+1`.
    pub fn step(&mut self, pose_refs: &[Vec<f64>], eta: &Pose, u: &BodyVelocity) -> Result<ControlOutput> {
        let n = self.selector.len();
        if !u.is_finite() || !eta.to_vector().iter().all(|c| c.is_finite()) {
            return Err(Error::Config("non-finite feedback".into()));
        }
        let dofs = self.selector.dofs().to_vec();
        let y_pose: Vec<f64> = dofs.iter().map(|d| eta.get(*d)).collect();
        let y_vel: Vec<f64> = dofs.iter().map(|d| u.get(*d)).collect();

        let (prev_pose, prev_vel) = match &self.memory {
            Some(m) => (m.pose.clone(), m.velocity.clone()),
            None => (y_pose.clone(), y_vel.clone()),
        };
        let d_pose: Vec<f64> = dofs
            .iter()
            .enumerate()
            .map(|(i, d)| {
                let dp = y_pose[i] - prev_pose[i];
                if d.is_angular() {
                    wrap_angle(dp)
                } else {
                    dp
                }
            })
            .collect();

        // Outer loop: pose -> velocity command.
        let outer_model = if self.adaptive_enabled {
            augment(&DMatrix::identity(n, n), &feedforward_gamma(eta, self.outer_cfg.dt, &self.selector)?)?
        } else {
            self.frozen_outer.clone()
        };
        let y = dvec(&y_pose);
        let z_outer = augmented_state(&y, &(&y - dvec(&d_pose)));
        if pose_refs.len() != self.outer_cfg.np {
            return Err(Error::Dimension(format!(
                "{} pose references for horizon {}",
                pose_refs.len(),
                self.outer_cfg.np
            )));
        }
        let refs: Vec<DVector<f64>> =
            pose_refs
                .iter()
                .map(|r| {
                    DVector::from_fn(n, |i, _| {
                        if dofs[i].is_angular() {
                            y_pose[i] + wrap_angle(r[i] - y_pose[i])
                        } else {
                            r[i]
                        }
                    })
                })
                .collect();
        let outer = solve_step(&outer_model, &self.outer_cfg, &z_outer, &refs)
            .map_err(|e| Error::Loop { loop_name: "outer", source: Box::new(e) })?;
        let u_r = dvec(&y_vel) + &outer.first_increment;

        // Inner loop: velocity -> wrench.
        let v = dvec(&y_vel);
        let z_inner = augmented_state(&v, &dvec(&prev_vel));
        let mut gate = None;
        if self.adaptive_enabled {
            if let Some(mem) = &self.memory {
                let sample = RegressorSample {
                    x_k: mem.inner_state.clone(),
                    delta_u_k: self.dtau_prev.clone(),
                    x_next_measured: z_inner.clone(),
                };
                gate = Some(self.estimate.update(&sample)?);
            }
            let (phi2, gamma2) = biased_velocity_model(&self.params, u, self.inner_cfg.dt, &self.selector, &self.bias);
            let nominal = augment(&phi2, &gamma2)?.packed();
            self.estimate.rebase(&self.nominal, &nominal);
            self.nominal = nominal;
        }
        let inner_model = self.inner_model();
        let inner_refs = vec![u_r.clone(); self.inner_cfg.np];
        let inner = solve_step(&inner_model, &self.inner_cfg, &z_inner, &inner_refs)
            .map_err(|e| Error::Loop { loop_name: "inner", source: Box::new(e) })?;

        let tau = &self.tau_prev + &inner.first_increment;
        self.tau_base = self.tau_prev.clone();
        self.dtau_prev = inner.first_increment.clone();
        self.tau_prev = tau.clone();
        self.memory = Some(CycleMemory { pose: y_pose, velocity: y_vel, inner_state: z_inner });

        Ok(ControlOutput {
            tau: tau.iter().copied().collect(),
            u_r: Some(u_r.iter().copied().collect()),
            delta_tau: Some(inner.first_increment.iter().copied().collect()),
            gate,
            outer_kkt: Some(outer.kkt_residual),
            inner_kkt: Some(inner.kkt_residual),
        })
    }
}

/// PID baseline on the selected pose DOFs.
#[derive(Debug, Clone)]
pub struct PidController {
    selector: DofSelector,
    config: PidConfig,
    dt: f64,
    state: PidState,
}

impl PidController {
    pub fn new(selector: DofSelector, config: PidConfig, dt: f64) -> Result<Self> {
        config.validate(selector.len())?;
        if !(dt > 0.0) {
            return Err(Error::Config("dt must be positive".into()));
        }
        Ok(Self { selector, config, dt, state: PidState::default() })
    }

    pub fn config(&self) -> &PidConfig {
        &self.config
    }

    pub fn reset(&mut self) {
        self.state = PidState::default();
    }

    pub fn step(&mut self, reference: &[f64], eta: &Pose) -> Result<ControlOutput> {
        let err = pose_error(&self.selector, reference, eta);
        let (tau, state) = pid_step(&self.config, &err, self.dt, &self.state)?;
        self.state = state;
        Ok(ControlOutput { tau, u_r: None, delta_tau: None, gate: None, outer_kkt: None, inner_kkt: None })
    }
}

/// Any of the three controllers behind one interface.
#[derive(Debug, Clone)]
pub enum Controller {
    Cascade(Box<CascadeController>),
    Pid(PidController),
}

impl Controller {
    pub fn build(
        config: &ControllerConfig,
        selector: &DofSelector,
        params: &ModelParams,
        bias: &ModelBias,
    ) -> Result<Self> {
        match config.kind {
            ControllerKind::Pid => {
                let pid =
                    config.pid.clone().ok_or_else(|| Error::Config("pid controller needs a 'pid' section".into()))?;
                Ok(Controller::Pid(PidController::new(selector.clone(), pid, config.inner.dt)?))
            }
            kind => Ok(Controller::Cascade(Box::new(CascadeController::new(
                kind == ControllerKind::Ffampc,
                selector.clone(),
                params.clone(),
                *bias,
                config.outer.clone(),
                config.inner.clone(),
                config.adaptive.clone(),
            )?))),
        }
    }

    pub fn kind(&self) -> ControllerKind {
        match self {
            Controller::Cascade(c) if c.adaptive_enabled => ControllerKind::Ffampc,
            Controller::Cascade(_) => ControllerKind::Mpc,
            Controller::Pid(_) => ControllerKind::Pid,
        }
    }

    /// Number of upcoming references the controller wants (1 for PID).
    pub fn preview(&self) -> usize {
        match self {
            Controller::Cascade(c) => c.outer_cfg.np,
            Controller::Pid(_) => 1,
        }
    }

    /// `refs[0]` is the reference at the current time, followed by the preview.
    pub fn step(&mut self, refs: &[Vec<f64>], eta: &Pose, u: &BodyVelocity) -> Result<ControlOutput> {
        match self {
            Controller::Cascade(c) => c.step(&refs[1..], eta, u),
            Controller::Pid(p) => p.step(&refs[0], eta),
        }
    }

    pub fn note_applied(&mut self, tau_applied: &[f64]) {
        if let Controller::Cascade(c) = self {
            c.note_applied(tau_applied);
        }
    }

    pub fn reset(&mut self) {
        match self {
            Controller::Cascade(c) => c.reset(),
            Controller::Pid(p) => p.reset(),
        }
    }

    pub fn estimate(&self) -> Option<&EstimatedModel> {
        match self {
            Controller::Cascade(c) => c.estimate(),
            Controller::Pid(_) => None,
        }
    }
}
