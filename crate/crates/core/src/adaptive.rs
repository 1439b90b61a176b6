//! Model updates for the two cascade loops.
//!
//! The pose loop recomputes its input matrix from the measured attitude every
//! cycle. The velocity loop corrects its packed estimate `[A_hat | B_hat]` from
//! the one-step prediction error:
//!
//! ```text
//! X = [z; dv],  z_hat' = Theta_hat X,  e = z' - z_hat'
//! Theta_hat += lambda e X'     if lambda |X|^2 <= 2 - alpha
//! ```

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{pose_input_matrix, DofSelector, Pose};
use crate::mpc::AugmentedModel;

/// Pose-loop input matrix `J(eta) dt` on the selected DOFs.
pub fn feedforward_gamma(eta: &Pose, dt: f64, selector: &DofSelector) -> Result<DMatrix<f64>> {
    pose_input_matrix(eta, dt, selector)
}

/// What to do when a regressor fails the gate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GatePolicy {
    /// Leave the estimate untouched.
    #[default]
    Skip,
    /// Apply the update with gain `(2 - alpha) / |X|^2` instead.
    Rescale,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateStatus {
    Applied,
    Rescaled,
    Skipped,
}

impl GateStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            GateStatus::Applied => "applied",
            GateStatus::Rescaled => "rescaled",
            GateStatus::Skipped => "skipped",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdaptiveConfig {
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub gate_policy: GatePolicy,
    /// Extra multiplicative factor on the initial estimate, on top of the
    /// scenario's model bias.
    #[serde(default = "default_initial_bias")]
    pub initial_bias: f64,
}

fn default_lambda() -> f64 {
    0.05
}
fn default_alpha() -> f64 {
    0.5
}
fn default_initial_bias() -> f64 {
    1.0
}

impl Default for AdaptiveConfig {
    fn default() -> Self {
        Self {
            lambda: default_lambda(),
            alpha: default_alpha(),
            gate_policy: GatePolicy::Skip,
            initial_bias: default_initial_bias(),
        }
    }
}

impl AdaptiveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::Config("lambda must be positive".into()));
        }
        if !(0.0..=2.0).contains(&self.alpha) {
            return Err(Error::Config("alpha must lie in [0, 2]".into()));
        }
        if !self.initial_bias.is_finite() {
            return Err(Error::Config("initial_bias must be finite".into()));
        }
        Ok(())
    }
}

/// One transition of the lifted velocity model.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressorSample {
    pub x_k: DVector<f64>,
    pub delta_u_k: DVector<f64>,
    pub x_next_measured: DVector<f64>,
}

impl RegressorSample {
    /// `X = [x_k; du_k]`.
    pub fn regressor(&self) -> DVector<f64> {
        let n = self.x_k.len();
        let mut x = DVector::zeros(n + self.delta_u_k.len());
        x.rows_mut(0, n).copy_from(&self.x_k);
        x.rows_mut(n, self.delta_u_k.len()).copy_from(&self.delta_u_k);
        x
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatedModel {
    pub theta_hat: DMatrix<f64>,
    pub lambda: f64,
    pub alpha: f64,
    pub gate_policy: GatePolicy,
    pub update_count: u64,
    pub skip_count: u64,
    n_outputs: usize,
}

impl EstimatedModel {
    pub fn new(initial: &AugmentedModel, config: &AdaptiveConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            theta_hat: initial.packed(),
            lambda: config.lambda,
            alpha: config.alpha,
            gate_policy: config.gate_policy,
            update_count: 0,
            skip_count: 0,
            n_outputs: initial.n_outputs(),
        })
    }

    pub fn model(&self) -> AugmentedModel {
        AugmentedModel::from_packed(&self.theta_hat, self.n_outputs).expect("shape fixed at construction")
    }

    /// Whether a regressor passes the feasibility gate.
    pub fn gate_holds(&self, regressor: &DVector<f64>) -> bool {
        self.lambda * regressor.norm_squared() <= 2.0 - self.alpha
    }

    pub fn predict(&self, sample: &RegressorSample) -> Result<DVector<f64>> {
        let x = sample.regressor();
        if x.len() != self.theta_hat.ncols() || sample.x_next_measured.len() != self.theta_hat.nrows() {
            return Err(Error::Dimension(format!(
                "sample of width {} for an estimate of shape {:?}",
                x.len(),
                self.theta_hat.shape()
            )));
        }
        Ok(&self.theta_hat * x)
    }

    /// Apply the gated update law for one sample.
    pub fn update(&mut self, sample: &RegressorSample) -> Result<GateStatus> {
        let x_hat = self.predict(sample)?;
        let x = sample.regressor();
        let residual = &sample.x_next_measured - x_hat;
        let norm_sq = x.norm_squared();
        let (gain, status) = if self.gate_holds(&x) {
            (self.lambda, GateStatus::Applied)
        } else {
            match self.gate_policy {
                GatePolicy::Skip => {
                    self.skip_count += 1;
                    return Ok(GateStatus::Skipped);
                }
                GatePolicy::Rescale => ((2.0 - self.alpha) / norm_sq, GateStatus::Rescaled),
            }
        };
        self.theta_hat += residual * x.transpose() * gain;
        self.update_count += 1;
        Ok(status)
    }

    /// Shift the estimate when the nominal part it was built on changes.
    pub fn rebase(&mut self, old_nominal: &DMatrix<f64>, new_nominal: &DMatrix<f64>) {
        self.theta_hat += new_nominal - old_nominal;
    }
}

/// Frobenius norm of `Theta - Theta_hat`.
pub fn estimation_error_norm(est: &EstimatedModel, truth: &AugmentedModel) -> Result<f64> {
    let t = truth.packed();
    if t.shape() != est.theta_hat.shape() {
        return Err(Error::Dimension(format!("true model {:?} vs estimate {:?}", t.shape(), est.theta_hat.shape())));
    }
    Ok((t - &est.theta_hat).norm())
}
