//! Incremental-form model predictive control with a terminal equality.
//!
//! A discrete model `x[k+1] = Phi x[k] + Gamma v[k]`, `y = x` is lifted to
//!
//! ```text
//! z[k+1] = A z[k] + B dv[k],   y[k] = C z[k]
//! z = [dx; y],  A = [[Phi, 0], [Phi, I]],  B = [Gamma; Gamma],  C = [0, I]
//! ```
//!
//! Each step minimises
//! `(Y - R)' Q (Y - R) + dV' R2 dV` over the `nc` increments, with `Y` the
//! `np` predicted outputs, subject to `y[k+nc] = r[k+nc]`. The problem is an
//! equality-constrained QP and is solved exactly through its KKT system.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
}

impl AugmentedModel {
    /// Dimension of the underlying model state (and of the output).
    pub fn n_outputs(&self) -> usize {
        self.c.nrows()
    }

    pub fn n_states(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_inputs(&self) -> usize {
        self.b.ncols()
    }

    /// `[A | B]` packed side by side.
    pub fn packed(&self) -> DMatrix<f64> {
        let mut t = DMatrix::zeros(self.n_states(), self.n_states() + self.n_inputs());
        t.view_mut((0, 0), self.a.shape()).copy_from(&self.a);
        t.view_mut((0, self.n_states()), self.b.shape()).copy_from(&self.b);
        t
    }

    /// Inverse of [`packed`](Self::packed), keeping the output map.
    pub fn from_packed(theta: &DMatrix<f64>, n_outputs: usize) -> Result<Self> {
        let n = theta.nrows();
        if n != 2 * n_outputs || theta.ncols() <= n {
            return Err(Error::Dimension(format!(
                "packed model {}x{} does not fit {} outputs",
                theta.nrows(),
                theta.ncols(),
                n_outputs
            )));
        }
        let m = theta.ncols() - n;
        Ok(Self {
            a: theta.view((0, 0), (n, n)).into_owned(),
            b: theta.view((0, n), (n, m)).into_owned(),
            c: output_map(n_outputs),
        })
    }

    pub fn step(&self, z: &DVector<f64>, dv: &DVector<f64>) -> DVector<f64> {
        &self.a * z + &self.b * dv
    }
}

fn output_map(n: usize) -> DMatrix<f64> {
    let mut c = DMatrix::zeros(n, 2 * n);
    c.view_mut((0, n), (n, n)).fill_diagonal(1.0);
    c
}

/// Lift `(phi, gamma)` to the incremental form.
pub fn augment(phi: &DMatrix<f64>, gamma: &DMatrix<f64>) -> Result<AugmentedModel> {
    let n = phi.nrows();
    if phi.ncols() != n || gamma.nrows() != n || gamma.ncols() == 0 || n == 0 {
        return Err(Error::Dimension(format!(
            "phi is {}x{}, gamma is {}x{}",
            phi.nrows(),
            phi.ncols(),
            gamma.nrows(),
            gamma.ncols()
        )));
    }
    let m = gamma.ncols();
    let mut a = DMatrix::zeros(2 * n, 2 * n);
    a.view_mut((0, 0), (n, n)).copy_from(phi);
    a.view_mut((n, 0), (n, n)).copy_from(phi);
    a.view_mut((n, n), (n, n)).fill_diagonal(1.0);
    let mut b = DMatrix::zeros(2 * n, m);
    b.view_mut((0, 0), (n, m)).copy_from(gamma);
    b.view_mut((n, 0), (n, m)).copy_from(gamma);
    Ok(AugmentedModel { a, b, c: output_map(n) })
}

/// Augmented state `[y - y_prev; y]`.
pub fn augmented_state(y: &DVector<f64>, y_prev: &DVector<f64>) -> DVector<f64> {
    let n = y.len();
    let mut z = DVector::zeros(2 * n);
    z.rows_mut(0, n).copy_from(&(y - y_prev));
    z.rows_mut(n, n).copy_from(y);
    z
}

/// Scalar weight or one weight per output / input channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Weight {
    Scalar(f64),
    PerChannel(Vec<f64>),
}

impl Weight {
    fn channel(&self, i: usize, n: usize) -> Result<f64> {
        match self {
            Weight::Scalar(w) => Ok(*w),
            Weight::PerChannel(v) if v.len() == n => Ok(v[i]),
            Weight::PerChannel(v) => {
                Err(Error::Dimension(format!("weight has {} entries for {} channels", v.len(), n)))
            }
        }
    }

    fn values(&self) -> Vec<f64> {
        match self {
            Weight::Scalar(w) => vec![*w],
            Weight::PerChannel(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpcConfig {
    /// Prediction horizon in steps.
    pub np: usize,
    /// Control horizon in steps; the terminal equality sits here.
    pub nc: usize,
    /// Output-error weight.
    pub r1: Weight,
    /// Input-increment weight.
    pub r2: Weight,
    pub dt: f64,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self { np: 20, nc: 4, r1: Weight::Scalar(1.0), r2: Weight::Scalar(0.1), dt: 0.05 }
    }
}

impl MpcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.nc == 0 || self.nc > self.np {
            return Err(Error::Config(format!("need 1 <= nc <= np, got nc={} np={}", self.nc, self.np)));
        }
        if self.r1.values().iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::Config("r1 weights must be >= 0".into()));
        }
        if self.r2.values().iter().any(|w| !(*w > 0.0)) {
            return Err(Error::Config("r2 weights must be > 0".into()));
        }
        if !(self.dt > 0.0) {
            return Err(Error::Config("dt must be positive".into()));
        }
        Ok(())
    }
}

/// Stacked predictions `Y = F z + G dV`.
#[derive(Debug, Clone)]
pub struct PredictionMatrices {
    pub f: DMatrix<f64>,
    pub g: DMatrix<f64>,
}

pub fn prediction_matrices(model: &AugmentedModel, config: &MpcConfig) -> Result<PredictionMatrices> {
    config.validate()?;
    let (p, n, m) = (model.n_outputs(), model.n_states(), model.n_inputs());
    if model.a.shape() != (n, n) || model.b.nrows() != n || model.c.ncols() != n {
        return Err(Error::Dimension("inconsistent augmented model".into()));
    }
    let mut f = DMatrix::zeros(config.np * p, n);
    let mut g = DMatrix::zeros(config.np * p, config.nc * m);
    // ca_pow[i] = C A^i
    let mut ca_pow = Vec::with_capacity(config.np + 1);
    ca_pow.push(model.c.clone());
    for i in 1..=config.np {
        let next = &ca_pow[i - 1] * &model.a;
        ca_pow.push(next);
    }
    let cab: Vec<DMatrix<f64>> = ca_pow.iter().map(|ca| ca * &model.b).collect();
    for i in 0..config.np {
        f.view_mut((i * p, 0), (p, n)).copy_from(&ca_pow[i + 1]);
        for j in 0..config.nc.min(i + 1) {
            g.view_mut((i * p, j * m), (p, m)).copy_from(&cab[i - j]);
        }
    }
    Ok(PredictionMatrices { f, g })
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    /// All `nc` increments stacked.
    pub delta_u_sequence: DVector<f64>,
    /// The increment applied now.
    pub first_increment: DVector<f64>,
    /// `np` predicted outputs stacked.
    pub predicted_outputs: DVector<f64>,
    /// Infinity norm of the KKT stationarity and feasibility residuals.
    pub kkt_residual: f64,
    /// Infinity norm of `y[k+nc] - r[k+nc]`.
    pub terminal_residual: f64,
    pub objective: f64,
}

/// The quadratic program of one step, exposed so tests can evaluate
/// objectives and constraints independently of the solver.
#[derive(Debug, Clone)]
pub struct StepQp {
    pub pred: PredictionMatrices,
    /// Diagonal of the output-error weight, length `np * p`.
    pub q_diag: DVector<f64>,
    /// Diagonal of the increment weight, length `nc * m`.
    pub r_diag: DVector<f64>,
    /// Free response minus reference, `F z - R`.
    pub offset: DVector<f64>,
    /// Terminal equality `E dV = e`.
    pub e_mat: DMatrix<f64>,
    pub e_rhs: DVector<f64>,
}

impl StepQp {
    pub fn build(
        model: &AugmentedModel,
        config: &MpcConfig,
        z: &DVector<f64>,
        reference: &[DVector<f64>],
    ) -> Result<Self> {
        let p = model.n_outputs();
        let m = model.n_inputs();
        if reference.len() != config.np || reference.iter().any(|r| r.len() != p) {
            return Err(Error::Dimension(format!("reference needs {} entries of length {}", config.np, p)));
        }
        if z.len() != model.n_states() {
            return Err(Error::Dimension(format!("state has length {}, model expects {}", z.len(), model.n_states())));
        }
        let pred = prediction_matrices(model, config)?;
        let mut q_diag = DVector::zeros(config.np * p);
        let mut stacked_ref = DVector::zeros(config.np * p);
        for i in 0..config.np {
            for j in 0..p {
                q_diag[i * p + j] = config.r1.channel(j, p)?;
                stacked_ref[i * p + j] = reference[i][j];
            }
        }
        let mut r_diag = DVector::zeros(config.nc * m);
        for i in 0..config.nc {
            for j in 0..m {
                r_diag[i * m + j] = config.r2.channel(j, m)?;
            }
        }
        let offset = &pred.f * z - stacked_ref;
        let row = (config.nc - 1) * p;
        let e_mat = pred.g.rows(row, p).into_owned();
        let e_rhs = -offset.rows(row, p);
        Ok(Self { pred, q_diag, r_diag, offset, e_mat, e_rhs })
    }

    pub fn objective(&self, dv: &DVector<f64>) -> f64 {
        let err = &self.pred.g * dv + &self.offset;
        err.component_mul(&self.q_diag).dot(&err) + dv.component_mul(&self.r_diag).dot(dv)
    }

    pub fn constraint_residual(&self, dv: &DVector<f64>) -> DVector<f64> {
        &self.e_mat * dv - &self.e_rhs
    }

    /// Half the objective Hessian, `G' Q G + R2`.
    fn half_hessian(&self) -> DMatrix<f64> {
        let qg =
            DMatrix::from_fn(self.pred.g.nrows(), self.pred.g.ncols(), |r, c| self.q_diag[r] * self.pred.g[(r, c)]);
        let mut h = self.pred.g.transpose() * qg;
        for i in 0..h.nrows() {
            h[(i, i)] += self.r_diag[i];
        }
        h
    }

    /// Half the objective gradient at `dv`.
    pub fn half_gradient(&self, dv: &DVector<f64>) -> DVector<f64> {
        let err = &self.pred.g * dv + &self.offset;
        self.pred.g.transpose() * err.component_mul(&self.q_diag) + dv.component_mul(&self.r_diag)
    }

    /// Solve the KKT system `[[H, E'], [E, 0]] [dV; nu] = [-g; e]`.
    pub fn solve(&self) -> Result<(DVector<f64>, DVector<f64>)> {
        let nv = self.r_diag.len();
        let nk = self.e_rhs.len();
        let singular = || Error::SingularKkt { context: format!("{nk} terminal rows, {nv} increments") };
        if nk > nv {
            return Err(singular());
        }
        // The terminal rows must be independent for a unique multiplier.
        let sv = self.e_mat.clone().singular_values();
        let (smax, smin) = sv.iter().fold((0.0_f64, f64::INFINITY), |(a, b), &s| (a.max(s), b.min(s)));
        if !(smax > 0.0) || smin <= 1e-12 * smax {
            return Err(singular());
        }
        let h = self.half_hessian();
        let mut kkt = DMatrix::zeros(nv + nk, nv + nk);
        kkt.view_mut((0, 0), (nv, nv)).copy_from(&h);
        kkt.view_mut((0, nv), (nv, nk)).copy_from(&self.e_mat.transpose());
        kkt.view_mut((nv, 0), (nk, nv)).copy_from(&self.e_mat);
        let mut rhs = DVector::zeros(nv + nk);
        rhs.rows_mut(0, nv).copy_from(&(-(self.pred.g.transpose() * self.offset.component_mul(&self.q_diag))));
        rhs.rows_mut(nv, nk).copy_from(&self.e_rhs);

        let lu = kkt.clone().full_piv_lu();
        let mut sol = lu.solve(&rhs).ok_or_else(singular)?;
        // One round of iterative refinement.
        let resid = &rhs - &kkt * &sol;
        if let Some(corr) = lu.solve(&resid) {
            sol += corr;
        }
        if sol.iter().any(|v| !v.is_finite()) {
            return Err(singular());
        }
        Ok((sol.rows(0, nv).into_owned(), sol.rows(nv, nk).into_owned()))
    }

    /// Infinity norm of the stationarity and feasibility residuals.
    pub fn kkt_residual(&self, dv: &DVector<f64>, nu: &DVector<f64>) -> f64 {
        let stat = self.half_gradient(dv) + self.e_mat.transpose() * nu;
        stat.amax().max(self.constraint_residual(dv).amax())
    }
}

/// One receding-horizon solve.
pub fn solve_step(
    model: &AugmentedModel,
    config: &MpcConfig,
    z: &DVector<f64>,
    reference: &[DVector<f64>],
) -> Result<QpSolution> {
    let qp = StepQp::build(model, config, z, reference)?;
    let (dv, nu) = qp.solve()?;
    let m = model.n_inputs();
    let predicted = &qp.pred.g * &dv + &qp.pred.f * z;
    let p = model.n_outputs();
    let row = (config.nc - 1) * p;
    let terminal = (predicted.rows(row, p) - &reference[config.nc - 1]).amax();
    Ok(QpSolution {
        first_increment: dv.rows(0, m).into_owned(),
        kkt_residual: qp.kkt_residual(&dv, &nu),
        terminal_residual: terminal,
        objective: qp.objective(&dv),
        predicted_outputs: predicted,
        delta_u_sequence: dv,
    })
}
