//! Scenarios, closed-loop runs, run logs and tracking metrics.
//!
//! A run is a fixed-step loop over `k = 0..=N`. Each step reads the true
//! state, evaluates the reference and disturbance at `t = k dt`, steps the
//! controller, allocates to thrusters (with uniform saturation) and, for
//! `k < N`, integrates the plant. Every step is logged, so a run has `N + 1`
//! rows.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adaptive::{estimation_error_norm, GateStatus};
use crate::allocation::{
    allocate_saturating, total_wrench, ThrusterCommand, ThrusterGeometry, ThrusterSetpoint, THRUSTER_COUNT,
};
use crate::controllers::{biased_velocity_model, Controller, ControllerConfig, ControllerKind, ModelBias};
use crate::error::{Error, Result};
use crate::model::{
    step_plant, velocity_model, wrap_angle, BodyVelocity, Dof, DofSelector, ModelParams, Pose, VehicleState, Wrench,
};
use crate::mpc::augment;

/// First line of every run-log CSV.
pub const LOG_SCHEMA: &str = "# schema=v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReferenceSpec {
    /// `amplitude * sin(2 pi t / period)` on every tracked DOF.
    Sine { amplitude: f64, period: f64 },
    /// Fixed values, one per tracked DOF.
    Constant { values: Vec<f64> },
    /// `before` until `time`, then `after`.
    Step { before: Vec<f64>, after: Vec<f64>, time: f64 },
}

impl ReferenceSpec {
    pub fn validate(&self, n: usize) -> Result<()> {
        match self {
            ReferenceSpec::Sine { amplitude, period } => {
                if !(*amplitude > 0.0) || !(*period > 0.0) {
                    return Err(Error::Config("sine amplitude and period must be positive".into()));
                }
            }
            ReferenceSpec::Constant { values } => {
                if values.len() != n {
                    return Err(Error::Config(format!("constant reference needs {n} values")));
                }
            }
            ReferenceSpec::Step { before, after, time } => {
                if before.len() != n || after.len() != n || !time.is_finite() {
                    return Err(Error::Config(format!("step reference needs {n} values on each side")));
                }
            }
        }
        Ok(())
    }

    pub fn at(&self, t: f64, n: usize) -> Vec<f64> {
        match self {
            ReferenceSpec::Sine { amplitude, period } => {
                vec![amplitude * (2.0 * std::f64::consts::PI * t / period).sin(); n]
            }
            ReferenceSpec::Constant { values } => values.clone(),
            ReferenceSpec::Step { before, after, time } => {
                if t < *time {
                    before.clone()
                } else {
                    after.clone()
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DisturbanceSpec {
    #[default]
    None,
    /// `amplitude_i * sin(2 pi f t)` per wrench component, plus optional
    /// uniform noise of `noise * amplitude_i` drawn from the scenario seed.
    Sine {
        amplitude: [f64; 6],
        frequency: f64,
        #[serde(default)]
        noise: f64,
    },
}

impl DisturbanceSpec {
    pub fn validate(&self) -> Result<()> {
        if let DisturbanceSpec::Sine { amplitude, frequency, noise } = self {
            if amplitude.iter().any(|a| !a.is_finite()) || !(*frequency > 0.0) || !(*noise >= 0.0) {
                return Err(Error::Config("disturbance needs finite amplitude, positive frequency".into()));
            }
        }
        Ok(())
    }

    fn sample(&self, t: f64, rng: &mut ChaCha8Rng) -> Wrench {
        match self {
            DisturbanceSpec::None => Wrench::zero(),
            DisturbanceSpec::Sine { amplitude, frequency, noise } => {
                let s = (2.0 * std::f64::consts::PI * frequency * t).sin();
                let mut v = [0.0; 6];
                for (i, a) in amplitude.iter().enumerate() {
                    v[i] = a * s;
                    if *noise > 0.0 {
                        v[i] += noise * a * rng.gen_range(-1.0..=1.0);
                    }
                }
                Wrench::new(v[0], v[1], v[2], v[3], v[4], v[5])
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub duration: f64,
    pub dt: f64,
    #[serde(default)]
    pub seed: u64,
    /// Tracked DOFs, in controller order.
    pub dofs: Vec<Dof>,
    #[serde(default)]
    pub initial_pose: Pose,
    #[serde(default)]
    pub initial_velocity: BodyVelocity,
    pub reference: ReferenceSpec,
    #[serde(default)]
    pub disturbance: DisturbanceSpec,
    /// Error injected into the controller's velocity model.
    #[serde(default)]
    pub bias: ModelBias,
    /// Vehicle model file; the canonical model when absent. Relative paths
    /// resolve against the scenario file's directory.
    #[serde(default)]
    pub model: Option<PathBuf>,
    pub controller: ControllerConfig,
}

impl Scenario {
    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Config(format!("scenario: {e}")))
    }

    /// Load and resolve a relative model path against the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut sc = Self::from_json(&text)?;
        if let (Some(m), Some(dir)) = (&sc.model, path.parent()) {
            if m.is_relative() {
                sc.model = Some(dir.join(m));
            }
        }
        Ok(sc)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn selector(&self) -> Result<DofSelector> {
        DofSelector::new(self.dofs.clone())
    }

    pub fn params(&self) -> Result<ModelParams> {
        match &self.model {
            Some(p) => ModelParams::load(p),
            None => Ok(ModelParams::canonical()),
        }
    }

    /// Number of plant steps `N`; the run logs `N + 1` rows.
    pub fn step_count(&self) -> Result<usize> {
        let n = self.duration / self.dt;
        if !(self.dt > 0.0) || !(self.duration > 0.0) || (n - n.round()).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "duration {} is not an integer multiple of dt {}",
                self.duration, self.dt
            )));
        }
        Ok(n.round() as usize)
    }

    pub fn validate(&self) -> Result<()> {
        let sel = self.selector().map_err(|e| Error::Config(e.to_string()))?;
        self.step_count()?;
        self.reference.validate(sel.len())?;
        self.disturbance.validate()?;
        self.bias.validate()?;
        for cfg in [&self.controller.outer, &self.controller.inner] {
            if (cfg.dt - self.dt).abs() > 1e-15 {
                return Err(Error::Config("controller dt must equal scenario dt".into()));
            }
        }
        Ok(())
    }

    /// Same scenario with another controller type.
    pub fn with_controller(&self, kind: ControllerKind) -> Self {
        let mut s = self.clone();
        s.controller.kind = kind;
        s
    }
}

/// One logged step.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub t: f64,
    pub reference: Vec<f64>,
    pub pose: Pose,
    pub velocity: BodyVelocity,
    /// Cascade wire (outer-loop velocity command); absent for PID.
    pub u_r: Option<Vec<f64>>,
    /// Controller output on the tracked DOFs, before saturation.
    pub command: Vec<f64>,
    /// Wrench delivered by the thrusters.
    pub applied: Wrench,
    pub disturbance: Wrench,
    pub thrusters: ThrusterCommand,
    pub saturation_scale: f64,
    pub gate: Option<GateStatus>,
    /// Frobenius distance between the adaptive estimate and the true
    /// velocity model at the current linearisation point.
    pub theta_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub scenario: String,
    pub controller: ControllerKind,
    pub dofs: Vec<Dof>,
    pub rows: Vec<LogRow>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl RunLog {
    pub fn header(dofs: &[Dof]) -> Vec<String> {
        let mut h = vec!["t".to_string()];
        h.extend(dofs.iter().map(|d| format!("ref_{}", d.pose_name())));
        h.extend(Dof::ALL.iter().map(|d| d.pose_name().to_string()));
        h.extend(["u", "v", "w", "p", "q", "r"].map(String::from));
        h.extend(dofs.iter().map(|d| format!("ur_{}", d.name())));
        h.extend(dofs.iter().map(|d| format!("cmd_{}", d.name())));
        for prefix in ["applied", "dist"] {
            h.extend(["fx", "fy", "fz", "mx", "my", "mz"].map(|c| format!("{prefix}_{c}")));
        }
        h.extend((1..=THRUSTER_COUNT).map(|i| format!("f{i}")));
        h.extend((1..=THRUSTER_COUNT).map(|i| format!("th{i}")));
        h.extend(["sat_scale", "gate", "theta_err"].map(String::from));
        h
    }

    /// CSV text: schema comment, metadata comment, header, rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{LOG_SCHEMA}").unwrap();
        writeln!(out, "# scenario={} controller={}", self.scenario, self.controller.name()).unwrap();
        writeln!(out, "{}", Self::header(&self.dofs).join(",")).unwrap();
        for r in &self.rows {
            let mut f: Vec<String> = vec![r.t.to_string()];
            f.extend(r.reference.iter().map(f64::to_string));
            f.extend(r.pose.to_vector().iter().map(f64::to_string));
            f.extend(r.velocity.to_vector().iter().map(f64::to_string));
            match &r.u_r {
                Some(u) => f.extend(u.iter().map(f64::to_string)),
                None => f.extend(std::iter::repeat_n(String::new(), self.dofs.len())),
            }
            f.extend(r.command.iter().map(f64::to_string));
            f.extend(r.applied.to_vector().iter().map(f64::to_string));
            f.extend(r.disturbance.to_vector().iter().map(f64::to_string));
            f.extend(r.thrusters.forces().iter().map(f64::to_string));
            f.extend(r.thrusters.tilts().iter().map(f64::to_string));
            f.push(r.saturation_scale.to_string());
            f.push(r.gate.map(|g| g.as_str().to_string()).unwrap_or_default());
            f.push(opt(r.theta_error));
            writeln!(out, "{}", f.join(",")).unwrap();
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(LOG_SCHEMA) {
            return Err(Error::Config("run log lacks the schema line".into()));
        }
        let meta = lines.next().unwrap_or_default();
        let mut scenario = String::new();
        let mut controller = ControllerKind::Ffampc;
        for tok in meta.trim_start_matches('#').split_whitespace() {
            if let Some(v) = tok.strip_prefix("scenario=") {
                scenario = v.to_string();
            } else if let Some(v) = tok.strip_prefix("controller=") {
                controller = v.parse()?;
            }
        }
        let header: Vec<&str> =
            lines.next().ok_or_else(|| Error::Config("run log lacks a header".into()))?.split(',').collect();
        let dofs: Vec<Dof> =
            header.iter().filter_map(|h| h.strip_prefix("ref_")).map(str::parse).collect::<Result<_>>()?;
        let expected = Self::header(&dofs);
        if header != expected.iter().map(String::as_str).collect::<Vec<_>>() {
            return Err(Error::Config("run log header does not match schema v1".into()));
        }
        let n = dofs.len();
        let num = |s: &str, line: usize| -> Result<f64> {
            s.parse::<f64>().map_err(|_| Error::Config(format!("bad number '{s}' on data line {line}")))
        };
        let mut rows = Vec::new();
        for (li, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != expected.len() {
                return Err(Error::Config(format!("data line {li} has {} fields", f.len())));
            }
            let mut i = 0;
            let mut take = |k: usize| {
                let s = &f[i..i + k];
                i += k;
                s.to_vec()
            };
            let nums = |s: Vec<&str>| s.into_iter().map(|x| num(x, li)).collect::<Result<Vec<f64>>>();
            let t = num(take(1)[0], li)?;
            let reference = nums(take(n))?;
            let p = nums(take(6))?;
            let v = nums(take(6))?;
            let ur = take(n);
            let u_r = if ur.iter().all(|s| s.is_empty()) { None } else { Some(nums(ur)?) };
            let command = nums(take(n))?;
            let a = nums(take(6))?;
            let d = nums(take(6))?;
            let fs = nums(take(THRUSTER_COUNT))?;
            let ths = nums(take(THRUSTER_COUNT))?;
            let sat = num(take(1)[0], li)?;
            let gate = match take(1)[0] {
                "" => None,
                "applied" => Some(GateStatus::Applied),
                "rescaled" => Some(GateStatus::Rescaled),
                "skipped" => Some(GateStatus::Skipped),
                other => return Err(Error::Config(format!("bad gate status '{other}'"))),
            };
            let te = take(1)[0];
            let theta_error = if te.is_empty() { None } else { Some(num(te, li)?) };
            let mut setpoints = [ThrusterSetpoint::default(); THRUSTER_COUNT];
            for k in 0..THRUSTER_COUNT {
                setpoints[k] = ThrusterSetpoint { force: fs[k], tilt: ths[k] };
            }
            rows.push(LogRow {
                t,
                reference,
                pose: Pose::new(p[0], p[1], p[2], p[3], p[4], p[5]),
                velocity: BodyVelocity::new(v[0], v[1], v[2], v[3], v[4], v[5]),
                u_r,
                command,
                applied: Wrench::new(a[0], a[1], a[2], a[3], a[4], a[5]),
                disturbance: Wrench::new(d[0], d[1], d[2], d[3], d[4], d[5]),
                thrusters: ThrusterCommand(setpoints),
                saturation_scale: sat,
                gate,
                theta_error,
            });
        }
        Ok(Self { scenario, controller, dofs, rows })
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_csv(&text)
    }

    fn column(&self, dof: Dof) -> Result<usize> {
        self.dofs
            .iter()
            .position(|d| *d == dof)
            .ok_or_else(|| Error::Metric(format!("{} is not tracked in this log", dof.name())))
    }

    /// Tracking error `reference - value` for a tracked DOF, angles wrapped.
    pub fn errors(&self, dof: Dof) -> Result<Vec<f64>> {
        let c = self.column(dof)?;
        Ok(self
            .rows
            .iter()
            .map(|r| {
                let e = r.reference[c] - r.pose.get(dof);
                if dof.is_angular() {
                    wrap_angle(e)
                } else {
                    e
                }
            })
            .collect())
    }

    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.t).collect()
    }

    pub fn theta_errors(&self) -> Vec<f64> {
        self.rows.iter().filter_map(|r| r.theta_error).collect()
    }
}

/// Run a scenario to completion.
pub fn run_scenario(scenario: &Scenario) -> Result<RunLog> {
    scenario.validate()?;
    let params = scenario.params()?;
    let selector = scenario.selector()?;
    let n_steps = scenario.step_count()?;
    let geometry = ThrusterGeometry::from_params(&params);
    let mut controller = Controller::build(&scenario.controller, &selector, &params, &scenario.bias)?;
    let preview = controller.preview();
    let nd = selector.len();
    let dt = scenario.dt;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let mut state = VehicleState::new(scenario.initial_pose.wrapped(), scenario.initial_velocity);
    let mut rows = Vec::with_capacity(n_steps + 1);

    for k in 0..=n_steps {
        let fail = |e: Error| Error::Run { step: k, source: Box::new(e) };
        let t = k as f64 * dt;
        let refs: Vec<Vec<f64>> = (0..=preview).map(|i| scenario.reference.at(t + i as f64 * dt, nd)).collect();
        let out = controller.step(&refs, &state.pose, &state.velocity).map_err(fail)?;
        let alloc = allocate_saturating(&selector, &out.tau, &geometry).map_err(fail)?;
        let applied = total_wrench(&geometry, &alloc.command).map_err(fail)?;
        let applied_sel: Vec<f64> = selector.dofs().iter().map(|d| applied.get(*d)).collect();
        controller.note_applied(&applied_sel);
        let disturbance = scenario.disturbance.sample(t, &mut rng);

        let theta_error = match controller.estimate() {
            Some(est) => {
                let (phi, gamma) = velocity_model(&params, &state.velocity, dt, &selector);
                Some(estimation_error_norm(est, &augment(&phi, &gamma).map_err(fail)?).map_err(fail)?)
            }
            None => None,
        };

        rows.push(LogRow {
            t,
            reference: refs[0].clone(),
            pose: state.pose,
            velocity: state.velocity,
            u_r: out.u_r,
            command: out.tau,
            applied,
            disturbance,
            thrusters: alloc.command,
            saturation_scale: alloc.scale,
            gate: out.gate,
            theta_error,
        });

        if k < n_steps {
            state = step_plant(&params, &state, &applied, &disturbance, dt).map_err(fail)?;
        }
    }
    Ok(RunLog { scenario: scenario.name.clone(), controller: controller.kind(), dofs: selector.dofs().to_vec(), rows })
}

/// Root-mean-square tracking error of one DOF over every logged step.
pub fn rmse(log: &RunLog, dof: Dof) -> Result<f64> {
    let e = log.errors(dof)?;
    if e.is_empty() {
        return Err(Error::Metric("empty log".into()));
    }
    Ok((e.iter().map(|x| x * x).sum::<f64>() / e.len() as f64).sqrt())
}

/// Earliest time after which `|error| <= band * |error(0)|` for the rest of
/// the run. `None` when the error is still outside the band at the end.
pub fn settling_time(log: &RunLog, dof: Dof, band: f64) -> Result<Option<f64>> {
    if !(band > 0.0 && band < 1.0) {
        return Err(Error::Metric(format!("band {band} outside (0, 1)")));
    }
    let e = log.errors(dof)?;
    let e0 = e.first().copied().ok_or_else(|| Error::Metric("empty log".into()))?.abs();
    if e0 == 0.0 {
        return Err(Error::Metric(format!("{} starts with zero error", dof.name())));
    }
    let limit = band * e0;
    match e.iter().rposition(|x| x.abs() > limit) {
        None => Ok(Some(log.rows[0].t)),
        Some(i) if i + 1 == e.len() => Ok(None),
        Some(i) => Ok(Some(log.rows[i + 1].t)),
    }
}

/// Peak-to-peak of the DOF's value over rows with `t >= from`.
pub fn oscillation(log: &RunLog, dof: Dof, from: f64) -> Result<f64> {
    log.column(dof)?;
    let vals: Vec<f64> = log.rows.iter().filter(|r| r.t >= from).map(|r| r.pose.get(dof)).collect();
    if vals.is_empty() {
        return Err(Error::Metric(format!("no samples after t = {from}")));
    }
    if dof.is_angular() {
        // Unwrap around the first sample so a signal near +/-pi is not split.
        let base = vals[0];
        let un: Vec<f64> = vals.iter().map(|v| base + wrap_angle(v - base)).collect();
        Ok(un.iter().cloned().fold(f64::MIN, f64::max) - un.iter().cloned().fold(f64::MAX, f64::min))
    } else {
        Ok(vals.iter().cloned().fold(f64::MIN, f64::max) - vals.iter().cloned().fold(f64::MAX, f64::min))
    }
}

/// Largest `|error|` over rows with `t >= from`.
pub fn max_abs_error(log: &RunLog, dof: Dof, from: f64) -> Result<f64> {
    let e = log.errors(dof)?;
    let m = log.rows.iter().zip(e).filter(|(r, _)| r.t >= from).map(|(_, e)| e.abs()).fold(f64::NAN, f64::max);
    if m.is_nan() {
        return Err(Error::Metric(format!("no samples after t = {from}")));
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DofMetrics {
    pub dof: Dof,
    pub rmse: f64,
    /// `None` when the DOF starts at zero error or never settles.
    pub settling_time: Option<f64>,
    /// Band that produced `settling_time`.
    pub band: f64,
    /// Peak-to-peak after settling; `None` when not settled.
    pub oscillation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scenario: String,
    pub controller: ControllerKind,
    pub duration: f64,
    pub dofs: Vec<DofMetrics>,
}

/// Metrics for every tracked DOF. If a DOF does not settle in `band` and
/// `band < 0.10`, the 10% band is tried and reported instead.
pub fn compute_metrics(log: &RunLog, band: f64) -> Result<MetricsReport> {
    let duration = log.rows.last().map(|r| r.t).ok_or_else(|| Error::Metric("empty log".into()))?;
    let mut dofs = Vec::new();
    for &dof in &log.dofs {
        let rmse = rmse(log, dof)?;
        let zero_start = log.errors(dof)?[0] == 0.0;
        let (settling, used) = if zero_start {
            (None, band)
        } else {
            match settling_time(log, dof, band)? {
                Some(t) => (Some(t), band),
                None if band < 0.10 => (settling_time(log, dof, 0.10)?, 0.10),
                None => (None, band),
            }
        };
        let oscillation = match settling {
            Some(t) => Some(oscillation(log, dof, t)?),
            None => None,
        };
        dofs.push(DofMetrics { dof, rmse, settling_time: settling, band: used, oscillation });
    }
    Ok(MetricsReport { scenario: log.scenario.clone(), controller: log.controller, duration, dofs })
}

/// `100 (baseline - candidate) / baseline`.
pub fn percent_reduction(candidate: f64, baseline: f64) -> f64 {
    if baseline == 0.0 {
        if candidate == 0.0 {
            0.0
        } else {
            f64::NEG_INFINITY
        }
    } else {
        100.0 * (baseline - candidate) / baseline
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerOutcome {
    pub controller: ControllerKind,
    pub metrics: Option<MetricsReport>,
    pub error: Option<String>,
    pub numeric_failure: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reduction {
    pub candidate: ControllerKind,
    pub baseline: ControllerKind,
    pub dof: Dof,
    pub rmse_percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub scenario: String,
    pub band: f64,
    pub outcomes: Vec<ControllerOutcome>,
    pub reductions: Vec<Reduction>,
}

impl ComparisonReport {
    pub fn rmse(&self, kind: ControllerKind, dof: Dof) -> Option<f64> {
        self.outcomes
            .iter()
            .find(|o| o.controller == kind)?
            .metrics
            .as_ref()?
            .dofs
            .iter()
            .find(|m| m.dof == dof)
            .map(|m| m.rmse)
    }
}

/// One controller's run inside a comparison.
pub type ControllerRun = (ControllerKind, Result<RunLog>);

/// Run the scenario once per controller, in parallel, and tabulate metrics
/// and pairwise RMSE reductions. Failed runs are reported, not fatal.
pub fn compare(
    scenario: &Scenario,
    controllers: &[ControllerKind],
    band: f64,
) -> Result<(ComparisonReport, Vec<ControllerRun>)> {
    if controllers.len() < 2 {
        return Err(Error::Config("compare needs at least two controllers".into()));
    }
    scenario.validate()?;
    let runs: Vec<ControllerRun> = std::thread::scope(|s| {
        let handles: Vec<_> = controllers
            .iter()
            .map(|&k| {
                let sc = scenario.with_controller(k);
                s.spawn(move || (k, run_scenario(&sc)))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("run thread panicked")).collect()
    });

    let mut outcomes = Vec::new();
    for (kind, run) in &runs {
        let outcome = match run.as_ref().map_err(Clone::clone).and_then(|log| compute_metrics(log, band)) {
            Ok(m) => ControllerOutcome { controller: *kind, metrics: Some(m), error: None, numeric_failure: false },
            Err(e) => ControllerOutcome {
                controller: *kind,
                metrics: None,
                numeric_failure: !e.is_config(),
                error: Some(e.to_string()),
            },
        };
        outcomes.push(outcome);
    }

    let mut reductions = Vec::new();
    for a in &outcomes {
        for b in &outcomes {
            if a.controller == b.controller {
                continue;
            }
            if let (Some(ma), Some(mb)) = (&a.metrics, &b.metrics) {
                for (da, db) in ma.dofs.iter().zip(&mb.dofs) {
                    reductions.push(Reduction {
                        candidate: a.controller,
                        baseline: b.controller,
                        dof: da.dof,
                        rmse_percent: percent_reduction(da.rmse, db.rmse),
                    });
                }
            }
        }
    }
    Ok((ComparisonReport { scenario: scenario.name.clone(), band, outcomes, reductions }, runs))
}

/// Write `report.json` and one `<controller>.csv` per successful run.
pub fn write_comparison(dir: impl AsRef<Path>, report: &ComparisonReport, runs: &[ControllerRun]) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    for (kind, run) in runs {
        if let Ok(log) = run {
            log.write_csv(dir.join(format!("{}.csv", kind.name())))?;
        }
    }
    std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(report)?)?;
    Ok(())
}

/// Gains tried by [`tune_pid`] for each DOF independently.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PidGrid {
    pub kp: Vec<f64>,
    pub ki: Vec<f64>,
    pub kd: Vec<f64>,
}

impl Default for PidGrid {
    fn default() -> Self {
        Self {
            kp: vec![1.25, 2.5, 5.0, 10.0, 20.0, 40.0, 80.0, 160.0],
            ki: vec![0.0, 0.25, 1.0, 4.0, 16.0],
            kd: vec![0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 40.0],
        }
    }
}

/// Coarse grid search over shared (kp, ki, kd) per DOF, minimising the summed
/// RMSE of the scenario run without disturbance. DOFs are tuned one after
/// another, each with the others held at their current gains. Runs that fail
/// numerically are skipped.
pub fn tune_pid(scenario: &Scenario, grid: &PidGrid) -> Result<(crate::controllers::PidConfig, f64)> {
    let mut sc = scenario.with_controller(ControllerKind::Pid);
    sc.disturbance = DisturbanceSpec::None;
    let mut cfg = sc
        .controller
        .pid
        .clone()
        .ok_or_else(|| Error::Config("tuning starts from the scenario's pid section".into()))?;
    let score = |cfg: &crate::controllers::PidConfig| -> Option<f64> {
        let mut s = sc.clone();
        s.controller.pid = Some(cfg.clone());
        let log = run_scenario(&s).ok()?;
        let total: f64 = log.dofs.iter().map(|d| rmse(&log, *d).unwrap_or(f64::INFINITY)).sum();
        total.is_finite().then_some(total)
    };
    let mut best = score(&cfg).unwrap_or(f64::INFINITY);
    for i in 0..sc.dofs.len() {
        let mut results: BTreeMap<(usize, usize, usize), f64> = BTreeMap::new();
        for (a, kp) in grid.kp.iter().enumerate() {
            for (b, ki) in grid.ki.iter().enumerate() {
                for (c, kd) in grid.kd.iter().enumerate() {
                    let mut trial = cfg.clone();
                    trial.kp[i] = *kp;
                    trial.ki[i] = *ki;
                    trial.kd[i] = *kd;
                    if let Some(v) = score(&trial) {
                        results.insert((a, b, c), v);
                    }
                }
            }
        }
        if let Some((&(a, b, c), &v)) = results.iter().min_by(|x, y| x.1.total_cmp(y.1)) {
            if v < best {
                best = v;
                cfg.kp[i] = grid.kp[a];
                cfg.ki[i] = grid.ki[b];
                cfg.kd[i] = grid.kd[c];
            }
        }
    }
    if !best.is_finite() {
        return Err(Error::Metric("no PID gains in the grid produced a finite run".into()));
    }
    Ok((cfg, best))
}

/// The controller's biased velocity model at rest, for diagnostics.
pub fn controller_velocity_model(scenario: &Scenario) -> Result<crate::mpc::AugmentedModel> {
    let params = scenario.params()?;
    let sel = scenario.selector()?;
    let (phi, gamma) = biased_velocity_model(&params, &BodyVelocity::default(), scenario.dt, &sel, &scenario.bias);
    augment(&phi, &gamma)
}
