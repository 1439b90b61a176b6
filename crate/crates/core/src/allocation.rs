//! Vector-thruster allocation.
//!
//! Each of the four thrusters pushes along a unit direction that is the
//! zero-tilt direction rotated about the thruster's tilt axis. A thruster with
//! force `f` along `e` mounted at `L` contributes the wrench `[e; L x e] f`.
//!
//! Canonical layout, body frame (x forward, y starboard, z down):
//!
//! | # | position      | tilt axis | direction at tilt t   |
//! |---|---------------|-----------|-----------------------|
//! | 1 | (0,  d/2, 0)  | +y        | (sin t, 0, cos t)     |
//! | 2 | (0, -d/2, 0)  | +y        | (sin t, 0, cos t)     |
//! | 3 | ( l/2, 0, 0)  | -x        | (0, sin t, cos t)     |
//! | 4 | (-l/2, 0, 0)  | -x        | (0, sin t, cos t)     |
//!
//! The side pair reaches surge, heave, roll and yaw; the front/rear pair
//! reaches sway, heave, pitch and yaw.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, Point2};
use crate::model::{Dof, DofSelector, ModelParams, Wrench};

pub const THRUSTER_COUNT: usize = 4;

/// Slack allowed when checking commands against their limits.
const LIMIT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Thruster {
    pub mount_position: Vector3<f64>,
    pub tilt_axis: Vector3<f64>,
    pub zero_tilt_direction: Vector3<f64>,
    pub force_limit: f64,
    pub tilt_limit: f64,
}

impl Thruster {
    pub fn new(
        mount_position: Vector3<f64>,
        tilt_axis: Vector3<f64>,
        zero_tilt_direction: Vector3<f64>,
        force_limit: f64,
        tilt_limit: f64,
    ) -> Result<Self> {
        let tilt_axis = tilt_axis.normalize();
        let zero_tilt_direction = zero_tilt_direction.normalize();
        if !tilt_axis.iter().chain(zero_tilt_direction.iter()).all(|c| c.is_finite()) {
            return Err(Error::Config("thruster directions must be non-zero".into()));
        }
        if tilt_axis.dot(&zero_tilt_direction).abs() > 1e-12 {
            return Err(Error::Config("tilt axis must be perpendicular to the zero-tilt direction".into()));
        }
        if !(force_limit > 0.0) || !(tilt_limit >= 0.0) {
            return Err(Error::Config("thruster limits must be positive".into()));
        }
        Ok(Self { mount_position, tilt_axis, zero_tilt_direction, force_limit, tilt_limit })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThrusterGeometry {
    pub thrusters: [Thruster; THRUSTER_COUNT],
}

impl ThrusterGeometry {
    /// Four thrusters at the edge midpoints, +/-5 N and +/-90 degrees.
    pub fn canonical(length_l: f64, width_d: f64) -> Self {
        let z = Vector3::z();
        let mk = |pos: Vector3<f64>, axis: Vector3<f64>| {
            Thruster::new(pos, axis, z, 5.0, FRAC_PI_2).expect("canonical thruster")
        };
        Self {
            thrusters: [
                mk(Vector3::new(0.0, width_d / 2.0, 0.0), Vector3::y()),
                mk(Vector3::new(0.0, -width_d / 2.0, 0.0), Vector3::y()),
                mk(Vector3::new(length_l / 2.0, 0.0, 0.0), -Vector3::x()),
                mk(Vector3::new(-length_l / 2.0, 0.0, 0.0), -Vector3::x()),
            ],
        }
    }

    pub fn from_params(params: &ModelParams) -> Self {
        Self::canonical(params.length_l, params.width_d)
    }

    fn thruster(&self, i: usize) -> Result<&Thruster> {
        self.thrusters.get(i).ok_or_else(|| Error::ThrusterLimit { index: i + 1, what: "no such thruster".into() })
    }
}

/// Force and tilt of one thruster.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ThrusterSetpoint {
    pub force: f64,
    pub tilt: f64,
}

/// Setpoints for all four thrusters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ThrusterCommand(pub [ThrusterSetpoint; THRUSTER_COUNT]);

impl ThrusterCommand {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn forces(&self) -> [f64; THRUSTER_COUNT] {
        self.0.map(|s| s.force)
    }

    pub fn tilts(&self) -> [f64; THRUSTER_COUNT] {
        self.0.map(|s| s.tilt)
    }

    fn from_parts(forces: [f64; THRUSTER_COUNT], tilts: [f64; THRUSTER_COUNT]) -> Self {
        let mut c = Self::zero();
        for i in 0..THRUSTER_COUNT {
            c.0[i] = ThrusterSetpoint { force: forces[i], tilt: tilts[i] };
        }
        c
    }
}

/// Unit thrust direction of thruster `i` at tilt `theta`.
pub fn thruster_direction(geometry: &ThrusterGeometry, i: usize, theta: f64) -> Result<Vector3<f64>> {
    let t = geometry.thruster(i)?;
    if !(theta.abs() <= t.tilt_limit + LIMIT_TOL) {
        return Err(Error::ThrusterLimit {
            index: i + 1,
            what: format!("tilt {theta} rad outside +/-{}", t.tilt_limit),
        });
    }
    let (s, c) = theta.sin_cos();
    // Rodrigues with the axis perpendicular to the rotated vector.
    Ok(t.zero_tilt_direction * c + t.tilt_axis.cross(&t.zero_tilt_direction) * s)
}

/// Wrench produced by one thruster.
pub fn thruster_wrench(geometry: &ThrusterGeometry, i: usize, setpoint: ThrusterSetpoint) -> Result<Wrench> {
    let t = geometry.thruster(i)?;
    if !(setpoint.force.abs() <= t.force_limit + LIMIT_TOL) {
        return Err(Error::ThrusterLimit {
            index: i + 1,
            what: format!("force {} N outside +/-{}", setpoint.force, t.force_limit),
        });
    }
    let e = thruster_direction(geometry, i, setpoint.tilt)?;
    let f = setpoint.force;
    Ok(Wrench::from_parts(e * f, t.mount_position.cross(&e) * f))
}

/// Net wrench of all four thrusters.
pub fn total_wrench(geometry: &ThrusterGeometry, command: &ThrusterCommand) -> Result<Wrench> {
    command.0.iter().enumerate().try_fold(Wrench::zero(), |acc, (i, sp)| Ok(acc + thruster_wrench(geometry, i, *sp)?))
}

fn check_forces(geometry: &ThrusterGeometry, cmd: &ThrusterCommand) -> Result<()> {
    let worst =
        cmd.0.iter().zip(&geometry.thrusters).map(|(sp, t)| sp.force.abs() / t.force_limit).fold(0.0_f64, f64::max);
    if worst > 1.0 + LIMIT_TOL {
        return Err(Error::Saturation { scale: 1.0 / worst });
    }
    Ok(())
}

/// Heave, roll, pitch and yaw from the side pair held vertical and the
/// front/rear pair driven in opposition at a shared tilt.
///
/// Side pair: `fz = f1 + f2`, `mx = (d/2)(f1 - f2)`.
/// Front/rear pair with `f3 = -f4 = g` at tilt `t`: `my = -l g cos t`,
/// `mz = l g sin t`, no net force.
pub fn allocate_depth_orientation(target: [f64; 4], geometry: &ThrusterGeometry) -> Result<ThrusterCommand> {
    let [tau_z, tau_k, tau_m, tau_n] = target;
    if target.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config("non-finite allocation target".into()));
    }
    let (arm_side, arm_fore) = lever_arms(geometry);
    let f1 = tau_z / 2.0 + tau_k / (2.0 * arm_side);
    let f2 = tau_z / 2.0 - tau_k / (2.0 * arm_side);

    let rho = tau_m.hypot(tau_n) / (2.0 * arm_fore);
    let (g, tilt) = if rho == 0.0 {
        (0.0, 0.0)
    } else if tau_m <= 0.0 {
        (rho, tau_n.atan2(-tau_m))
    } else {
        (-rho, (-tau_n).atan2(tau_m))
    };
    let cmd = ThrusterCommand::from_parts([f1, f2, g, -g], [0.0, 0.0, tilt, tilt]);
    check_forces(geometry, &cmd)?;
    Ok(cmd)
}

/// Single-axis allocation for one wrench component.
pub fn allocate_scalar(target: f64, axis: Dof, geometry: &ThrusterGeometry) -> Result<ThrusterCommand> {
    if !target.is_finite() {
        return Err(Error::Config("non-finite allocation target".into()));
    }
    let (arm_side, arm_fore) = lever_arms(geometry);
    let h = FRAC_PI_2;
    let cmd = match axis {
        Dof::Surge => ThrusterCommand::from_parts([target / 2.0, target / 2.0, 0.0, 0.0], [h, h, 0.0, 0.0]),
        Dof::Sway => ThrusterCommand::from_parts([0.0, 0.0, target / 2.0, target / 2.0], [0.0, 0.0, h, h]),
        Dof::Heave => ThrusterCommand::from_parts([target / 2.0, target / 2.0, 0.0, 0.0], [0.0; 4]),
        Dof::Roll => {
            let f = target / (2.0 * arm_side);
            ThrusterCommand::from_parts([f, -f, 0.0, 0.0], [0.0; 4])
        }
        Dof::Pitch => {
            let f = -target / (2.0 * arm_fore);
            ThrusterCommand::from_parts([0.0, 0.0, f, -f], [0.0; 4])
        }
        Dof::Yaw => {
            let f = target / (2.0 * arm_fore);
            ThrusterCommand::from_parts([0.0, 0.0, f, -f], [0.0, 0.0, h, h])
        }
    };
    check_forces(geometry, &cmd)?;
    Ok(cmd)
}

/// Half-distances between the side pair and between the front/rear pair.
fn lever_arms(geometry: &ThrusterGeometry) -> (f64, f64) {
    let t = &geometry.thrusters;
    let side = (t[0].mount_position.y - t[1].mount_position.y) / 2.0;
    let fore = (t[2].mount_position.x - t[3].mount_position.x) / 2.0;
    (side, fore)
}

/// Allocation for a controller task. Targets are ordered as in `selector`.
/// Supported tasks are any single DOF and heave/roll/pitch/yaw.
pub fn allocate_task(selector: &DofSelector, target: &[f64], geometry: &ThrusterGeometry) -> Result<ThrusterCommand> {
    if target.len() != selector.len() {
        return Err(Error::Dimension(format!(
            "allocation target has {} entries for {} DOFs",
            target.len(),
            selector.len()
        )));
    }
    if selector.len() == 1 {
        allocate_scalar(target[0], selector.dofs()[0], geometry)
    } else if *selector == DofSelector::depth_orientation() {
        allocate_depth_orientation([target[0], target[1], target[2], target[3]], geometry)
    } else {
        Err(Error::Config(format!("no allocator for DOF set {:?}", selector.dofs())))
    }
}

/// Result of a saturating allocation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaturatedAllocation {
    pub command: ThrusterCommand,
    /// Uniform factor applied to the requested wrench; 1 when feasible.
    pub scale: f64,
}

/// Allocate, scaling the whole request down uniformly when it is out of reach.
/// Every allocator is linear in the target, so the scaled request lands on the
/// force-limit boundary with its direction preserved.
pub fn allocate_saturating(
    selector: &DofSelector,
    target: &[f64],
    geometry: &ThrusterGeometry,
) -> Result<SaturatedAllocation> {
    let mut scale = 1.0;
    // One rescale lands on the boundary; the loop only absorbs rounding.
    for _ in 0..4 {
        let request: Vec<f64> = target.iter().map(|v| v * scale).collect();
        match allocate_task(selector, &request, geometry) {
            Ok(command) => return Ok(SaturatedAllocation { command, scale }),
            Err(Error::Saturation { scale: s }) => scale *= s,
            Err(e) => return Err(e),
        }
    }
    Err(Error::Saturation { scale })
}

/// Two distinct wrench axes spanning a projection plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnvelopePlane {
    pub axes: (Dof, Dof),
    /// Grid points per command dimension (force and tilt).
    pub resolution: usize,
}

pub fn wrench_axis_name(d: Dof) -> &'static str {
    ["fx", "fy", "fz", "mx", "my", "mz"][d.index()]
}

fn wrench_axis_from_name(s: &str) -> Option<Dof> {
    Dof::ALL.into_iter().find(|d| wrench_axis_name(*d) == s)
}

impl EnvelopePlane {
    pub fn new(a: Dof, b: Dof, resolution: usize) -> Result<Self> {
        if a == b {
            return Err(Error::Config("envelope axes must differ".into()));
        }
        if resolution < 9 {
            return Err(Error::Config(format!("envelope resolution {resolution} < 9")));
        }
        Ok(Self { axes: (a, b), resolution })
    }

    /// Parse names like `fx-fy`.
    pub fn parse(name: &str, resolution: usize) -> Result<Self> {
        let (a, b) = name
            .split_once('-')
            .and_then(|(a, b)| Some((wrench_axis_from_name(a)?, wrench_axis_from_name(b)?)))
            .ok_or_else(|| Error::Config(format!("unknown plane '{name}'")))?;
        Self::new(a, b, resolution)
    }

    pub fn name(&self) -> String {
        format!("{}-{}", wrench_axis_name(self.axes.0), wrench_axis_name(self.axes.1))
    }
}

/// The six planes reported for the canonical vehicle, in the order
/// fx-fy, fy-fz, fx-fz, mx-my, my-mz, mx-mz.
pub fn standard_planes(resolution: usize) -> Result<Vec<EnvelopePlane>> {
    ["fx-fy", "fy-fz", "fx-fz", "mx-my", "my-mz", "mx-mz"].iter().map(|n| EnvelopePlane::parse(n, resolution)).collect()
}

fn linspace(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |k| if k + 1 == n { hi } else { lo + (hi - lo) * k as f64 / (n - 1) as f64 })
}

/// Extreme points of the projected reachable set.
///
/// The sweep covers every grid combination of force and tilt on all four
/// thrusters. Because the net wrench is a sum of independent per-thruster
/// terms, the projection of the full sweep is the Minkowski sum of the
/// per-thruster projections, and its convex hull is the Minkowski sum of their
/// hulls. The returned points are the vertices of that hull, sorted, so they
/// are exactly the extreme points of the full grid sweep.
pub fn sample_envelope(geometry: &ThrusterGeometry, plane: &EnvelopePlane) -> Result<Vec<Point2>> {
    if plane.axes.0 == plane.axes.1 || plane.resolution < 9 {
        return Err(Error::Config("invalid envelope plane".into()));
    }
    let (a, b) = (plane.axes.0.index(), plane.axes.1.index());
    let mut acc: Vec<Point2> = vec![[0.0, 0.0]];
    for (i, t) in geometry.thrusters.iter().enumerate() {
        let mut pts = Vec::with_capacity(plane.resolution * plane.resolution);
        for f in linspace(-t.force_limit, t.force_limit, plane.resolution) {
            for theta in linspace(-t.tilt_limit, t.tilt_limit, plane.resolution) {
                let w = thruster_wrench(geometry, i, ThrusterSetpoint { force: f, tilt: theta })?.to_vector();
                pts.push([w[a], w[b]]);
            }
        }
        acc = geometry::minkowski_hull(&acc, &pts);
    }
    acc.sort_by(|p, q| p[0].total_cmp(&q[0]).then(p[1].total_cmp(&q[1])));
    Ok(acc)
}

/// Circularity of the reachable set in `plane`.
pub fn envelope_circularity(geometry: &ThrusterGeometry, plane: &EnvelopePlane) -> Result<f64> {
    geometry::circularity(&sample_envelope(geometry, plane)?)
}

impl fmt::Display for EnvelopePlane {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for Dof {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Dof::ALL
            .into_iter()
            .find(|d| d.name() == s || d.pose_name() == s)
            .ok_or_else(|| Error::Config(format!("unknown DOF '{s}'")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn geo() -> ThrusterGeometry {
        ThrusterGeometry::canonical(0.665, 0.57)
    }

    #[test]
    fn direction_examples() {
        let g = geo();
        assert_abs_diff_eq!(thruster_direction(&g, 0, 0.0).unwrap(), Vector3::z());
        // A front thruster tilting about +y follows (sin t, 0, cos t).
        let mut custom = geo();
        custom.thrusters[2] =
            Thruster::new(Vector3::new(0.3325, 0.0, 0.0), Vector3::y(), Vector3::z(), 5.0, FRAC_PI_2).unwrap();
        assert_abs_diff_eq!(thruster_direction(&custom, 2, FRAC_PI_2).unwrap(), Vector3::x(), epsilon = 1e-15);
        assert!(thruster_direction(&g, 0, 1.6).is_err());
        assert!(Thruster::new(Vector3::zeros(), Vector3::x(), Vector3::new(1.0, 0.0, 1.0), 5.0, 1.0).is_err());
    }

    #[test]
    fn wrench_examples() {
        let mut g = geo();
        g.thrusters[0].mount_position = Vector3::zeros();
        let w = thruster_wrench(&g, 0, ThrusterSetpoint { force: 5.0, tilt: 0.0 }).unwrap();
        assert_eq!(w, Wrench::new(0.0, 0.0, 5.0, 0.0, 0.0, 0.0));

        let g = geo();
        let w = thruster_wrench(&g, 0, ThrusterSetpoint { force: 5.0, tilt: 0.0 }).unwrap();
        assert_abs_diff_eq!(w.mx, 1.425, epsilon = 1e-12);
        assert_eq!((w.my, w.mz), (0.0, 0.0));
        let w = thruster_wrench(&g, 3, ThrusterSetpoint::default()).unwrap();
        assert_eq!(w, Wrench::zero());
        let err = thruster_wrench(&g, 1, ThrusterSetpoint { force: 5.5, tilt: 0.0 });
        assert!(matches!(err, Err(Error::ThrusterLimit { index: 2, .. })));
    }

    #[test]
    fn total_wrench_examples() {
        let g = geo();
        assert_eq!(total_wrench(&g, &ThrusterCommand::zero()).unwrap(), Wrench::zero());
        let both = ThrusterCommand::from_parts([5.0, 5.0, 0.0, 0.0], [0.0; 4]);
        let w = total_wrench(&g, &both).unwrap();
        assert_abs_diff_eq!(w.fz, 10.0);
        assert_abs_diff_eq!(w.mx, 0.0, epsilon = 1e-15);
        let opposed = ThrusterCommand::from_parts([5.0, -5.0, 0.0, 0.0], [0.0; 4]);
        let w = total_wrench(&g, &opposed).unwrap();
        assert_abs_diff_eq!(w.fz, 0.0);
        assert_abs_diff_eq!(w.mx, 2.85, epsilon = 1e-12);
        let bad = ThrusterCommand::from_parts([0.0, 0.0, 0.0, 7.0], [0.0; 4]);
        assert!(matches!(total_wrench(&g, &bad), Err(Error::ThrusterLimit { index: 4, .. })));
    }

    #[test]
    fn depth_orientation_examples() {
        let g = geo();
        assert_eq!(allocate_depth_orientation([0.0; 4], &g).unwrap(), ThrusterCommand::zero());

        let c = allocate_depth_orientation([10.0, 0.0, 0.0, 0.0], &g).unwrap();
        assert_eq!(c.forces(), [5.0, 5.0, 0.0, 0.0]);

        // Pure pitch: front/rear vertical and opposed; sign follows from the
        // cross product (pushing the bow down is a nose-down moment).
        let c = allocate_depth_orientation([0.0, 0.0, 1.2, 0.0], &g).unwrap();
        assert_eq!(c.0[2].tilt, 0.0);
        assert_abs_diff_eq!(c.0[2].force, -1.2 / 0.665, epsilon = 1e-12);
        assert_abs_diff_eq!(c.0[3].force, 1.2 / 0.665, epsilon = 1e-12);
        let w = total_wrench(&g, &c).unwrap();
        assert_abs_diff_eq!(w.my, 1.2, epsilon = 1e-12);

        let err = allocate_depth_orientation([30.0, 0.0, 0.0, 0.0], &g);
        match err {
            Err(Error::Saturation { scale }) => assert_abs_diff_eq!(scale, 1.0 / 3.0, epsilon = 1e-12),
            other => panic!("expected saturation, got {other:?}"),
        }
    }

    #[test]
    fn scalar_examples() {
        let g = geo();
        for axis in Dof::ALL {
            assert_eq!(allocate_scalar(0.0, axis, &g).unwrap().forces(), [0.0; 4]);
        }
        // Surge: both side thrusters horizontal at full force.
        let c = allocate_scalar(10.0, Dof::Surge, &g).unwrap();
        assert_eq!(c.forces(), [5.0, 5.0, 0.0, 0.0]);
        assert!(matches!(allocate_scalar(10.5, Dof::Surge, &g), Err(Error::Saturation { .. })));
        let c = allocate_scalar(-0.665 * 5.0, Dof::Yaw, &g).unwrap();
        assert_abs_diff_eq!(c.0[2].force.abs(), 5.0, epsilon = 1e-12);
    }

    #[test]
    fn saturating_preserves_direction() {
        let g = geo();
        let sel = DofSelector::depth_orientation();
        let target = [20.0, 3.0, -2.0, 4.0];
        let sat = allocate_saturating(&sel, &target, &g).unwrap();
        assert!(sat.scale < 1.0);
        let w = total_wrench(&g, &sat.command).unwrap();
        let got = [w.fz, w.mx, w.my, w.mz];
        for k in 0..4 {
            assert_abs_diff_eq!(got[k], target[k] * sat.scale, epsilon = 1e-9);
        }
        let max = sat.command.forces().iter().fold(0.0_f64, |m, f| m.max(f.abs()));
        assert_abs_diff_eq!(max, 5.0, epsilon = 1e-9);
    }

    #[test]
    fn plane_parsing() {
        let p = EnvelopePlane::parse("fx-fy", 33).unwrap();
        assert_eq!(p.axes, (Dof::Surge, Dof::Sway));
        assert_eq!(p.name(), "fx-fy");
        assert!(EnvelopePlane::parse("fx-fx", 33).is_err());
        assert!(EnvelopePlane::parse("fx-qq", 33).is_err());
        assert!(EnvelopePlane::parse("fx-fy", 5).is_err());
    }

    #[test]
    fn envelope_contains_origin_and_is_symmetric() {
        let g = geo();
        for plane in standard_planes(9).unwrap() {
            let pts = sample_envelope(&g, &plane).unwrap();
            let hull = geometry::convex_hull(&pts);
            assert!(geometry::hull_contains(&hull, [0.0, 0.0], 1e-12));
            for p in &pts {
                assert!(
                    pts.iter().any(|q| (q[0] + p[0]).abs() < 1e-12 && (q[1] + p[1]).abs() < 1e-12),
                    "{plane}: no mirror for {p:?}"
                );
            }
        }
    }

    #[test]
    fn fx_fy_envelope_is_square() {
        let g = geo();
        let pts = sample_envelope(&g, &EnvelopePlane::parse("fx-fy", 9).unwrap()).unwrap();
        let fx_max = pts.iter().map(|p| p[0].abs()).fold(0.0, f64::max);
        assert_abs_diff_eq!(fx_max, 10.0, epsilon = 1e-12);
        assert!(pts.iter().any(|p| p[0].abs() >= fx_max - 1e-12 && p[1].abs() > 0.0));
    }

    #[test]
    fn envelope_is_deterministic() {
        let g = geo();
        let plane = EnvelopePlane::parse("my-mz", 17).unwrap();
        assert_eq!(sample_envelope(&g, &plane).unwrap(), sample_envelope(&g, &plane).unwrap());
    }

    proptest! {
        #[test]
        fn thruster_wrench_linear_in_force(i in 0usize..4, f in -2.5f64..2.5, t in -1.5f64..1.5) {
            let g = geo();
            let w1 = thruster_wrench(&g, i, ThrusterSetpoint { force: f, tilt: t }).unwrap().to_vector();
            let w2 = thruster_wrench(&g, i, ThrusterSetpoint { force: 2.0 * f, tilt: t }).unwrap().to_vector();
            prop_assert!((w2 - w1 * 2.0).amax() <= 1e-12);
            let e = thruster_direction(&g, i, t).unwrap();
            prop_assert!((e.norm() - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn depth_orientation_round_trip(z in -9.0f64..9.0, k in -1.0f64..1.0, m in -1.5f64..1.5, n in -1.5f64..1.5) {
            let g = geo();
            if let Ok(c) = allocate_depth_orientation([z, k, m, n], &g) {
                let w = total_wrench(&g, &c).unwrap();
                prop_assert!((w.fz - z).abs() <= 1e-9);
                prop_assert!((w.mx - k).abs() <= 1e-9);
                prop_assert!((w.my - m).abs() <= 1e-9);
                prop_assert!((w.mz - n).abs() <= 1e-9);
                prop_assert!(w.fx.abs() <= 1e-12 && w.fy.abs() <= 1e-12);
                prop_assert_eq!(c.0[2].force, -c.0[3].force);
            }
        }

        #[test]
        fn scalar_round_trip(axis in 0usize..6, frac in -1.0f64..1.0) {
            let g = geo();
            let dof = Dof::ALL[axis];
            let limit = match dof {
                Dof::Surge | Dof::Sway | Dof::Heave => 10.0,
                Dof::Roll => 0.57 * 5.0,
                Dof::Pitch | Dof::Yaw => 0.665 * 5.0,
            };
            let target = frac * limit;
            let c = allocate_scalar(target, dof, &g).unwrap();
            let w = total_wrench(&g, &c).unwrap().to_vector();
            for j in 0..6 {
                let want = if j == axis { target } else { 0.0 };
                prop_assert!((w[j] - want).abs() <= 1e-9, "component {} = {}", j, w[j]);
            }
        }
    }
}
