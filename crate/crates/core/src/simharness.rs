//! Synthetic gait: ground-truth foot trajectories, IMU synthesis, and
//! scoring.
//!
//! A walk is a sequence of footfalls with a dwell (stance) between
//! minimum-jerk swing arcs, lifted 5 cm mid-swing by a C2 bump, so position
//! is smooth and velocity is exactly zero throughout every stance. The IMU
//! synthesizer is the inverse of the tracker: second central differences of
//! position (plus gravity) rotated into the body frame, gyro from quaternion
//! finite differences, and a seeded ChaCha8 noise generator so streams are
//! reproducible bit for bit.
//!
//! Scenarios start and end with a `settle` dwell (default 1.5 s) so the
//! tracker's static initialization window sees a genuinely still foot. All
//! built-in scenarios start at the origin heading +x, the same frame a
//! dead-reckoning track lives in (yaw has no absolute reference), so
//! reconstructions compare against the truth directly.

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::deadreckon::Trajectory;
use crate::planner::NavPlan;
use crate::voxelmap::ObstacleBox;
use crate::STANDARD_GRAVITY;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("sample rate must be >= 50 Hz, got {0}")]
    RateTooLow(f64),
    #[error("trajectory rate {traj:.1} Hz is not an integer multiple of the requested {requested:.1} Hz")]
    RateMismatch { traj: f64, requested: f64 },
    #[error("trajectory too short to synthesize an IMU stream")]
    TooShort,
    #[error("trajectories do not overlap in time")]
    DisjointRanges,
}

/// Swing apex lift, meters.
pub const SWING_LIFT: f64 = 0.05;

/// Walk geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScenarioKind {
    /// Straight walk along +x.
    Corridor { length: f64 },
    /// Climb around a helix: footfalls on a circle, rising each step.
    SpiralStaircase {
        radius: f64,
        step_rise: f64,
        steps_per_turn: u32,
        n_steps: u32,
    },
    /// Walk along a polyline of xy points.
    WaypointWalk { points: Vec<[f64; 2]> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub kind: ScenarioKind,
    /// Steps per second.
    #[serde(default = "default_cadence")]
    pub cadence: f64,
    /// Fraction of each step period spent in stance, in (0, 1).
    #[serde(default = "default_stance_fraction")]
    pub stance_fraction: f64,
    /// Meters per step.
    #[serde(default = "default_stride")]
    pub stride: f64,
    /// Still time before the first and after the last step, seconds.
    #[serde(default = "default_settle")]
    pub settle: f64,
}

fn default_cadence() -> f64 {
    1.8
}
fn default_stance_fraction() -> f64 {
    0.45
}
fn default_stride() -> f64 {
    0.5
}
fn default_settle() -> f64 {
    1.5
}

impl Scenario {
    pub fn corridor(length: f64) -> Self {
        Self {
            kind: ScenarioKind::Corridor { length },
            cadence: default_cadence(),
            stance_fraction: default_stance_fraction(),
            stride: default_stride(),
            settle: default_settle(),
        }
    }

    /// Staircase fixture: 1 m radius, 0.17 m rise, 12 steps per turn.
    pub fn spiral_staircase(n_steps: u32) -> Self {
        Self {
            kind: ScenarioKind::SpiralStaircase { radius: 1.0, step_rise: 0.17, steps_per_turn: 12, n_steps },
            cadence: default_cadence(),
            stance_fraction: default_stance_fraction(),
            stride: default_stride(),
            settle: default_settle(),
        }
    }

    pub fn waypoint_walk(points: Vec<[f64; 2]>) -> Self {
        Self {
            kind: ScenarioKind::WaypointWalk { points },
            cadence: default_cadence(),
            stance_fraction: default_stance_fraction(),
            stride: default_stride(),
            settle: default_settle(),
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.cadence > 0.0 && self.cadence.is_finite()) {
            return Err(SimError::InvalidScenario(format!("cadence must be positive, got {}", self.cadence)));
        }
        if !(self.stance_fraction > 0.0 && self.stance_fraction < 1.0) {
            return Err(SimError::InvalidScenario(format!(
                "stance_fraction must be in (0, 1), got {}",
                self.stance_fraction
            )));
        }
        if !(self.stride > 0.0 && self.stride.is_finite()) {
            return Err(SimError::InvalidScenario(format!("stride must be positive, got {}", self.stride)));
        }
        if !(self.settle >= 0.0 && self.settle.is_finite()) {
            return Err(SimError::InvalidScenario(format!("settle must be >= 0, got {}", self.settle)));
        }
        match &self.kind {
            ScenarioKind::Corridor { length } => {
                if !(*length > 0.0 && length.is_finite()) {
                    return Err(SimError::InvalidScenario(format!("corridor length must be positive, got {length}")));
                }
            }
            ScenarioKind::SpiralStaircase { radius, step_rise, steps_per_turn, n_steps } => {
                if !(*radius > 0.0) || !(*step_rise > 0.0) || *steps_per_turn < 3 || *n_steps == 0 {
                    return Err(SimError::InvalidScenario(
                        "staircase needs radius > 0, step_rise > 0, steps_per_turn >= 3, n_steps >= 1".into(),
                    ));
                }
            }
            ScenarioKind::WaypointWalk { points } => {
                if points.len() < 2 {
                    return Err(SimError::InvalidScenario("waypoint walk needs at least 2 points".into()));
                }
                let mut travel = 0.0;
                for w in points.windows(2) {
                    let dx = w[1][0] - w[0][0];
                    let dy = w[1][1] - w[0][1];
                    travel += (dx * dx + dy * dy).sqrt();
                }
                if travel <= 0.0 {
                    return Err(SimError::InvalidScenario("waypoint walk has zero travel".into()));
                }
            }
        }
        Ok(())
    }
}

/// Sensor corruption; all draws come from one seeded ChaCha8 stream
/// (accelerometer xyz then gyro xyz per sample), so a seed pins the stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseModel {
    pub accel_sigma: f64,
    pub gyro_sigma: f64,
    pub accel_bias: [f64; 3],
    pub gyro_bias: [f64; 3],
    pub seed: u64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self { accel_sigma: 0.0, gyro_sigma: 0.0, accel_bias: [0.0; 3], gyro_bias: [0.0; 3], seed: 0 }
    }
}

impl NoiseModel {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.accel_sigma < 0.0 || self.gyro_sigma < 0.0 {
            return Err(SimError::InvalidScenario("noise sigmas must be >= 0".into()));
        }
        Ok(())
    }
}

/// Footfall sequence for a scenario: positions plus the heading held while
/// standing on each.
fn footfalls(scenario: &Scenario) -> Vec<(Vector3<f64>, f64)> {
    match &scenario.kind {
        ScenarioKind::Corridor { length } => {
            let n = (length / scenario.stride).round().max(1.0) as usize;
            let step = length / n as f64;
            (0..=n).map(|i| (Vector3::new(i as f64 * step, 0.0, 0.0), 0.0)).collect()
        }
        ScenarioKind::SpiralStaircase { radius, step_rise, steps_per_turn, n_steps } => {
            // Helix placed so the walk starts at the origin heading +x and
            // turns left around a center at (0, radius); dead reckoning has
            // no absolute yaw, so scenarios live in the start-relative frame.
            (0..=*n_steps)
                .map(|i| {
                    let theta = std::f64::consts::TAU * i as f64 / *steps_per_turn as f64;
                    (
                        Vector3::new(
                            radius * theta.sin(),
                            radius * (1.0 - theta.cos()),
                            i as f64 * step_rise,
                        ),
                        theta,
                    )
                })
                .collect()
        }
        ScenarioKind::WaypointWalk { points } => {
            // Place footfalls every stride along the polyline arc length.
            let pts: Vec<Vector3<f64>> = points.iter().map(|p| Vector3::new(p[0], p[1], 0.0)).collect();
            let mut out = Vec::new();
            let mut heading = {
                let d = pts[1] - pts[0];
                d.y.atan2(d.x)
            };
            out.push((pts[0], heading));
            let mut seg = 0usize;
            let mut along = 0.0;
            loop {
                let mut remaining = scenario.stride;
                let mut placed = None;
                while seg < pts.len() - 1 {
                    let d = pts[seg + 1] - pts[seg];
                    let seg_len = d.norm();
                    let left = seg_len - along;
                    if remaining < left {
                        along += remaining;
                        heading = d.y.atan2(d.x);
                        placed = Some(pts[seg] + d / seg_len * along);
                        break;
                    }
                    remaining -= left;
                    seg += 1;
                    along = 0.0;
                }
                match placed {
                    Some(p) => out.push((p, heading)),
                    None => break,
                }
            }
            // Always finish exactly on the final point.
            let last = *pts.last().unwrap();
            if (out.last().unwrap().0 - last).norm() > 1e-9 {
                let d = last - out.last().unwrap().0;
                out.push((last, d.y.atan2(d.x)));
            }
            out
        }
    }
}

/// Minimum-jerk blend: zero velocity and acceleration at both ends.
fn min_jerk(tau: f64) -> f64 {
    tau * tau * tau * (10.0 - 15.0 * tau + 6.0 * tau * tau)
}

/// C2 lift bump, 0 at both ends, 1 at midpoint.
fn lift_bump(tau: f64) -> f64 {
    64.0 * tau.powi(3) * (1.0 - tau).powi(3)
}

enum Phase {
    Dwell { t1: f64, pos: Vector3<f64>, heading: f64 },
    Swing { t0: f64, t1: f64, from: (Vector3<f64>, f64), to: (Vector3<f64>, f64) },
}

impl Phase {
    fn end(&self) -> f64 {
        match self {
            Phase::Dwell { t1, .. } | Phase::Swing { t1, .. } => *t1,
        }
    }

    fn sample(&self, t: f64) -> (Vector3<f64>, f64) {
        match self {
            Phase::Dwell { pos, heading, .. } => (*pos, *heading),
            Phase::Swing { t0, t1, from, to } => {
                let tau = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
                let s = min_jerk(tau);
                let mut pos = from.0 + (to.0 - from.0) * s;
                pos.z += SWING_LIFT * lift_bump(tau);
                let dh = wrap_angle(to.1 - from.1);
                (pos, from.1 + dh * s)
            }
        }
    }
}

fn wrap_angle(a: f64) -> f64 {
    let mut a = a % std::f64::consts::TAU;
    if a > std::f64::consts::PI {
        a -= std::f64::consts::TAU;
    } else if a <= -std::f64::consts::PI {
        a += std::f64::consts::TAU;
    }
    a
}

/// Ground-truth foot trajectory for a scenario, sampled at `rate`.
pub fn gen_trajectory(scenario: &Scenario, rate: f64) -> Result<Trajectory, SimError> {
    scenario.validate()?;
    if rate < 50.0 {
        return Err(SimError::RateTooLow(rate));
    }
    let falls = footfalls(scenario);
    let stance = scenario.stance_fraction / scenario.cadence;
    let swing = (1.0 - scenario.stance_fraction) / scenario.cadence;

    let mut phases = Vec::new();
    let mut t = 0.0;
    let settle = scenario.settle.max(0.0);
    if settle > 0.0 {
        phases.push(Phase::Dwell { t1: t + settle, pos: falls[0].0, heading: falls[0].1 });
        t += settle;
    }
    for w in falls.windows(2) {
        phases.push(Phase::Swing { t0: t, t1: t + swing, from: w[0], to: w[1] });
        t += swing;
        phases.push(Phase::Dwell { t1: t + stance, pos: w[1].0, heading: w[1].1 });
        t += stance;
    }
    if settle > 0.0 {
        let last = *falls.last().unwrap();
        phases.push(Phase::Dwell { t1: t + settle, pos: last.0, heading: last.1 });
        t += settle;
    }
    let total = t;

    let dt = 1.0 / rate;
    let n = (total / dt).floor() as usize + 1;
    let mut timestamps = Vec::with_capacity(n);
    let mut positions = Vec::with_capacity(n);
    let mut orientations = Vec::with_capacity(n);
    let mut step_boundaries = Vec::new();
    let mut phase_idx = 0usize;
    let mut swings_seen = 0usize;
    for k in 0..n {
        let tk = k as f64 * dt;
        while phase_idx + 1 < phases.len() && tk >= phases[phase_idx].end() {
            if matches!(phases[phase_idx], Phase::Swing { .. }) {
                swings_seen += 1;
                step_boundaries.push(k);
            }
            phase_idx += 1;
        }
        let (pos, heading) = phases[phase_idx].sample(tk);
        timestamps.push(tk);
        positions.push(pos);
        orientations.push(UnitQuaternion::from_axis_angle(&Vector3::z_axis(), heading));
    }
    let _ = swings_seen;
    Ok(Trajectory { timestamps, positions, orientations, step_boundaries })
}

/// Synthesizes the IMU stream a foot-mounted sensor would record along a
/// trajectory: the exact inverse of strapdown integration, plus noise.
pub fn synth_imu(
    trajectory: &Trajectory,
    noise: &NoiseModel,
    rate: f64,
) -> Result<Vec<crate::ahrs::ImuSample>, SimError> {
    noise.validate()?;
    if trajectory.len() < 3 {
        return Err(SimError::TooShort);
    }
    let traj_dt = trajectory.timestamps[1] - trajectory.timestamps[0];
    let traj_rate = 1.0 / traj_dt;
    let factor = traj_rate / rate;
    let stride = factor.round() as usize;
    if stride == 0 || (factor - factor.round()).abs() > 0.01 {
        return Err(SimError::RateMismatch { traj: traj_rate, requested: rate });
    }

    let t: Vec<f64> = trajectory.timestamps.iter().step_by(stride).copied().collect();
    let p: Vec<Vector3<f64>> = trajectory.positions.iter().step_by(stride).copied().collect();
    let q: Vec<UnitQuaternion<f64>> = trajectory.orientations.iter().step_by(stride).copied().collect();
    let n = t.len();
    if n < 3 {
        return Err(SimError::TooShort);
    }
    let dt = 1.0 / rate;

    let accel_world = |i: usize| -> Vector3<f64> {
        let i = i.clamp(1, n - 2); // one-sided at the edges
        (p[i + 1] - p[i] * 2.0 + p[i - 1]) / (dt * dt)
    };
    let gyro_body = |i: usize| -> Vector3<f64> {
        let i = i.clamp(1, n - 2);
        let qdot = (q[i + 1].into_inner() - q[i - 1].into_inner()) / (2.0 * dt);
        let omega_q: Quaternion<f64> = q[i].into_inner().conjugate() * qdot * 2.0;
        Vector3::new(omega_q.i, omega_q.j, omega_q.k)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let accel_dist = Normal::new(0.0, noise.accel_sigma).expect("validated sigma");
    let gyro_dist = Normal::new(0.0, noise.gyro_sigma).expect("validated sigma");
    let accel_bias = Vector3::from(noise.accel_bias);
    let gyro_bias = Vector3::from(noise.gyro_bias);

    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let specific_force = accel_world(i) + Vector3::new(0.0, 0.0, STANDARD_GRAVITY);
        let accel_clean = q[i].inverse_transform_vector(&specific_force);
        let gyro_clean = gyro_body(i);
        let accel_noise = Vector3::new(
            accel_dist.sample(&mut rng),
            accel_dist.sample(&mut rng),
            accel_dist.sample(&mut rng),
        );
        let gyro_noise = Vector3::new(
            gyro_dist.sample(&mut rng),
            gyro_dist.sample(&mut rng),
            gyro_dist.sample(&mut rng),
        );
        out.push(crate::ahrs::ImuSample::new(
            t[i],
            accel_clean + accel_bias + accel_noise,
            gyro_clean + gyro_bias + gyro_noise,
        ));
    }
    Ok(out)
}

/// Position-accuracy metrics between an estimate and ground truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackingMetrics {
    pub rmse: f64,
    pub endpoint_error: f64,
    pub path_length_ratio: f64,
}

/// Compares trajectories over their overlapping time range; truth is
/// resampled to the estimate's timestamps by linear interpolation.
pub fn evaluate(estimate: &Trajectory, truth: &Trajectory) -> Result<TrackingMetrics, SimError> {
    if estimate.is_empty() || truth.is_empty() {
        return Err(SimError::DisjointRanges);
    }
    let t0 = estimate.timestamps[0].max(truth.timestamps[0]);
    let t1 = estimate.timestamps.last().unwrap().min(*truth.timestamps.last().unwrap());
    if t1 <= t0 {
        return Err(SimError::DisjointRanges);
    }

    let interp = |t: f64| -> Vector3<f64> {
        let idx = truth.timestamps.partition_point(|&x| x < t).min(truth.len() - 1).max(1);
        let (ta, tb) = (truth.timestamps[idx - 1], truth.timestamps[idx]);
        let alpha = ((t - ta) / (tb - ta)).clamp(0.0, 1.0);
        truth.positions[idx - 1] * (1.0 - alpha) + truth.positions[idx] * alpha
    };

    let mut sum_sq = 0.0;
    let mut count = 0usize;
    let mut last_err = 0.0;
    let mut est_len = 0.0;
    let mut truth_len = 0.0;
    let mut prev: Option<(Vector3<f64>, Vector3<f64>)> = None;
    for (i, &t) in estimate.timestamps.iter().enumerate() {
        if t < t0 || t > t1 {
            continue;
        }
        let e = estimate.positions[i];
        let tr = interp(t);
        last_err = (e - tr).norm();
        sum_sq += last_err * last_err;
        count += 1;
        if let Some((pe, pt)) = prev {
            est_len += (e - pe).norm();
            truth_len += (tr - pt).norm();
        }
        prev = Some((e, tr));
    }
    if count == 0 {
        return Err(SimError::DisjointRanges);
    }
    let ratio = if truth_len > 1e-12 {
        est_len / truth_len
    } else if est_len <= 1e-12 {
        1.0
    } else {
        f64::INFINITY
    };
    Ok(TrackingMetrics {
        rmse: (sum_sq / count as f64).sqrt(),
        endpoint_error: last_err,
        path_length_ratio: ratio,
    })
}

/// Collision and speed scoring for a planned route.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WalkScore {
    /// Distinct obstacle footprints the walker disc entered.
    pub collisions: usize,
    pub traversal_time: f64,
    pub mean_speed: f64,
}

/// Sweeps a disc of `walker_radius` along the plan's polyline at constant
/// `speed` and counts entries into distinct obstacle footprints (xy
/// rectangles).
pub fn walk_and_score(obstacles: &[ObstacleBox], plan: &NavPlan, walker_radius: f64, speed: f64) -> WalkScore {
    let mut hit = vec![false; obstacles.len()];
    let step = (walker_radius / 4.0).max(0.005);
    for w in plan.waypoints.windows(2) {
        let delta = w[1] - w[0];
        let len = delta.norm();
        if len < 1e-12 {
            continue;
        }
        let steps = (len / step).ceil() as usize;
        for i in 0..=steps {
            let pos = w[0] + delta * (i as f64 / steps as f64);
            for (b, was_hit) in obstacles.iter().zip(hit.iter_mut()) {
                if *was_hit {
                    continue;
                }
                let clamped = nalgebra::Vector2::new(
                    pos.x.clamp(b.min.x, b.max.x),
                    pos.y.clamp(b.min.y, b.max.y),
                );
                if (clamped - pos).norm() <= walker_radius {
                    *was_hit = true;
                }
            }
        }
    }
    let total: f64 = plan.waypoints.windows(2).map(|w| (w[1] - w[0]).norm()).sum();
    let traversal_time = if speed > 0.0 { total / speed } else { 0.0 };
    WalkScore {
        collisions: hit.iter().filter(|h| **h).count(),
        traversal_time,
        mean_speed: if traversal_time > 0.0 { total / traversal_time } else { 0.0 },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::voxelmap::HeightClass;

    #[test]
    fn corridor_geometry() {
        let scenario = Scenario::corridor(10.0);
        let traj = gen_trajectory(&scenario, 100.0).unwrap();
        assert_eq!(traj.step_boundaries.len(), 20);
        let end = traj.positions.last().unwrap();
        assert!((end - Vector3::new(10.0, 0.0, 0.0)).norm() < 1e-6, "end {end:?}");
    }

    #[test]
    fn staircase_geometry() {
        let scenario = Scenario::spiral_staircase(24);
        let traj = gen_trajectory(&scenario, 100.0).unwrap();
        let end = traj.positions.last().unwrap();
        assert!((end.z - 24.0 * 0.17).abs() < 1e-6);
        // Heading advances 30 degrees per step: after 24 steps, two full
        // turns, so the final heading equals the initial one.
        let first = traj.orientations.first().unwrap();
        let last = traj.orientations.last().unwrap();
        assert!(first.angle_to(last) < 1e-6);
        // And x/y return to the start of the circle.
        assert!((end.xy() - traj.positions[0].xy()).norm() < 1e-6);
    }

    #[test]
    fn stance_midpoint_velocity_is_zero() {
        let scenario = Scenario::corridor(3.0);
        let rate = 100.0;
        let traj = gen_trajectory(&scenario, rate).unwrap();
        // Stance midpoints: settle + swing + stance/2 + k*(swing+stance).
        let stance = scenario.stance_fraction / scenario.cadence;
        let swing = (1.0 - scenario.stance_fraction) / scenario.cadence;
        for k in 0..5 {
            let t_mid = scenario.settle + swing + stance / 2.0 + k as f64 * (swing + stance);
            let i = (t_mid * rate) as usize;
            let v = (traj.positions[i + 1] - traj.positions[i - 1]) * (rate / 2.0);
            assert!(v.norm() < 1e-12, "stance {k}: v {v:?}");
        }
    }

    #[test]
    fn invalid_scenarios_rejected() {
        let mut s = Scenario::corridor(10.0);
        s.stance_fraction = 1.0;
        assert!(matches!(gen_trajectory(&s, 100.0), Err(SimError::InvalidScenario(_))));
        assert!(matches!(
            gen_trajectory(&Scenario::corridor(-1.0), 100.0),
            Err(SimError::InvalidScenario(_))
        ));
        assert!(matches!(
            gen_trajectory(&Scenario::corridor(10.0), 20.0),
            Err(SimError::RateTooLow(_))
        ));
        assert!(matches!(
            gen_trajectory(&Scenario::waypoint_walk(vec![[0.0, 0.0]]), 100.0),
            Err(SimError::InvalidScenario(_))
        ));
    }

    #[test]
    fn static_trajectory_synthesizes_gravity_only() {
        let n = 500;
        let traj = Trajectory {
            timestamps: (0..n).map(|i| i as f64 * 0.01).collect(),
            positions: vec![Vector3::new(1.0, 2.0, 3.0); n],
            orientations: vec![UnitQuaternion::from_axis_angle(&Vector3::x_axis(), 0.3); n],
            step_boundaries: vec![],
        };
        let samples = synth_imu(&traj, &NoiseModel::default(), 100.0).unwrap();
        let expected = traj.orientations[0]
            .inverse_transform_vector(&Vector3::new(0.0, 0.0, STANDARD_GRAVITY));
        for s in &samples {
            assert!((s.accel - expected).norm() < 1e-6);
            assert!(s.gyro.norm() < 1e-6);
        }
    }

    #[test]
    fn seeded_noise_is_reproducible() {
        let traj = gen_trajectory(&Scenario::corridor(4.0), 100.0).unwrap();
        let noise = NoiseModel { accel_sigma: 0.05, gyro_sigma: 0.01, seed: 7, ..Default::default() };
        let a = synth_imu(&traj, &noise, 100.0).unwrap();
        let b = synth_imu(&traj, &noise, 100.0).unwrap();
        assert_eq!(a, b);
        let c = synth_imu(&traj, &NoiseModel { seed: 8, ..noise }, 100.0).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn identical_trajectories_score_zero() {
        let traj = gen_trajectory(&Scenario::corridor(5.0), 100.0).unwrap();
        let m = evaluate(&traj, &traj).unwrap();
        assert_eq!(m.rmse, 0.0);
        assert_eq!(m.endpoint_error, 0.0);
        assert!((m.path_length_ratio - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_shift_scores_its_magnitude() {
        let truth = gen_trajectory(&Scenario::corridor(5.0), 100.0).unwrap();
        let mut shifted = truth.clone();
        for p in &mut shifted.positions {
            *p += Vector3::new(1.0, 0.0, 0.0);
        }
        let m = evaluate(&shifted, &truth).unwrap();
        assert!((m.rmse - 1.0).abs() < 1e-9);
        assert!((m.endpoint_error - 1.0).abs() < 1e-9);
    }

    #[test]
    fn disjoint_ranges_error() {
        let a = gen_trajectory(&Scenario::corridor(2.0), 100.0).unwrap();
        let mut b = a.clone();
        let shift = a.timestamps.last().unwrap() + 10.0;
        for t in &mut b.timestamps {
            *t += shift;
        }
        assert!(matches!(evaluate(&a, &b), Err(SimError::DisjointRanges)));
    }

    fn plan_of(points: &[(f64, f64)]) -> NavPlan {
        let waypoints: Vec<nalgebra::Vector2<f64>> =
            points.iter().map(|&(x, y)| nalgebra::Vector2::new(x, y)).collect();
        let total_length = waypoints.windows(2).map(|w| (w[1] - w[0]).norm()).sum();
        NavPlan { waypoints, total_length, instructions: vec![], nearby_obstacles: vec![] }
    }

    fn body_box(min: (f64, f64), max: (f64, f64)) -> ObstacleBox {
        ObstacleBox {
            min: Vector3::new(min.0, min.1, 0.0),
            max: Vector3::new(max.0, max.1, 1.0),
            height_class: HeightClass::Body,
            label: None,
            voxel_count: 1,
        }
    }

    #[test]
    fn empty_map_scores_no_collisions() {
        let plan = plan_of(&[(0.0, 0.0), (5.0, 0.0)]);
        let score = walk_and_score(&[], &plan, 0.3, 1.0);
        assert_eq!(score.collisions, 0);
        assert!((score.traversal_time - 5.0).abs() < 1e-9);
        assert!((score.mean_speed - 1.0).abs() < 1e-9);
    }

    #[test]
    fn path_through_box_collides_once() {
        let plan = plan_of(&[(0.0, 0.0), (5.0, 0.0)]);
        let b = body_box((2.0, -0.2), (2.5, 0.2));
        let score = walk_and_score(&[b], &plan, 0.3, 1.25);
        assert_eq!(score.collisions, 1);
    }

    #[test]
    fn skirting_path_misses_box() {
        let plan = plan_of(&[(0.0, 1.0), (5.0, 1.0)]);
        let b = body_box((2.0, -0.2), (2.5, 0.2));
        let score = walk_and_score(&[b], &plan, 0.3, 1.0);
        assert_eq!(score.collisions, 0);
    }

    #[test]
    fn scenario_json_round_trip() {
        let s = Scenario::spiral_staircase(60);
        let json = serde_json::to_string_pretty(&s).unwrap();
        let back: Scenario = serde_json::from_str(&json).unwrap();
        assert_eq!(s, back);
        // Defaults fill in omitted tuning fields.
        let minimal: Scenario =
            serde_json::from_str("{\"kind\": {\"type\": \"corridor\", \"length\": 10.0}}").unwrap();
        assert_eq!(minimal.cadence, 1.8);
        assert!(serde_json::from_str::<Scenario>("{\"kind\": {\"type\": \"corridor\", \"length\": 1.0}, \"bogus\": 1}").is_err());
    }
}
