//! Quaternion attitude estimation from gyro + accelerometer streams.
//!
//! Orientation is a body-to-earth unit quaternion with the earth frame z-up;
//! this convention is fixed project-wide and asserted in tests. Two
//! complementary filters are provided: Mahony (proportional + integral
//! feedback on the gravity cross-product error) and Madgwick (normalized
//! gradient step). Both propagate gyro rates through the same exact
//! exponential-map update, so with their feedback gains at zero they reduce
//! bit-for-bit to [`quat_integrate_gyro`].
//!
//! There is no magnetometer path: yaw is observable only relative to the
//! starting heading.

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use thiserror::Error;

use crate::STANDARD_GRAVITY;

/// Accelerometer corrections are applied only when the measured magnitude is
/// within this band around 1 g; foot impacts reach several g and would
/// otherwise corrupt the tilt estimate.
pub const ACCEL_GATE_LOW: f64 = 0.5 * STANDARD_GRAVITY;
pub const ACCEL_GATE_HIGH: f64 = 1.5 * STANDARD_GRAVITY;

#[derive(Debug, Error, PartialEq)]
pub enum AhrsError {
    #[error("non-finite {0} input")]
    NonFinite(&'static str),
    #[error("dt must be positive and finite, got {0}")]
    InvalidDt(f64),
    #[error("filter gains must be non-negative")]
    NegativeGain,
}

/// One timestamped IMU reading in the sensor body frame. The accelerometer
/// includes the gravity reaction (a static sensor reads +g along its up
/// axis); gyro is rad/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample {
    /// Seconds, strictly increasing within a stream.
    pub t: f64,
    /// m/s^2, body frame.
    pub accel: Vector3<f64>,
    /// rad/s, body frame.
    pub gyro: Vector3<f64>,
}

impl ImuSample {
    pub fn new(t: f64, accel: Vector3<f64>, gyro: Vector3<f64>) -> Self {
        Self { t, accel, gyro }
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite()
            && self.accel.iter().all(|v| v.is_finite())
            && self.gyro.iter().all(|v| v.is_finite())
    }
}

/// Complementary filter state. `integral_error` is only advanced by the
/// Mahony update (and only when `ki > 0`); `beta` is only read by the
/// Madgwick update. Keeping all gains in one state lets the two filters be
/// swapped behind the same call shape.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AhrsState {
    pub q: UnitQuaternion<f64>,
    pub integral_error: Vector3<f64>,
    pub kp: f64,
    pub ki: f64,
    pub beta: f64,
}

impl AhrsState {
    pub const DEFAULT_KP: f64 = 0.5;
    pub const DEFAULT_KI: f64 = 0.0;
    pub const DEFAULT_BETA: f64 = 0.1;

    pub fn new(q: UnitQuaternion<f64>, kp: f64, ki: f64, beta: f64) -> Result<Self, AhrsError> {
        if kp < 0.0 || ki < 0.0 || beta < 0.0 || !(kp.is_finite() && ki.is_finite() && beta.is_finite()) {
            return Err(AhrsError::NegativeGain);
        }
        Ok(Self { q, integral_error: Vector3::zeros(), kp, ki, beta })
    }

    /// Mahony configuration starting from `q`.
    pub fn mahony(q: UnitQuaternion<f64>, kp: f64, ki: f64) -> Result<Self, AhrsError> {
        Self::new(q, kp, ki, 0.0)
    }

    /// Madgwick configuration starting from `q`.
    pub fn madgwick(q: UnitQuaternion<f64>, beta: f64) -> Result<Self, AhrsError> {
        Self::new(q, 0.0, 0.0, beta)
    }
}

impl Default for AhrsState {
    fn default() -> Self {
        Self {
            q: UnitQuaternion::identity(),
            integral_error: Vector3::zeros(),
            kp: Self::DEFAULT_KP,
            ki: Self::DEFAULT_KI,
            beta: Self::DEFAULT_BETA,
        }
    }
}

fn check_vector(v: &Vector3<f64>, what: &'static str) -> Result<(), AhrsError> {
    if v.iter().all(|c| c.is_finite()) {
        Ok(())
    } else {
        Err(AhrsError::NonFinite(what))
    }
}

fn check_dt(dt: f64) -> Result<(), AhrsError> {
    if dt.is_finite() && dt > 0.0 {
        Ok(())
    } else {
        Err(AhrsError::InvalidDt(dt))
    }
}

/// Advances `q` by the body-frame rotation `gyro * dt` using the exact
/// quaternion exponential, then renormalizes.
pub fn quat_integrate_gyro(
    q: &UnitQuaternion<f64>,
    gyro: &Vector3<f64>,
    dt: f64,
) -> Result<UnitQuaternion<f64>, AhrsError> {
    check_dt(dt)?;
    check_vector(gyro, "gyro")?;
    let dq = UnitQuaternion::from_scaled_axis(gyro * dt);
    let mut out = q * dq;
    out.renormalize();
    Ok(out)
}

fn accel_in_gate(magnitude: f64) -> bool {
    (ACCEL_GATE_LOW..=ACCEL_GATE_HIGH).contains(&magnitude)
}

/// Predicted up direction (earth +z) expressed in the body frame.
fn predicted_up(q: &UnitQuaternion<f64>) -> Vector3<f64> {
    q.inverse_transform_vector(&Vector3::z())
}

/// Mahony complementary update: the gravity error (cross product of the
/// measured and predicted up directions) feeds back into the gyro rate with
/// proportional gain `kp` and integral gain `ki`. Accel corrections are
/// gated to magnitudes in [0.5 g, 1.5 g]; outside the gate the update is
/// gyro-only.
pub fn mahony_update(state: &AhrsState, sample: &ImuSample, dt: f64) -> Result<AhrsState, AhrsError> {
    check_dt(dt)?;
    check_vector(&sample.accel, "accel")?;
    check_vector(&sample.gyro, "gyro")?;

    let mut omega = sample.gyro;
    let mut integral = state.integral_error;
    let amag = sample.accel.norm();
    if amag > 0.0 && accel_in_gate(amag) {
        let measured_up = sample.accel / amag;
        let err = measured_up.cross(&predicted_up(&state.q));
        if state.ki > 0.0 {
            integral += err * dt;
        }
        omega += err * state.kp + integral * state.ki;
    }
    let q = quat_integrate_gyro(&state.q, &omega, dt)?;
    Ok(AhrsState { q, integral_error: integral, ..*state })
}

/// Madgwick update: exact gyro propagation followed by one normalized
/// gradient-descent step toward the measured gravity direction, scaled by
/// `beta * dt`. Uses the same accel magnitude gate as [`mahony_update`].
pub fn madgwick_update(
    state: &AhrsState,
    sample: &ImuSample,
    dt: f64,
) -> Result<AhrsState, AhrsError> {
    check_dt(dt)?;
    check_vector(&sample.accel, "accel")?;
    check_vector(&sample.gyro, "gyro")?;

    let q_gyro = quat_integrate_gyro(&state.q, &sample.gyro, dt)?;
    let amag = sample.accel.norm();
    if state.beta == 0.0 || amag == 0.0 || !accel_in_gate(amag) {
        return Ok(AhrsState { q: q_gyro, ..*state });
    }

    let a = sample.accel / amag;
    let (w, x, y, z) = (q_gyro.w, q_gyro.i, q_gyro.j, q_gyro.k);

    // Objective: f = (predicted up in body frame) - (measured up).
    let f1 = 2.0 * (x * z - w * y) - a.x;
    let f2 = 2.0 * (w * x + y * z) - a.y;
    let f3 = 2.0 * (0.5 - x * x - y * y) - a.z;

    // Jacobian-transpose times f.
    let s_w = -2.0 * y * f1 + 2.0 * x * f2;
    let s_x = 2.0 * z * f1 + 2.0 * w * f2 - 4.0 * x * f3;
    let s_y = -2.0 * w * f1 + 2.0 * z * f2 - 4.0 * y * f3;
    let s_z = 2.0 * x * f1 + 2.0 * y * f2;

    let grad = Quaternion::new(s_w, s_x, s_y, s_z);
    let norm = grad.norm();
    if norm <= 0.0 {
        return Ok(AhrsState { q: q_gyro, ..*state });
    }
    let step = grad / norm * (state.beta * dt);
    let q = UnitQuaternion::from_quaternion(q_gyro.into_inner() - step);
    Ok(AhrsState { q, ..*state })
}

/// Rotates a body-frame accelerometer reading into the earth frame and
/// removes gravity `(0, 0, g)`, leaving linear acceleration.
pub fn earth_accel(q: &UnitQuaternion<f64>, accel: &Vector3<f64>, g: f64) -> Vector3<f64> {
    q.transform_vector(accel) - Vector3::new(0.0, 0.0, g)
}
