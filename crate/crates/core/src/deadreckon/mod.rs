//! Foot-mounted strapdown dead reckoning with per-step zero-velocity drift
//! compensation.
//!
//! The tracker detects stance phases (foot planted) with a band-passed
//! acceleration magnitude threshold, integrates earth-frame acceleration over
//! each swing, and removes the velocity drift accumulated during the swing by
//! subtracting a linear ramp that ends at the observed residual velocity:
//! the foot is known to be stationary again, so the true end velocity is
//! zero. Position is frozen during stance; orientation keeps updating.
//!
//! Orientation runs a Mahony filter whose accelerometer correction is gated
//! on the same band-passed quiet signal used for stance detection: while the
//! foot is quiet the accelerometer really does measure gravity, while during
//! a swing it measures kinematics and would drag the tilt estimate off, so
//! swing samples propagate gyro-only. The gate is causal, so the streaming
//! driver applies it identically.
//!
//! Two drivers share every numeric path: [`run_offline`] processes a whole
//! recording, and [`OnlineTracker`](online::OnlineTracker) consumes samples
//! one at a time and emits each corrected step as soon as the following
//! stance is confirmed. Their outputs are identical, which is the property
//! the per-step compensation is built around.
//!
//! Timestamps are validated against the configured rate (every gap within
//! 1%), then the nominal `1/sample_rate` step is used throughout so both
//! drivers do the exact same arithmetic.

mod online;

pub use online::{online_trajectory, OnlineTracker, TrackerEvent};

use nalgebra::{UnitQuaternion, Vector3};
use std::f64::consts::PI;
use thiserror::Error;

use crate::ahrs::{self, AhrsState, ImuSample};
use crate::STANDARD_GRAVITY;

#[derive(Debug, Error)]
pub enum TrackError {
    #[error("stream must contain at least {min} samples, got {got}")]
    TooShort { min: usize, got: usize },
    #[error("non-monotonic timestamp at sample {index}: {t} after {prev}")]
    NonMonotonic { index: usize, t: f64, prev: f64 },
    #[error("non-uniform sample spacing at sample {index}: gap {gap:.6} s, expected {expected:.6} s +/- 1%")]
    NonUniformRate { index: usize, gap: f64, expected: f64 },
    #[error("non-finite value at sample {index}")]
    NonFinite { index: usize },
    #[error("no stance detected; try lowering stance_threshold (currently {threshold:.4} m/s^2) or min_stance_duration")]
    NoStance { threshold: f64 },
    #[error("segment range {start}..={end} invalid for {len} samples")]
    BadRange { start: usize, end: usize, len: usize },
    #[error("orientations length {orientations} does not match samples length {samples}")]
    LengthMismatch { orientations: usize, samples: usize },
    #[error("invalid tracker config: {0}")]
    Config(String),
    #[error(transparent)]
    Ahrs(#[from] ahrs::AhrsError),
}

/// Tracker tuning. Defaults suit a 100 Hz shoe-mounted IMU and normal gait.
///
/// The band-pass brackets the swing transient band, not the cadence
/// fundamental: the high-pass must forget a 2-4 g swing within a fraction of
/// the ~0.25 s stance dwell or the dwell never reads quiet (a cutoff of
/// 5 Hz forgets in ~30 ms; one of 0.1 Hz remembers for seconds and also
/// subtracts the walk's running mean, parking the dwell reading at several
/// m/s^2).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackerConfig {
    /// Hz.
    pub sample_rate: f64,
    /// High-pass cutoff of the stance band-pass, Hz.
    pub hp_cutoff: f64,
    /// Low-pass cutoff of the stance band-pass, Hz.
    pub lp_cutoff: f64,
    /// Band-passed magnitude below this counts as stationary, m/s^2.
    pub stance_threshold: f64,
    /// Quiet runs shorter than this are not stance, seconds.
    pub min_stance_duration: f64,
    /// m/s^2.
    pub g: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            sample_rate: 100.0,
            hp_cutoff: 5.0,
            lp_cutoff: 15.0,
            stance_threshold: 0.05 * STANDARD_GRAVITY,
            min_stance_duration: 0.1,
            g: STANDARD_GRAVITY,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<(), TrackError> {
        if !(self.sample_rate.is_finite() && self.sample_rate > 0.0) {
            return Err(TrackError::Config(format!("sample_rate must be positive, got {}", self.sample_rate)));
        }
        if !(self.hp_cutoff > 0.0 && self.hp_cutoff < self.lp_cutoff && self.lp_cutoff < self.sample_rate / 2.0) {
            return Err(TrackError::Config(format!(
                "cutoffs must satisfy 0 < hp ({}) < lp ({}) < sample_rate/2 ({})",
                self.hp_cutoff,
                self.lp_cutoff,
                self.sample_rate / 2.0
            )));
        }
        if !(self.stance_threshold > 0.0) {
            return Err(TrackError::Config(format!("stance_threshold must be positive, got {}", self.stance_threshold)));
        }
        if !(self.min_stance_duration >= 0.0 && self.min_stance_duration.is_finite()) {
            return Err(TrackError::Config(format!("min_stance_duration must be >= 0, got {}", self.min_stance_duration)));
        }
        if !(self.g > 0.0 && self.g.is_finite()) {
            return Err(TrackError::Config(format!("g must be positive, got {}", self.g)));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.sample_rate
    }

    /// Minimum number of consecutive quiet samples for a run to count as
    /// stance: a run of n samples spans (n-1) * dt seconds.
    pub(crate) fn min_stance_samples(&self) -> usize {
        ((self.min_stance_duration * self.sample_rate - 1e-9).ceil().max(0.0) as usize) + 1
    }

    /// Samples used for the initial static orientation estimate (0.5 s).
    pub(crate) fn init_samples(&self) -> usize {
        ((0.5 * self.sample_rate).round() as usize).max(1)
    }

    /// Swing integration starts this many samples before the detected
    /// stance end (30 ms). The band-pass needs that long to rise above the
    /// threshold once the foot moves, so the detected boundary sits inside
    /// the true swing; backing up into the dwell puts the zero-velocity
    /// initial condition where the foot really is still.
    pub(crate) fn swing_guard(&self) -> usize {
        (0.03 * self.sample_rate).round() as usize
    }
}

/// First-order IIR section from the bilinear transform of `s/(s+wc)`
/// (high-pass) or `wc/(s+wc)` (low-pass).
#[derive(Debug, Clone, Copy)]
struct FirstOrder {
    b0: f64,
    b1: f64,
    a1: f64,
    x1: f64,
    y1: f64,
}

impl FirstOrder {
    fn high_pass(cutoff_hz: f64, dt: f64) -> Self {
        let c = PI * cutoff_hz * dt;
        let s = 1.0 / (1.0 + c);
        Self { b0: s, b1: -s, a1: (c - 1.0) * s, x1: 0.0, y1: 0.0 }
    }

    fn low_pass(cutoff_hz: f64, dt: f64) -> Self {
        let c = PI * cutoff_hz * dt;
        let s = 1.0 / (1.0 + c);
        Self { b0: c * s, b1: c * s, a1: (c - 1.0) * s, x1: 0.0, y1: 0.0 }
    }

    fn step(&mut self, x: f64) -> f64 {
        let y = self.b0 * x + self.b1 * self.x1 - self.a1 * self.y1;
        self.x1 = x;
        self.y1 = y;
        y
    }
}

/// The tilt correction additionally requires the raw magnitude within this
/// band around g (m/s^2): quiet-gated samples at a swing onset still carry
/// up to ~1 m/s^2 of real acceleration (the band-pass is slow to rise), and
/// feeding those to the filter tilts the estimate a few milliradians per
/// step.
pub(crate) const GRAVITY_GATE: f64 = 0.1;

/// Streaming |accel| - g -> high-pass -> low-pass -> |.| chain. Both the
/// offline and online drivers run this exact filter.
#[derive(Debug, Clone, Copy)]
pub(crate) struct BandpassMagnitude {
    hp: FirstOrder,
    lp: FirstOrder,
    g: f64,
}

impl BandpassMagnitude {
    pub(crate) fn new(cfg: &TrackerConfig) -> Self {
        Self {
            hp: FirstOrder::high_pass(cfg.hp_cutoff, cfg.dt()),
            lp: FirstOrder::low_pass(cfg.lp_cutoff, cfg.dt()),
            g: cfg.g,
        }
    }

    pub(crate) fn step(&mut self, accel: &Vector3<f64>) -> f64 {
        let x = accel.norm() - self.g;
        self.lp.step(self.hp.step(x)).abs()
    }
}

pub(crate) fn validate_stream(samples: &[ImuSample], cfg: &TrackerConfig) -> Result<(), TrackError> {
    cfg.validate()?;
    if samples.len() < 2 {
        return Err(TrackError::TooShort { min: 2, got: samples.len() });
    }
    let expected = cfg.dt();
    for (i, s) in samples.iter().enumerate() {
        if !s.is_finite() {
            return Err(TrackError::NonFinite { index: i });
        }
        if i > 0 {
            let gap = s.t - samples[i - 1].t;
            if gap <= 0.0 {
                return Err(TrackError::NonMonotonic { index: i, t: s.t, prev: samples[i - 1].t });
            }
            if (gap - expected).abs() > 0.01 * expected {
                return Err(TrackError::NonUniformRate { index: i, gap, expected });
            }
        }
    }
    Ok(())
}

/// Band-passed acceleration magnitude for a whole recording.
pub fn bandpass_magnitude(samples: &[ImuSample], cfg: &TrackerConfig) -> Result<Vec<f64>, TrackError> {
    validate_stream(samples, cfg)?;
    let mut filter = BandpassMagnitude::new(cfg);
    Ok(samples.iter().map(|s| filter.step(&s.accel)).collect())
}

/// Inclusive index range of one detected stance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StanceInterval {
    pub start: usize,
    pub end: usize,
}

/// Maximal runs of `filtered < stance_threshold` lasting at least
/// `min_stance_duration`, sorted and non-overlapping.
pub fn detect_stance(filtered: &[f64], cfg: &TrackerConfig) -> Vec<StanceInterval> {
    let min_run = cfg.min_stance_samples();
    let mut intervals = Vec::new();
    let mut run_start: Option<usize> = None;
    for (i, &v) in filtered.iter().enumerate() {
        if v < cfg.stance_threshold {
            run_start.get_or_insert(i);
        } else if let Some(start) = run_start.take() {
            if i - start >= min_run {
                intervals.push(StanceInterval { start, end: i - 1 });
            }
        }
    }
    if let Some(start) = run_start {
        if filtered.len() - start >= min_run {
            intervals.push(StanceInterval { start, end: filtered.len() - 1 });
        }
    }
    intervals
}

/// Trapezoidal double integration of earth-frame acceleration over
/// `start..=end`, with zero initial velocity and position (the caller
/// offsets). Returns one velocity and one position per sample in the range.
pub fn integrate_segment(
    samples: &[ImuSample],
    orientations: &[UnitQuaternion<f64>],
    start: usize,
    end: usize,
    cfg: &TrackerConfig,
) -> Result<(Vec<Vector3<f64>>, Vec<Vector3<f64>>), TrackError> {
    if orientations.len() != samples.len() {
        return Err(TrackError::LengthMismatch { orientations: orientations.len(), samples: samples.len() });
    }
    if start >= end || end >= samples.len() {
        return Err(TrackError::BadRange { start, end, len: samples.len() });
    }
    let dt = cfg.dt();
    let n = end - start + 1;
    let accel: Vec<Vector3<f64>> = (start..=end)
        .map(|i| ahrs::earth_accel(&orientations[i], &samples[i].accel, cfg.g))
        .collect();
    let mut velocity = Vec::with_capacity(n);
    let mut position = Vec::with_capacity(n);
    velocity.push(Vector3::zeros());
    position.push(Vector3::zeros());
    for j in 1..n {
        let v = velocity[j - 1] + (accel[j - 1] + accel[j]) * (0.5 * dt);
        let p = position[j - 1] + (velocity[j - 1] + v) * (0.5 * dt);
        velocity.push(v);
        position.push(p);
    }
    Ok((velocity, position))
}

/// How a swing segment was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SwingKind {
    /// Stance-to-stance swing, drift-compensated.
    Full,
    /// Stream began mid-swing; integrated raw, no compensation possible.
    LeadingPartial,
    /// Stream ended mid-swing; integrated raw, no compensation possible.
    TrailingPartial,
}

/// One swing phase (stance end to next stance start) with its raw and
/// drift-corrected series. Positions are absolute (chained onto the
/// trajectory so far); for `Full` segments the corrected velocity at the
/// final sample is exactly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct StepSegment {
    pub start_idx: usize,
    pub end_idx: usize,
    pub kind: SwingKind,
    pub dt: f64,
    pub raw_velocity: Vec<Vector3<f64>>,
    pub corrected_velocity: Vec<Vector3<f64>>,
    pub corrected_positions: Vec<Vector3<f64>>,
    /// Pre-correction velocity at the segment end.
    pub residual_velocity: Vector3<f64>,
}

impl StepSegment {
    pub fn len(&self) -> usize {
        self.end_idx - self.start_idx + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn duration(&self) -> f64 {
        (self.len() - 1) as f64 * self.dt
    }
}

pub(crate) fn build_raw_segment(
    samples: &[ImuSample],
    orientations: &[UnitQuaternion<f64>],
    start: usize,
    end: usize,
    base: Vector3<f64>,
    kind: SwingKind,
    cfg: &TrackerConfig,
) -> Result<StepSegment, TrackError> {
    let (velocity, offsets) = integrate_segment(samples, orientations, start, end, cfg)?;
    let positions: Vec<Vector3<f64>> = offsets.iter().map(|p| base + p).collect();
    let residual = *velocity.last().expect("segment has samples");
    Ok(StepSegment {
        start_idx: start,
        end_idx: end,
        kind,
        dt: cfg.dt(),
        raw_velocity: velocity.clone(),
        corrected_velocity: velocity,
        corrected_positions: positions,
        residual_velocity: residual,
    })
}

/// Zero-velocity update: subtracts a linear velocity ramp (zero at the swing
/// start, the observed residual at the end) and re-integrates position from
/// the corrected velocity. The corrected end velocity is exactly zero.
pub fn zupt_correct(segment: &StepSegment) -> StepSegment {
    let n = segment.raw_velocity.len();
    if n < 2 {
        return segment.clone();
    }
    let span = (n - 1) as f64;
    let corrected_velocity: Vec<Vector3<f64>> = segment
        .raw_velocity
        .iter()
        .enumerate()
        .map(|(j, v)| v - segment.residual_velocity * (j as f64 / span))
        .collect();
    let base = segment.corrected_positions[0];
    let mut positions = Vec::with_capacity(n);
    positions.push(base);
    for j in 1..n {
        let p = positions[j - 1] + (corrected_velocity[j - 1] + corrected_velocity[j]) * (0.5 * segment.dt);
        positions.push(p);
    }
    StepSegment {
        kind: SwingKind::Full,
        corrected_velocity,
        corrected_positions: positions,
        ..segment.clone()
    }
}

/// A reconstructed track: one pose per input sample plus the sample indices
/// of detected footfalls.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub timestamps: Vec<f64>,
    pub positions: Vec<Vector3<f64>>,
    pub orientations: Vec<UnitQuaternion<f64>>,
    pub step_boundaries: Vec<usize>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    /// Total polyline length of the position series, meters.
    pub fn path_length(&self) -> f64 {
        self.positions.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }
}

/// Trajectory plus the per-step detail behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackOutput {
    pub trajectory: Trajectory,
    pub segments: Vec<StepSegment>,
}

impl TrackOutput {
    /// Number of compensated steps.
    pub fn step_count(&self) -> usize {
        self.segments.iter().filter(|s| s.kind == SwingKind::Full).count()
    }
}

/// Initial orientation from the first 0.5 s, assumed static: the tilt that
/// maps the mean measured accel direction onto earth up. Yaw starts at zero
/// (heading is only ever relative to the start without a magnetometer).
pub(crate) fn initial_orientation(samples: &[ImuSample], cfg: &TrackerConfig) -> UnitQuaternion<f64> {
    let n = cfg.init_samples().min(samples.len());
    let mean: Vector3<f64> = samples[..n].iter().map(|s| s.accel).sum::<Vector3<f64>>() / n as f64;
    if mean.norm() < 1e-9 {
        return UnitQuaternion::identity();
    }
    UnitQuaternion::rotation_between(&mean, &Vector3::z())
        .unwrap_or_else(|| UnitQuaternion::from_axis_angle(&nalgebra::Vector3::x_axis(), PI))
}

/// Is this sample trustworthy for tilt correction? Quiet per the band-pass
/// and measuring very nearly 1 g.
pub(crate) fn gravity_locked(sample: &ImuSample, filtered: f64, cfg: &TrackerConfig) -> bool {
    filtered < cfg.stance_threshold && (sample.accel.norm() - cfg.g).abs() < GRAVITY_GATE
}

/// Mahony orientation pass with the accel correction gated on
/// [`gravity_locked`]; all other samples are gyro-only.
pub(crate) fn ahrs_orientations(
    samples: &[ImuSample],
    filtered: &[f64],
    cfg: &TrackerConfig,
) -> Result<Vec<UnitQuaternion<f64>>, TrackError> {
    let q0 = initial_orientation(samples, cfg);
    let mut state = AhrsState::mahony(q0, AhrsState::DEFAULT_KP, AhrsState::DEFAULT_KI)?;
    let dt = cfg.dt();
    let mut out = Vec::with_capacity(samples.len());
    out.push(q0);
    for (i, sample) in samples.iter().enumerate().skip(1) {
        if gravity_locked(sample, filtered[i], cfg) {
            state = ahrs::mahony_update(&state, sample, dt)?;
        } else {
            state.q = ahrs::quat_integrate_gyro(&state.q, &sample.gyro, dt)?;
        }
        out.push(state.q);
    }
    Ok(out)
}

/// Builds the full per-sample trajectory from the segment list: segment
/// ranges take their corrected positions, and every gap (stance) holds the
/// position reached by the previous segment. Both drivers assemble through
/// here, so their outputs agree exactly.
pub(crate) fn assemble_trajectory(
    timestamps: Vec<f64>,
    orientations: Vec<UnitQuaternion<f64>>,
    segments: &[StepSegment],
) -> Trajectory {
    let n = timestamps.len();
    let mut positions = vec![Vector3::zeros(); n];
    let mut base = Vector3::zeros();
    let mut cursor = 0usize;
    for seg in segments {
        for i in cursor..seg.start_idx.min(n) {
            positions[i] = base;
        }
        for (j, p) in seg.corrected_positions.iter().enumerate() {
            positions[seg.start_idx + j] = *p;
        }
        base = *seg.corrected_positions.last().expect("segment has samples");
        cursor = seg.end_idx + 1;
    }
    for i in cursor..n {
        positions[i] = base;
    }
    let step_boundaries = segments
        .iter()
        .filter(|s| s.kind == SwingKind::Full)
        .map(|s| s.end_idx)
        .collect();
    Trajectory { timestamps, positions, orientations, step_boundaries }
}

/// Offline (whole-recording) tracking with per-step drift compensation.
pub fn run_offline(samples: &[ImuSample], cfg: &TrackerConfig) -> Result<TrackOutput, TrackError> {
    validate_stream(samples, cfg)?;
    let mut filter = BandpassMagnitude::new(cfg);
    let filtered: Vec<f64> = samples.iter().map(|s| filter.step(&s.accel)).collect();
    let orientations = ahrs_orientations(samples, &filtered, cfg)?;
    let stances = detect_stance(&filtered, cfg);
    if stances.is_empty() {
        return Err(TrackError::NoStance { threshold: cfg.stance_threshold });
    }

    let mut segments = Vec::new();
    let mut base = Vector3::zeros();

    if stances[0].start > 0 {
        let seg = build_raw_segment(samples, &orientations, 0, stances[0].start, base, SwingKind::LeadingPartial, cfg)?;
        base = *seg.corrected_positions.last().unwrap();
        segments.push(seg);
    }
    for pair in stances.windows(2) {
        let guard = cfg.swing_guard().min(pair[0].end - pair[0].start);
        let raw = build_raw_segment(
            samples,
            &orientations,
            pair[0].end - guard,
            pair[1].start,
            base,
            SwingKind::Full,
            cfg,
        )?;
        let seg = zupt_correct(&raw);
        base = *seg.corrected_positions.last().unwrap();
        segments.push(seg);
    }
    let last = stances.last().unwrap();
    if last.end < samples.len() - 1 {
        let guard = cfg.swing_guard().min(last.end - last.start);
        let seg = build_raw_segment(
            samples,
            &orientations,
            last.end - guard,
            samples.len() - 1,
            base,
            SwingKind::TrailingPartial,
            cfg,
        )?;
        segments.push(seg);
    }

    let timestamps = samples.iter().map(|s| s.t).collect();
    let trajectory = assemble_trajectory(timestamps, orientations, &segments);
    Ok(TrackOutput { trajectory, segments })
}

/// Offline tracking with drift compensation disabled: the stream is double
/// integrated end to end with no stance resets. This is the "no gait
/// compensation" baseline; expect unbounded drift.
pub fn run_offline_uncompensated(samples: &[ImuSample], cfg: &TrackerConfig) -> Result<TrackOutput, TrackError> {
    validate_stream(samples, cfg)?;
    let mut filter = BandpassMagnitude::new(cfg);
    let filtered: Vec<f64> = samples.iter().map(|s| filter.step(&s.accel)).collect();
    let orientations = ahrs_orientations(samples, &filtered, cfg)?;
    let (_, positions) = integrate_segment(samples, &orientations, 0, samples.len() - 1, cfg)?;
    let timestamps = samples.iter().map(|s| s.t).collect();
    Ok(TrackOutput {
        trajectory: Trajectory { timestamps, positions, orientations, step_boundaries: Vec::new() },
        segments: Vec::new(),
    })
}
