//! Streaming tracker that compensates each step immediately after the foot
//! comes to rest.
//!
//! The tracker mirrors [`run_offline`](super::run_offline) decision for
//! decision: same AHRS updates, same band-pass recurrence, same stance rule,
//! same guarded swing boundaries, same integration and ramp removal, so
//! pushing a recording sample by sample yields the identical trajectory. The
//! difference is purely when results become available: a
//! [`TrackerEvent::StepCompleted`] fires as soon as a quiet run reaches
//! `min_stance_duration`, i.e. one stance window after the foot stops.
//!
//! Buffering is bounded by one swing plus the stance confirmation window;
//! it does not grow with stream length.

use std::collections::VecDeque;

use nalgebra::{UnitQuaternion, Vector3};

use super::{
    build_raw_segment, initial_orientation, validate_stream, zupt_correct, BandpassMagnitude,
    StepSegment, SwingKind, TrackError, TrackOutput, TrackerConfig,
};
use crate::ahrs::{self, AhrsState, ImuSample};

/// Incremental tracker output.
#[derive(Debug, Clone, PartialEq)]
pub enum TrackerEvent {
    /// Best-effort pose for the sample just pushed. During a swing this is
    /// the raw (not yet compensated) integration; the later
    /// `StepCompleted` supersedes it.
    ProvisionalPose {
        index: usize,
        t: f64,
        position: Vector3<f64>,
        orientation: UnitQuaternion<f64>,
    },
    /// A stance was confirmed and the swing leading into it has been
    /// drift-compensated.
    StepCompleted(StepSegment),
    /// A swing at the stream edge that cannot be compensated (no stance on
    /// one side). Emitted, never dropped.
    PartialSwing(StepSegment),
}

/// Single-owner streaming state machine. Feed samples in time order with
/// [`push`](Self::push); call [`finish`](Self::finish) at end of stream to
/// flush a trailing partial swing.
#[derive(Debug, Clone)]
pub struct OnlineTracker {
    cfg: TrackerConfig,
    min_run: usize,
    init_len: usize,
    guard: usize,
    init_buf: Vec<ImuSample>,
    initialized: bool,
    ahrs: AhrsState,
    bandpass: BandpassMagnitude,
    next_index: usize,
    last_t: Option<f64>,
    // Stance/swing detection.
    run_start: Option<usize>,
    in_stance: bool,
    stance_seen: bool,
    stance_start: usize,
    last_stance_end: Option<usize>,
    // Guarded tail of the current stance (last guard+1 samples) so the next
    // swing can start inside the genuinely-still dwell.
    stance_tail: VecDeque<(ImuSample, UnitQuaternion<f64>)>,
    // Swing buffer (samples since the guarded stance end, or stream start).
    buf_start: usize,
    buf_samples: Vec<ImuSample>,
    buf_orientations: Vec<UnitQuaternion<f64>>,
    // Chained position at the last footfall and the raw in-swing integral.
    base: Vector3<f64>,
    prov_vel: Vector3<f64>,
    prov_off: Vector3<f64>,
    prov_prev_accel: Vector3<f64>,
}

impl OnlineTracker {
    pub fn new(cfg: TrackerConfig) -> Result<Self, TrackError> {
        cfg.validate()?;
        Ok(Self {
            min_run: cfg.min_stance_samples(),
            init_len: cfg.init_samples(),
            guard: cfg.swing_guard(),
            bandpass: BandpassMagnitude::new(&cfg),
            cfg,
            init_buf: Vec::new(),
            initialized: false,
            ahrs: AhrsState::default(),
            next_index: 0,
            last_t: None,
            run_start: None,
            in_stance: false,
            stance_seen: false,
            stance_start: 0,
            last_stance_end: None,
            stance_tail: VecDeque::new(),
            buf_start: 0,
            buf_samples: Vec::new(),
            buf_orientations: Vec::new(),
            base: Vector3::zeros(),
            prov_vel: Vector3::zeros(),
            prov_off: Vector3::zeros(),
            prov_prev_accel: Vector3::zeros(),
        })
    }

    /// Samples currently buffered (initialization window, stance tail, and
    /// the open swing). Bounded by gait, not by stream length.
    pub fn buffered_samples(&self) -> usize {
        self.init_buf.len() + self.stance_tail.len() + self.buf_samples.len()
    }

    /// Position at the last compensated footfall.
    pub fn base_position(&self) -> Vector3<f64> {
        self.base
    }

    /// Pushes the next sample. Emits one `ProvisionalPose` per sample (all
    /// buffered ones at once when the initial static window completes) plus
    /// any step events it triggers. Out-of-order, non-uniform or non-finite
    /// samples are rejected with the state unchanged.
    pub fn push(&mut self, sample: ImuSample) -> Result<Vec<TrackerEvent>, TrackError> {
        let index = self.next_index;
        if !sample.is_finite() {
            return Err(TrackError::NonFinite { index });
        }
        if let Some(prev_t) = self.last_t {
            let gap = sample.t - prev_t;
            if gap <= 0.0 {
                return Err(TrackError::NonMonotonic { index, t: sample.t, prev: prev_t });
            }
            let expected = self.cfg.dt();
            if (gap - expected).abs() > 0.01 * expected {
                return Err(TrackError::NonUniformRate { index, gap, expected });
            }
        }
        self.last_t = Some(sample.t);
        self.next_index += 1;

        if !self.initialized {
            self.init_buf.push(sample);
            if self.init_buf.len() < self.init_len {
                return Ok(Vec::new());
            }
            return self.initialize();
        }

        let mut events = Vec::new();
        self.process_sample(index, sample, &mut events)?;
        Ok(events)
    }

    /// End of stream: flushes a trailing partial swing (or errors if no
    /// stance was ever confirmed, matching the offline driver).
    pub fn finish(mut self) -> Result<Vec<TrackerEvent>, TrackError> {
        let mut events = Vec::new();
        if !self.initialized {
            if self.init_buf.len() < 2 {
                return Err(TrackError::TooShort { min: 2, got: self.init_buf.len() });
            }
            events = self.initialize()?;
        }
        // An open quiet run shorter than the stance window is not stance;
        // the samples already sit in the swing buffer.
        if !self.stance_seen {
            return Err(TrackError::NoStance { threshold: self.cfg.stance_threshold });
        }
        if !self.in_stance && !self.buf_samples.is_empty() {
            if let Some(end) = self.last_stance_end {
                let last = self.buf_start + self.buf_samples.len() - 1;
                if last > end {
                    let seg = self.take_segment(self.buf_start, last, SwingKind::TrailingPartial)?;
                    events.push(TrackerEvent::PartialSwing(seg));
                }
            }
        }
        Ok(events)
    }

    /// Runs the static 0.5 s orientation estimate, then replays the buffered
    /// samples through the normal path, exactly what the offline driver
    /// computes for the same prefix.
    fn initialize(&mut self) -> Result<Vec<TrackerEvent>, TrackError> {
        let q0 = initial_orientation(&self.init_buf, &self.cfg);
        self.ahrs = AhrsState::mahony(q0, AhrsState::DEFAULT_KP, AhrsState::DEFAULT_KI)?;
        self.initialized = true;
        let buffered = std::mem::take(&mut self.init_buf);
        let mut events = Vec::new();
        for (i, sample) in buffered.into_iter().enumerate() {
            self.process_sample(i, sample, &mut events)?;
        }
        Ok(events)
    }

    fn process_sample(
        &mut self,
        index: usize,
        sample: ImuSample,
        events: &mut Vec<TrackerEvent>,
    ) -> Result<(), TrackError> {
        let filtered = self.bandpass.step(&sample.accel);
        let below = filtered < self.cfg.stance_threshold;
        // Orientation: sample 0 carries the static estimate itself; tilt
        // correction only when gravity-locked, same gate as the batch driver.
        if index > 0 {
            if super::gravity_locked(&sample, filtered, &self.cfg) {
                self.ahrs = ahrs::mahony_update(&self.ahrs, &sample, self.cfg.dt())?;
            } else {
                self.ahrs.q = ahrs::quat_integrate_gyro(&self.ahrs.q, &sample.gyro, self.cfg.dt())?;
            }
        }
        let q = self.ahrs.q;

        if self.in_stance {
            if below {
                // Stance continues; foot pinned at base.
                self.stance_tail.push_back((sample, q));
                if self.stance_tail.len() > self.guard + 1 {
                    self.stance_tail.pop_front();
                }
                events.push(provisional(index, sample.t, self.base, q));
                return Ok(());
            }
            // Stance ended at the previous sample; the new swing starts a
            // guard margin earlier, inside the dwell.
            let stance_end = index - 1;
            let guard_eff = self.guard.min(stance_end - self.stance_start);
            let earliest = stance_end - guard_eff;
            self.in_stance = false;
            self.last_stance_end = Some(stance_end);
            let tail_first = stance_end + 1 - self.stance_tail.len();
            self.buf_start = earliest;
            self.buf_samples.clear();
            self.buf_orientations.clear();
            for (s, o) in self.stance_tail.iter().skip(earliest - tail_first) {
                self.buf_samples.push(*s);
                self.buf_orientations.push(*o);
            }
            self.buf_samples.push(sample);
            self.buf_orientations.push(q);
            self.stance_tail.clear();
            self.run_start = None;
            self.restart_provisional();
            events.push(provisional(index, sample.t, self.base + self.prov_off, q));
            return Ok(());
        }

        // In swing (or before the first stance).
        self.buf_samples.push(sample);
        self.buf_orientations.push(q);
        if self.buf_samples.len() == 1 {
            self.prov_prev_accel = ahrs::earth_accel(&q, &sample.accel, self.cfg.g);
        } else {
            self.advance_provisional(&sample, &q);
        }

        if below {
            let run_start = *self.run_start.get_or_insert(index);
            if index - run_start + 1 == self.min_run {
                // Stance confirmed: the swing that led into it is complete.
                if let Some(end) = self.last_stance_end {
                    if run_start > end {
                        let raw = self.take_segment(self.buf_start, run_start, SwingKind::Full)?;
                        let seg = zupt_correct(&raw);
                        self.base = *seg.corrected_positions.last().unwrap();
                        events.push(TrackerEvent::StepCompleted(seg));
                    }
                } else if run_start > 0 {
                    // Stream began mid-swing: emit it uncompensated.
                    let seg = self.take_segment(self.buf_start, run_start, SwingKind::LeadingPartial)?;
                    self.base = *seg.corrected_positions.last().unwrap();
                    events.push(TrackerEvent::PartialSwing(seg));
                }
                self.stance_seen = true;
                self.in_stance = true;
                self.stance_start = run_start;
                self.run_start = None;
                // Seed the stance tail from the buffer (its last entries are
                // the just-confirmed quiet run, ending at this sample).
                let keep = (self.guard + 1).min(self.buf_samples.len());
                let skip = self.buf_samples.len() - keep;
                self.stance_tail = self.buf_samples[skip..]
                    .iter()
                    .copied()
                    .zip(self.buf_orientations[skip..].iter().copied())
                    .collect();
                self.buf_samples.clear();
                self.buf_orientations.clear();
                events.push(provisional(index, sample.t, self.base, q));
                return Ok(());
            }
        } else {
            self.run_start = None;
        }

        events.push(provisional(index, sample.t, self.base + self.prov_off, q));
        Ok(())
    }

    /// Re-integrates the raw in-swing velocity over the (short) seeded
    /// buffer so provisional poses stay continuous across the stance.
    fn restart_provisional(&mut self) {
        self.prov_vel = Vector3::zeros();
        self.prov_off = Vector3::zeros();
        self.prov_prev_accel =
            ahrs::earth_accel(&self.buf_orientations[0], &self.buf_samples[0].accel, self.cfg.g);
        let samples: Vec<ImuSample> = self.buf_samples[1..].to_vec();
        let orientations: Vec<UnitQuaternion<f64>> = self.buf_orientations[1..].to_vec();
        for (s, o) in samples.iter().zip(&orientations) {
            self.advance_provisional(s, o);
        }
    }

    fn advance_provisional(&mut self, sample: &ImuSample, q: &UnitQuaternion<f64>) {
        let dt = self.cfg.dt();
        let accel = ahrs::earth_accel(q, &sample.accel, self.cfg.g);
        let v = self.prov_vel + (self.prov_prev_accel + accel) * (0.5 * dt);
        self.prov_off += (self.prov_vel + v) * (0.5 * dt);
        self.prov_vel = v;
        self.prov_prev_accel = accel;
    }

    /// Builds a segment for global sample range `start..=end` out of the
    /// swing buffer.
    fn take_segment(&self, start: usize, end: usize, kind: SwingKind) -> Result<StepSegment, TrackError> {
        let local_start = start - self.buf_start;
        let local_end = end - self.buf_start;
        let mut seg = build_raw_segment(
            &self.buf_samples,
            &self.buf_orientations,
            local_start,
            local_end,
            self.base,
            kind,
            &self.cfg,
        )?;
        seg.start_idx = start;
        seg.end_idx = end;
        Ok(seg)
    }
}

fn provisional(
    index: usize,
    t: f64,
    position: Vector3<f64>,
    orientation: UnitQuaternion<f64>,
) -> TrackerEvent {
    TrackerEvent::ProvisionalPose { index, t, position, orientation }
}

/// Runs the streaming tracker over a whole recording and assembles the same
/// output shape as [`run_offline`](super::run_offline). The two must agree
/// exactly; the acceptance suite holds them to 1e-9 per coordinate.
pub fn online_trajectory(samples: &[ImuSample], cfg: &TrackerConfig) -> Result<TrackOutput, TrackError> {
    validate_stream(samples, cfg)?;
    let mut tracker = OnlineTracker::new(*cfg)?;
    let mut segments: Vec<StepSegment> = Vec::new();
    let mut timestamps = Vec::with_capacity(samples.len());
    let mut orientations = Vec::with_capacity(samples.len());
    let collect = |events: Vec<TrackerEvent>,
                   segments: &mut Vec<StepSegment>,
                   timestamps: &mut Vec<f64>,
                   orientations: &mut Vec<UnitQuaternion<f64>>| {
        for ev in events {
            match ev {
                TrackerEvent::ProvisionalPose { t, orientation, .. } => {
                    timestamps.push(t);
                    orientations.push(orientation);
                }
                TrackerEvent::StepCompleted(seg) | TrackerEvent::PartialSwing(seg) => segments.push(seg),
            }
        }
    };
    for sample in samples {
        let events = tracker.push(*sample)?;
        collect(events, &mut segments, &mut timestamps, &mut orientations);
    }
    let events = tracker.finish()?;
    collect(events, &mut segments, &mut timestamps, &mut orientations);
    let trajectory = super::assemble_trajectory(timestamps, orientations, &segments);
    Ok(TrackOutput { trajectory, segments })
}

/// Convenience check that the streaming and batch drivers agree; used by
/// tests and kept here so the orientation replay stays in sync with
/// [`ahrs_orientations`].
#[cfg(test)]
pub(crate) fn orientations_for_test(
    samples: &[ImuSample],
    cfg: &TrackerConfig,
) -> Result<Vec<UnitQuaternion<f64>>, TrackError> {
    let mut filter = BandpassMagnitude::new(cfg);
    let filtered: Vec<f64> = samples.iter().map(|s| filter.step(&s.accel)).collect();
    super::ahrs_orientations(samples, &filtered, cfg)
}
