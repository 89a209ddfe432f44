//! The four pipeline commands. Each computes its outputs fully, stages them
//! through [`OutputSet`], and prints a fixed-format summary so identical
//! invocations produce identical bytes everywhere.

use std::path::{Path, PathBuf};

use nalgebra::{UnitQuaternion, Vector2, Vector3};

use gaitnav_core::deadreckon::{
    online_trajectory, run_offline, run_offline_uncompensated, OnlineTracker, SwingKind,
    TrackError, TrackOutput, TrackerEvent, Trajectory,
};
use gaitnav_core::fusion::{apply_fix, apply_motion, FusionState, PoseFix};
use gaitnav_core::io;
use gaitnav_core::planner::{
    costmap_from_obstacles, find_object, generate_instructions, nearby_obstacles, plan_path,
    project_occupancy, Costmap, NavPlan, PlanError,
};
use gaitnav_core::simharness::{evaluate, gen_trajectory, synth_imu, NoiseModel};
use gaitnav_core::voxelmap::{
    classify_height, connected_components_labeled, voxelize_labeled, Connectivity, HeightClass,
    ObstacleBox,
};

use crate::config::AppConfig;
use crate::output::{with_suffix, OutputSet};
use crate::{CliError, ExitKind};

fn bad_input(message: impl std::fmt::Display) -> CliError {
    CliError { kind: ExitKind::BadInput, message: message.to_string() }
}

fn other(message: impl std::fmt::Display) -> CliError {
    CliError { kind: ExitKind::Other, message: message.to_string() }
}

fn track_error(e: TrackError) -> CliError {
    match e {
        TrackError::NoStance { .. } => CliError { kind: ExitKind::NoSteps, message: e.to_string() },
        TrackError::TooShort { .. }
        | TrackError::NonMonotonic { .. }
        | TrackError::NonUniformRate { .. }
        | TrackError::NonFinite { .. } => bad_input(e),
        _ => other(e),
    }
}

fn plan_error(e: PlanError) -> CliError {
    match e {
        PlanError::NoPath => CliError { kind: ExitKind::Unreachable, message: e.to_string() },
        PlanError::NotFound { .. } => CliError { kind: ExitKind::UnknownLabel, message: e.to_string() },
        PlanError::OutOfBounds { .. } | PlanError::BlockedEndpoint { .. } => {
            CliError { kind: ExitKind::Unreachable, message: e.to_string() }
        }
        _ => bad_input(e),
    }
}

fn format_error(e: io::FormatError) -> CliError {
    bad_input(e)
}

// ---------------------------------------------------------------------------
// track

pub struct TrackArgs {
    pub input: PathBuf,
    pub online: bool,
    pub no_zupt: bool,
    pub compare: Option<PathBuf>,
    pub out: PathBuf,
}

pub fn cmd_track(args: &TrackArgs, config: &AppConfig) -> Result<(), CliError> {
    let samples = io::read_imu_csv(&args.input).map_err(format_error)?;
    let cfg = config.tracker();
    let mode = if args.no_zupt {
        "no-zupt"
    } else if args.online {
        "online"
    } else {
        "offline"
    };
    let output: TrackOutput = if args.no_zupt {
        run_offline_uncompensated(&samples, &cfg).map_err(track_error)?
    } else if args.online {
        online_trajectory(&samples, &cfg).map_err(track_error)?
    } else {
        run_offline(&samples, &cfg).map_err(track_error)?
    };

    let trajectory = &output.trajectory;
    let mut outputs = OutputSet::new();
    let csv_path = with_suffix(&args.out, ".csv");
    let json_path = with_suffix(&args.out, ".json");
    outputs.add(&csv_path, io::trajectory_csv_to_string(trajectory));
    outputs.add(&json_path, io::trajectory_json_to_string(trajectory));

    println!("mode: {mode}");
    println!("samples: {}", trajectory.len());
    println!("steps: {}", output.step_count());
    let partials = output.segments.iter().filter(|s| s.kind != SwingKind::Full).count();
    if partials > 0 {
        println!("partial swings (uncompensated): {partials}");
    }
    println!("path length: {:.3} m", trajectory.path_length());
    let end = trajectory.positions.last().copied().unwrap_or_default();
    println!("endpoint: ({:.3}, {:.3}, {:.3}) m", end.x, end.y, end.z);

    if let Some(reference) = &args.compare {
        let truth = read_trajectory_any(reference)?;
        let metrics = evaluate(trajectory, &truth).map_err(|e| bad_input(e))?;
        println!("rmse: {:.4} m", metrics.rmse);
        println!("endpoint error: {:.4} m", metrics.endpoint_error);
        println!("path length ratio: {:.4}", metrics.path_length_ratio);
    }

    for path in outputs.commit().map_err(other)? {
        println!("wrote: {}", path.display());
    }
    Ok(())
}

fn read_trajectory_any(path: &Path) -> Result<Trajectory, CliError> {
    if path.extension().and_then(|e| e.to_str()) == Some("json") {
        io::read_trajectory_json(path).map_err(format_error)
    } else {
        io::read_trajectory_csv(path).map_err(format_error)
    }
}

// ---------------------------------------------------------------------------
// simulate

pub struct SimulateArgs {
    pub scenario: PathBuf,
    pub rate: f64,
    pub seed: u64,
    pub noise_accel: f64,
    pub noise_gyro: f64,
    pub accel_bias: [f64; 3],
    pub gyro_bias: [f64; 3],
    pub out: PathBuf,
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let scenario = io::read_scenario_json(&args.scenario).map_err(format_error)?;
    let truth = gen_trajectory(&scenario, args.rate).map_err(|e| bad_input(e))?;
    let noise = NoiseModel {
        accel_sigma: args.noise_accel,
        gyro_sigma: args.noise_gyro,
        accel_bias: args.accel_bias,
        gyro_bias: args.gyro_bias,
        seed: args.seed,
    };
    let samples = synth_imu(&truth, &noise, args.rate).map_err(|e| bad_input(e))?;

    let mut outputs = OutputSet::new();
    outputs.add(with_suffix(&args.out, "_imu.csv"), io::imu_csv_to_string(&samples));
    outputs.add(with_suffix(&args.out, "_truth.csv"), io::trajectory_csv_to_string(&truth));
    outputs.add(with_suffix(&args.out, "_truth.json"), io::trajectory_json_to_string(&truth));

    println!("seed: {}", args.seed);
    println!("rate: {:.1} Hz", args.rate);
    println!("samples: {}", samples.len());
    println!("steps: {}", truth.step_boundaries.len());
    println!("duration: {:.2} s", truth.timestamps.last().copied().unwrap_or_default());
    println!("path length: {:.3} m", truth.path_length());
    for path in outputs.commit().map_err(other)? {
        println!("wrote: {}", path.display());
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// map

pub struct MapArgs {
    pub cloud: PathBuf,
    pub connectivity: Connectivity,
    pub out: PathBuf,
}

pub fn cmd_map(args: &MapArgs, config: &AppConfig) -> Result<(), CliError> {
    let points = io::read_pointcloud(&args.cloud).map_err(format_error)?;
    let (grid, labels) = voxelize_labeled(&points, config.voxel_size, Vector3::zeros())
        .map_err(|e| bad_input(e))?;
    let thresholds = config.thresholds();
    let mut boxes = connected_components_labeled(&grid, args.connectivity, &labels);
    for b in &mut boxes {
        b.height_class = classify_height(b, &thresholds);
    }
    let costmap = project_occupancy(&grid, &config.agent()).map_err(plan_error)?;

    let mut outputs = OutputSet::new();
    outputs.add(with_suffix(&args.out, "_obstacles.json"), io::obstacles_json_to_string(config.voxel_size, &boxes));
    outputs.add(with_suffix(&args.out, "_costmap.pgm"), io::costmap_to_pgm(&costmap));

    println!("points: {}", points.len());
    println!("occupied voxels: {}", grid.len());
    println!("obstacles: {}", boxes.len());
    for class in [HeightClass::Ground, HeightClass::Body, HeightClass::Head] {
        let n = boxes.iter().filter(|b| b.height_class == class).count();
        println!("  {class}: {n}");
    }
    println!("costmap: {}x{} cells at {:.3} m", costmap.width(), costmap.height(), costmap.cell_size());
    for path in outputs.commit().map_err(other)? {
        println!("wrote: {}", path.display());
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// navigate

pub struct NavigateArgs {
    pub obstacles: PathBuf,
    pub imu: PathBuf,
    pub fixes: Option<PathBuf>,
    pub goal: Option<Vector2<f64>>,
    pub find: Option<String>,
    pub start: Vector2<f64>,
    pub out: PathBuf,
}

pub fn cmd_navigate(args: &NavigateArgs, config: &AppConfig) -> Result<(), CliError> {
    let (voxel_size, boxes) = io::read_obstacles_json(&args.obstacles).map_err(format_error)?;
    let samples = io::read_imu_csv(&args.imu).map_err(format_error)?;
    let fixes: Vec<PoseFix> = match &args.fixes {
        Some(path) => {
            let mut f = io::read_fixes_csv(path).map_err(format_error)?;
            f.sort_by(|a, b| a.t.partial_cmp(&b.t).expect("finite fix times"));
            f
        }
        None => Vec::new(),
    };

    let (goal, target_label) = match (&args.goal, &args.find) {
        (Some(goal), _) => (*goal, None),
        (None, Some(label)) => {
            let target = find_object(&boxes, label, &args.start).map_err(plan_error)?;
            (target.center().xy(), Some(label.clone()))
        }
        (None, None) => return Err(bad_input("one of --goal or --find is required")),
    };

    let map = build_costmap(&boxes, config, voxel_size, &args.start, &goal)?;
    // A labeled target sits inside its own obstacle; walk to the nearest
    // reachable spot beside it instead.
    let goal = if target_label.is_some() {
        nearest_free_point(&map, &goal)
    } else {
        goal
    };
    let mut plan = plan_path(&map, args.start, goal).map_err(plan_error)?;
    let heading = 0.0;
    plan.instructions = generate_instructions(&plan, heading, &boxes);
    plan.nearby_obstacles = nearby_obstacles(&plan, &boxes);

    let mut transcript = Transcript::new();
    let t0 = samples.first().map(|s| s.t).unwrap_or(0.0);
    transcript.plan(t0, &plan);

    // Stream the IMU through the online tracker and fold the motion into
    // the fused pose; absolute fixes blend in as their timestamps pass.
    let cfg = config.tracker();
    let mut tracker = OnlineTracker::new(cfg).map_err(track_error)?;
    let mut fusion = FusionState::with_pose(
        config.fusion_alpha,
        Vector3::new(args.start.x, args.start.y, 0.0),
        UnitQuaternion::identity(),
    )
    .map_err(|e| bad_input(e))?;
    let mut fix_cursor = 0usize;
    let mut prev_dr: Option<(Vector3<f64>, UnitQuaternion<f64>)> = None;
    let mut fused = Trajectory {
        timestamps: Vec::with_capacity(samples.len()),
        positions: Vec::with_capacity(samples.len()),
        orientations: Vec::with_capacity(samples.len()),
        step_boundaries: Vec::new(),
    };
    let mut arrived = false;
    let arrival_radius = 1.5 * map.cell_size();

    let mut handle_events = |events: Vec<TrackerEvent>,
                             fusion: &mut FusionState,
                             fused: &mut Trajectory,
                             plan: &mut NavPlan,
                             transcript: &mut Transcript,
                             arrived: &mut bool|
     -> Result<(), CliError> {
        for event in events {
            match event {
                TrackerEvent::ProvisionalPose { t, position, orientation, .. } => {
                    if let Some((pp, pq)) = prev_dr {
                        let delta_q = pq.inverse() * orientation;
                        let delta_p = pq.inverse_transform_vector(&(position - pp));
                        *fusion = apply_motion(fusion, &delta_p, &delta_q);
                    }
                    prev_dr = Some((position, orientation));
                    while fix_cursor < fixes.len() && fixes[fix_cursor].t <= t {
                        *fusion = apply_fix(fusion, &fixes[fix_cursor]).map_err(|e| bad_input(e))?;
                        fix_cursor += 1;
                    }
                    fused.timestamps.push(t);
                    fused.positions.push(fusion.position);
                    fused.orientations.push(fusion.orientation);

                    if !*arrived && (fusion.position.xy() - goal).norm() <= arrival_radius {
                        *arrived = true;
                        transcript.line(t, "arrived at destination");
                    }
                }
                TrackerEvent::StepCompleted(seg) => {
                    fused.step_boundaries.push(seg.end_idx);
                    if *arrived {
                        continue;
                    }
                    // Replan only when the fused pose strays more than one
                    // cell from the planned corridor.
                    let here = fusion.position.xy();
                    if distance_to_polyline(&plan.waypoints, &here) > map.cell_size() {
                        let t = fused.timestamps.last().copied().unwrap_or(t0);
                        match plan_path(&map, here, goal) {
                            Ok(mut new_plan) => {
                                let fused_heading = yaw_of(&fusion.orientation);
                                new_plan.instructions = generate_instructions(&new_plan, fused_heading, &boxes);
                                new_plan.nearby_obstacles = nearby_obstacles(&new_plan, &boxes);
                                transcript.line(t, "off route, replanning");
                                transcript.plan(t, &new_plan);
                                *plan = new_plan;
                            }
                            // The pose estimate can drift somewhere that is
                            // itself unplannable; keep guiding on the last
                            // good plan rather than aborting mid-walk.
                            Err(PlanError::NoPath)
                            | Err(PlanError::OutOfBounds { .. })
                            | Err(PlanError::BlockedEndpoint { .. }) => {
                                transcript.line(t, "off route but replanning failed; keeping previous plan");
                            }
                            Err(e) => return Err(plan_error(e)),
                        }
                    }
                }
                TrackerEvent::PartialSwing(_) => {}
            }
        }
        Ok(())
    };

    for sample in &samples {
        let events = tracker.push(*sample).map_err(track_error)?;
        handle_events(events, &mut fusion, &mut fused, &mut plan, &mut transcript, &mut arrived)?;
    }
    let events = tracker.finish().map_err(track_error)?;
    handle_events(events, &mut fusion, &mut fused, &mut plan, &mut transcript, &mut arrived)?;

    if !arrived {
        let t = fused.timestamps.last().copied().unwrap_or(t0);
        transcript.line(
            t,
            &format!(
                "stream ended {:.2} m from the goal",
                (fusion.position.xy() - goal).norm()
            ),
        );
    }

    let mut outputs = OutputSet::new();
    outputs.add(with_suffix(&args.out, "_plan.json"), io::plan_json_to_string(&plan));
    outputs.add(with_suffix(&args.out, "_transcript.txt"), transcript.text.clone());
    outputs.add(with_suffix(&args.out, "_fused.csv"), io::trajectory_csv_to_string(&fused));

    println!("obstacles: {}", boxes.len());
    println!("goal: ({:.3}, {:.3})", goal.x, goal.y);
    println!("plan length: {:.3} m", plan.total_length);
    println!("instructions: {}", plan.instructions.len());
    println!("steps walked: {}", fused.step_boundaries.len());
    println!("arrived: {arrived}");
    let end = fusion.position;
    println!("fused endpoint: ({:.3}, {:.3}, {:.3}) m", end.x, end.y, end.z);
    for path in outputs.commit().map_err(other)? {
        println!("wrote: {}", path.display());
    }
    Ok(())
}

fn build_costmap(
    boxes: &[ObstacleBox],
    config: &AppConfig,
    voxel_size: f64,
    start: &Vector2<f64>,
    goal: &Vector2<f64>,
) -> Result<Costmap, CliError> {
    let margin = 1.0;
    let mut min = Vector2::new(start.x.min(goal.x), start.y.min(goal.y));
    let mut max = Vector2::new(start.x.max(goal.x), start.y.max(goal.y));
    for b in boxes {
        min.x = min.x.min(b.min.x);
        min.y = min.y.min(b.min.y);
        max.x = max.x.max(b.max.x);
        max.y = max.y.max(b.max.y);
    }
    costmap_from_obstacles(
        boxes,
        &config.agent(),
        voxel_size,
        min - Vector2::repeat(margin),
        max + Vector2::repeat(margin),
    )
    .map_err(plan_error)
}

/// Nearest non-blocked cell center to a point (the point itself when its
/// cell is free). Ties break on lexicographic cell order.
fn nearest_free_point(map: &Costmap, target: &Vector2<f64>) -> Vector2<f64> {
    if let Some((x, y)) = map.cell_of(target) {
        if !map.is_blocked(x, y) {
            return *target;
        }
    }
    let mut best: Option<((usize, usize), f64)> = None;
    for y in 0..map.height() {
        for x in 0..map.width() {
            if map.is_blocked(x, y) {
                continue;
            }
            let d = (map.center(x, y) - target).norm();
            if best.map_or(true, |(_, bd)| d < bd) {
                best = Some(((x, y), d));
            }
        }
    }
    best.map(|((x, y), _)| map.center(x, y)).unwrap_or(*target)
}

fn distance_to_polyline(waypoints: &[Vector2<f64>], p: &Vector2<f64>) -> f64 {
    let mut best = f64::INFINITY;
    if waypoints.len() == 1 {
        return (waypoints[0] - p).norm();
    }
    for w in waypoints.windows(2) {
        let d = w[1] - w[0];
        let len2 = d.norm_squared();
        let t = if len2 > 0.0 { ((p - w[0]).dot(&d) / len2).clamp(0.0, 1.0) } else { 0.0 };
        best = best.min((w[0] + d * t - p).norm());
    }
    best
}

fn yaw_of(q: &UnitQuaternion<f64>) -> f64 {
    let fwd = q.transform_vector(&Vector3::x());
    fwd.y.atan2(fwd.x)
}

struct Transcript {
    text: String,
}

impl Transcript {
    fn new() -> Self {
        Self { text: String::new() }
    }

    fn line(&mut self, t: f64, message: &str) {
        self.text.push_str(&format!("[{t:.2}s] {message}\n"));
    }

    fn plan(&mut self, t: f64, plan: &NavPlan) {
        self.line(t, &format!("plan: {} waypoints, {:.1} m", plan.waypoints.len(), plan.total_length));
        let instructions = plan.instructions.clone();
        for instruction in instructions {
            self.line(t, &instruction);
        }
    }
}
