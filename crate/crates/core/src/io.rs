//! File formats: IMU and pose CSV, trajectory JSON, point clouds, kernel
//! weights, obstacle lists, plan exports, and the costmap PGM.
//!
//! All files share one earth frame with z up; JSON documents declare it in a
//! `frame` header field. Floats are written with Rust's shortest round-trip
//! formatting, so write -> read is lossless and identical inputs produce
//! byte-identical files.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Quaternion, UnitQuaternion, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ahrs::ImuSample;
use crate::deadreckon::Trajectory;
use crate::fusion::PoseFix;
use crate::planner::{Costmap, NavPlan};
use crate::voxelmap::{ConvKernel, HeightClass, LabeledPoint, ObstacleBox};

/// Frame tag written into every JSON document.
pub const FRAME: &str = "earth-z-up";

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("{path}: {message}")]
    Malformed { path: String, message: String },
}

impl FormatError {
    fn parse(path: &Path, line: usize, message: impl Into<String>) -> Self {
        Self::Parse { path: path.display().to_string(), line, message: message.into() }
    }

    fn malformed(path: &Path, message: impl Into<String>) -> Self {
        Self::Malformed { path: path.display().to_string(), message: message.into() }
    }

    /// Line number for parse errors (used by the CLI's exit-code mapping).
    pub fn line(&self) -> Option<usize> {
        match self {
            Self::Parse { line, .. } => Some(*line),
            _ => None,
        }
    }
}

fn read_to_string(path: &Path) -> Result<String, FormatError> {
    std::fs::read_to_string(path).map_err(|source| FormatError::Io { path: path.display().to_string(), source })
}

fn parse_fields(path: &Path, line_no: usize, line: &str, expected: usize) -> Result<Vec<f64>, FormatError> {
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() != expected {
        return Err(FormatError::parse(
            path,
            line_no,
            format!("expected {expected} comma-separated fields, found {}", fields.len()),
        ));
    }
    fields
        .iter()
        .map(|f| {
            f.parse::<f64>()
                .map_err(|_| FormatError::parse(path, line_no, format!("not a number: \"{f}\"")))
        })
        .collect()
}

fn check_header(path: &Path, got: Option<&str>, expected: &str) -> Result<(), FormatError> {
    match got {
        Some(line) if line.trim() == expected => Ok(()),
        Some(line) => Err(FormatError::parse(path, 1, format!("expected header \"{expected}\", found \"{}\"", line.trim()))),
        None => Err(FormatError::parse(path, 1, "empty file")),
    }
}

// ---------------------------------------------------------------------------
// IMU CSV: t,ax,ay,az,gx,gy,gz

pub const IMU_CSV_HEADER: &str = "t,ax,ay,az,gx,gy,gz";

pub fn imu_csv_to_string(samples: &[ImuSample]) -> String {
    let mut out = String::with_capacity(32 * samples.len());
    out.push_str(IMU_CSV_HEADER);
    out.push('\n');
    for s in samples {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            s.t, s.accel.x, s.accel.y, s.accel.z, s.gyro.x, s.gyro.y, s.gyro.z
        );
    }
    out
}

pub fn read_imu_csv(path: &Path) -> Result<Vec<ImuSample>, FormatError> {
    let text = read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    check_header(path, lines.next().map(|(_, l)| l), IMU_CSV_HEADER)?;
    let mut samples = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let v = parse_fields(path, i + 1, line, 7)?;
        samples.push(ImuSample::new(v[0], Vector3::new(v[1], v[2], v[3]), Vector3::new(v[4], v[5], v[6])));
    }
    Ok(samples)
}

// ---------------------------------------------------------------------------
// Trajectory CSV: t,px,py,pz,qw,qx,qy,qz, plus a JSON document that also
// carries step boundaries.

pub const TRAJECTORY_CSV_HEADER: &str = "t,px,py,pz,qw,qx,qy,qz";

pub fn trajectory_csv_to_string(trajectory: &Trajectory) -> String {
    let mut out = String::with_capacity(48 * trajectory.len());
    out.push_str(TRAJECTORY_CSV_HEADER);
    out.push('\n');
    for i in 0..trajectory.len() {
        let p = trajectory.positions[i];
        let q = trajectory.orientations[i];
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            trajectory.timestamps[i], p.x, p.y, p.z, q.w, q.i, q.j, q.k
        );
    }
    out
}

pub fn read_trajectory_csv(path: &Path) -> Result<Trajectory, FormatError> {
    let text = read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    check_header(path, lines.next().map(|(_, l)| l), TRAJECTORY_CSV_HEADER)?;
    let mut trajectory = Trajectory {
        timestamps: Vec::new(),
        positions: Vec::new(),
        orientations: Vec::new(),
        step_boundaries: Vec::new(),
    };
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let v = parse_fields(path, i + 1, line, 8)?;
        trajectory.timestamps.push(v[0]);
        trajectory.positions.push(Vector3::new(v[1], v[2], v[3]));
        trajectory
            .orientations
            .push(UnitQuaternion::from_quaternion(Quaternion::new(v[4], v[5], v[6], v[7])));
    }
    Ok(trajectory)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryDoc {
    pub frame: String,
    pub timestamps: Vec<f64>,
    /// xyz per sample, meters.
    pub positions: Vec<[f64; 3]>,
    /// wxyz per sample.
    pub orientations: Vec<[f64; 4]>,
    pub step_boundaries: Vec<usize>,
}

impl TrajectoryDoc {
    pub fn from_trajectory(t: &Trajectory) -> Self {
        Self {
            frame: FRAME.to_string(),
            timestamps: t.timestamps.clone(),
            positions: t.positions.iter().map(|p| [p.x, p.y, p.z]).collect(),
            orientations: t.orientations.iter().map(|q| [q.w, q.i, q.j, q.k]).collect(),
            step_boundaries: t.step_boundaries.clone(),
        }
    }

    pub fn into_trajectory(self) -> Trajectory {
        Trajectory {
            timestamps: self.timestamps,
            positions: self.positions.iter().map(|p| Vector3::new(p[0], p[1], p[2])).collect(),
            orientations: self
                .orientations
                .iter()
                .map(|q| UnitQuaternion::from_quaternion(Quaternion::new(q[0], q[1], q[2], q[3])))
                .collect(),
            step_boundaries: self.step_boundaries,
        }
    }
}

pub fn trajectory_json_to_string(trajectory: &Trajectory) -> String {
    serde_json::to_string_pretty(&TrajectoryDoc::from_trajectory(trajectory)).expect("serializable") + "\n"
}

pub fn read_trajectory_json(path: &Path) -> Result<Trajectory, FormatError> {
    let text = read_to_string(path)?;
    let doc: TrajectoryDoc =
        serde_json::from_str(&text).map_err(|e| FormatError::malformed(path, e.to_string()))?;
    Ok(doc.into_trajectory())
}

// ---------------------------------------------------------------------------
// Pose fix CSV: t,px,py,pz,qw,qx,qy,qz,confidence

pub const FIXES_CSV_HEADER: &str = "t,px,py,pz,qw,qx,qy,qz,confidence";

pub fn fixes_csv_to_string(fixes: &[PoseFix]) -> String {
    let mut out = String::new();
    out.push_str(FIXES_CSV_HEADER);
    out.push('\n');
    for f in fixes {
        let q = f.orientation;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            f.t, f.position.x, f.position.y, f.position.z, q.w, q.i, q.j, q.k, f.confidence
        );
    }
    out
}

pub fn read_fixes_csv(path: &Path) -> Result<Vec<PoseFix>, FormatError> {
    let text = read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    check_header(path, lines.next().map(|(_, l)| l), FIXES_CSV_HEADER)?;
    let mut fixes = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let v = parse_fields(path, i + 1, line, 9)?;
        fixes.push(PoseFix {
            t: v[0],
            position: Vector3::new(v[1], v[2], v[3]),
            orientation: UnitQuaternion::from_quaternion(Quaternion::new(v[4], v[5], v[6], v[7])),
            confidence: v[8],
        });
    }
    Ok(fixes)
}

// ---------------------------------------------------------------------------
// Point clouds: ASCII `x y z [label]` per line, or binary little-endian
// f32 triples (extension `.bin`).

pub fn pointcloud_ascii_to_string(points: &[LabeledPoint]) -> String {
    let mut out = String::new();
    for p in points {
        match &p.label {
            Some(label) => {
                let _ = writeln!(out, "{} {} {} {}", p.position.x, p.position.y, p.position.z, label);
            }
            None => {
                let _ = writeln!(out, "{} {} {}", p.position.x, p.position.y, p.position.z);
            }
        }
    }
    out
}

pub fn read_pointcloud_ascii(path: &Path) -> Result<Vec<LabeledPoint>, FormatError> {
    let text = read_to_string(path)?;
    let mut points = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 && fields.len() != 4 {
            return Err(FormatError::parse(path, i + 1, format!("expected `x y z [label]`, found {} fields", fields.len())));
        }
        let mut xyz = [0.0; 3];
        for (slot, f) in xyz.iter_mut().zip(&fields) {
            *slot = f
                .parse::<f64>()
                .map_err(|_| FormatError::parse(path, i + 1, format!("not a number: \"{f}\"")))?;
        }
        points.push(LabeledPoint {
            position: Vector3::new(xyz[0], xyz[1], xyz[2]),
            label: fields.get(3).map(|s| s.to_string()),
        });
    }
    Ok(points)
}

pub fn pointcloud_binary_to_bytes(points: &[LabeledPoint]) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 * points.len());
    for p in points {
        for v in [p.position.x as f32, p.position.y as f32, p.position.z as f32] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn read_pointcloud_binary(path: &Path) -> Result<Vec<LabeledPoint>, FormatError> {
    let bytes = std::fs::read(path).map_err(|source| FormatError::Io { path: path.display().to_string(), source })?;
    if bytes.len() % 12 != 0 {
        return Err(FormatError::malformed(
            path,
            format!("binary cloud length {} is not a multiple of 12 (three little-endian f32 per point)", bytes.len()),
        ));
    }
    Ok(bytes
        .chunks_exact(12)
        .map(|c| {
            let x = f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64;
            let y = f32::from_le_bytes([c[4], c[5], c[6], c[7]]) as f64;
            let z = f32::from_le_bytes([c[8], c[9], c[10], c[11]]) as f64;
            LabeledPoint::bare(Vector3::new(x, y, z))
        })
        .collect())
}

/// Reads a point cloud, choosing the binary layout for `.bin` files.
pub fn read_pointcloud(path: &Path) -> Result<Vec<LabeledPoint>, FormatError> {
    if path.extension().and_then(|e| e.to_str()) == Some("bin") {
        read_pointcloud_binary(path)
    } else {
        read_pointcloud_ascii(path)
    }
}

// ---------------------------------------------------------------------------
// Convolution kernel weights.

pub fn read_kernel_json(path: &Path) -> Result<ConvKernel, FormatError> {
    let text = read_to_string(path)?;
    let kernel: ConvKernel =
        serde_json::from_str(&text).map_err(|e| FormatError::malformed(path, e.to_string()))?;
    kernel
        .validate()
        .map_err(|e| FormatError::malformed(path, e.to_string()))?;
    Ok(kernel)
}

pub fn kernel_json_to_string(kernel: &ConvKernel) -> String {
    serde_json::to_string_pretty(kernel).expect("serializable") + "\n"
}

// ---------------------------------------------------------------------------
// Obstacles JSON.

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleDoc {
    pub min: [f64; 3],
    pub max: [f64; 3],
    pub height_class: HeightClass,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub voxel_count: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstaclesDoc {
    pub frame: String,
    pub voxel_size: f64,
    pub boxes: Vec<ObstacleDoc>,
}

impl ObstaclesDoc {
    pub fn from_boxes(voxel_size: f64, boxes: &[ObstacleBox]) -> Self {
        Self {
            frame: FRAME.to_string(),
            voxel_size,
            boxes: boxes
                .iter()
                .map(|b| ObstacleDoc {
                    min: [b.min.x, b.min.y, b.min.z],
                    max: [b.max.x, b.max.y, b.max.z],
                    height_class: b.height_class,
                    label: b.label.clone(),
                    voxel_count: b.voxel_count,
                })
                .collect(),
        }
    }

    pub fn into_boxes(self) -> Vec<ObstacleBox> {
        self.boxes
            .into_iter()
            .map(|b| ObstacleBox {
                min: Vector3::new(b.min[0], b.min[1], b.min[2]),
                max: Vector3::new(b.max[0], b.max[1], b.max[2]),
                height_class: b.height_class,
                label: b.label,
                voxel_count: b.voxel_count,
            })
            .collect()
    }
}

pub fn obstacles_json_to_string(voxel_size: f64, boxes: &[ObstacleBox]) -> String {
    serde_json::to_string_pretty(&ObstaclesDoc::from_boxes(voxel_size, boxes)).expect("serializable") + "\n"
}

pub fn read_obstacles_json(path: &Path) -> Result<(f64, Vec<ObstacleBox>), FormatError> {
    let text = read_to_string(path)?;
    let doc: ObstaclesDoc =
        serde_json::from_str(&text).map_err(|e| FormatError::malformed(path, e.to_string()))?;
    Ok((doc.voxel_size, doc.into_boxes()))
}

// ---------------------------------------------------------------------------
// Navigation plan JSON.

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NearbyObstacleDoc {
    pub height_class: HeightClass,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    /// Signed lateral offset at closest approach, positive left, meters.
    pub lateral_offset: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanDoc {
    pub frame: String,
    pub waypoints: Vec<[f64; 2]>,
    pub total_length: f64,
    pub instructions: Vec<String>,
    pub nearby_obstacles: Vec<NearbyObstacleDoc>,
}

impl PlanDoc {
    pub fn from_plan(plan: &NavPlan) -> Self {
        Self {
            frame: FRAME.to_string(),
            waypoints: plan.waypoints.iter().map(|w| [w.x, w.y]).collect(),
            total_length: plan.total_length,
            instructions: plan.instructions.clone(),
            nearby_obstacles: plan
                .nearby_obstacles
                .iter()
                .map(|(b, off)| NearbyObstacleDoc {
                    height_class: b.height_class,
                    label: b.label.clone(),
                    lateral_offset: *off,
                })
                .collect(),
        }
    }
}

pub fn plan_json_to_string(plan: &NavPlan) -> String {
    serde_json::to_string_pretty(&PlanDoc::from_plan(plan)).expect("serializable") + "\n"
}

// ---------------------------------------------------------------------------
// Costmap PGM (binary P5): 0 free ... 255 blocked, rows top-down (max y
// first).

pub fn costmap_to_pgm(map: &Costmap) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", map.width(), map.height()).into_bytes();
    for y in (0..map.height()).rev() {
        for x in 0..map.width() {
            out.push(map.get(x, y));
        }
    }
    out
}

/// Scenario JSON loader (the schema is `simharness::Scenario`).
pub fn read_scenario_json(path: &Path) -> Result<crate::simharness::Scenario, FormatError> {
    let text = read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| FormatError::malformed(path, e.to_string()))
}

pub fn scenario_json_to_string(scenario: &crate::simharness::Scenario) -> String {
    serde_json::to_string_pretty(scenario).expect("serializable") + "\n"
}

/// Vector2 helper used by CLI goal parsing.
pub fn parse_xy(text: &str) -> Option<Vector2<f64>> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        return None;
    }
    match (parts[0].parse(), parts[1].parse()) {
        (Ok(x), Ok(y)) => Some(Vector2::new(x, y)),
        _ => None,
    }
}
