//! Height-aware textual navigation instructions.
//!
//! One instruction per simplified leg: an optional turn (left/right, rounded
//! to 15 degree steps) followed by a walk distance at 0.1 m precision. Any
//! obstacle whose box comes within 1 m lateral of a leg appends a warning
//! naming the side and height class. Turns are computed against the heading
//! a perfect executor would actually have (the cumulative rounded turns), so
//! rounding error re-aims at each leg instead of accumulating.

use nalgebra::Vector2;

use super::NavPlan;
use crate::voxelmap::ObstacleBox;

/// Lateral range within which an obstacle earns a warning, meters.
pub const WARN_LATERAL_RANGE: f64 = 1.0;
/// Turn quantization, degrees.
pub const TURN_STEP_DEG: f64 = 15.0;

fn wrap_angle(a: f64) -> f64 {
    let mut a = a % std::f64::consts::TAU;
    if a > std::f64::consts::PI {
        a -= std::f64::consts::TAU;
    } else if a <= -std::f64::consts::PI {
        a += std::f64::consts::TAU;
    }
    a
}

/// Signed perpendicular offset (positive left of travel) of the closest
/// approach between an obstacle's xy rectangle and a leg segment, if within
/// `WARN_LATERAL_RANGE`.
fn lateral_offset(leg_start: &Vector2<f64>, leg_end: &Vector2<f64>, b: &ObstacleBox) -> Option<f64> {
    let dir = leg_end - leg_start;
    let len = dir.norm();
    if len < 1e-12 {
        return None;
    }
    let dir = dir / len;
    // Distance from the segment to the rectangle: sample the rectangle by
    // clamping the obstacle-nearest point per segment sample. Closed form
    // rectangle-segment distance via corner/axis cases is fussy; a fine
    // parameter sweep is exact to the sampling step and the warning range is
    // coarse (1 m).
    let steps = (len / 0.05).ceil().max(1.0) as usize;
    let mut best: Option<(f64, f64)> = None; // (distance, signed lateral)
    for i in 0..=steps {
        let p = leg_start + dir * (len * i as f64 / steps as f64);
        let clamped = Vector2::new(p.x.clamp(b.min.x, b.max.x), p.y.clamp(b.min.y, b.max.y));
        let d = (clamped - p).norm();
        if best.map_or(true, |(bd, _)| d < bd) {
            let center_side = b.center().xy() - p;
            let side = dir.x * center_side.y - dir.y * center_side.x;
            best = Some((d, side.signum() * d.max(0.0)));
        }
    }
    match best {
        Some((d, signed)) if d <= WARN_LATERAL_RANGE => Some(signed),
        _ => None,
    }
}

/// Text for one leg's obstacle warnings, nearest first. Multiple boxes with
/// the same class and side collapse into one warning.
fn leg_warnings(leg_start: &Vector2<f64>, leg_end: &Vector2<f64>, obstacles: &[ObstacleBox]) -> Vec<String> {
    let mut hits: Vec<(f64, String)> = obstacles
        .iter()
        .filter_map(|b| {
            lateral_offset(leg_start, leg_end, b).map(|off| {
                let side = if off >= 0.0 { "left" } else { "right" };
                (off.abs(), format!("obstacle at {} level on your {}", b.height_class, side))
            })
        })
        .collect();
    hits.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then_with(|| a.1.cmp(&b.1)));
    let mut out: Vec<String> = Vec::new();
    for (_, text) in hits {
        if !out.contains(&text) {
            out.push(text);
        }
    }
    out
}

/// Generates one spoken-style instruction per simplified leg.
pub fn generate_instructions(plan: &NavPlan, heading: f64, obstacles: &[ObstacleBox]) -> Vec<String> {
    let mut out = Vec::new();
    let mut executor_heading = heading;
    for w in plan.waypoints.windows(2) {
        let delta = w[1] - w[0];
        let length = delta.norm();
        if length < 1e-9 {
            continue;
        }
        let leg_angle = delta.y.atan2(delta.x);
        let turn = wrap_angle(leg_angle - executor_heading).to_degrees();
        let quantized = (turn / TURN_STEP_DEG).round() * TURN_STEP_DEG;
        if quantized != 0.0 {
            let dir = if quantized > 0.0 { "left" } else { "right" };
            out.push(format!("turn {} {} degrees", dir, quantized.abs() as i64));
            executor_heading = wrap_angle(executor_heading + quantized.to_radians());
        }
        let rounded = (length * 10.0).round() / 10.0;
        if rounded == 0.0 {
            continue; // below speakable resolution
        }
        let mut walk = format!("walk forward {rounded:.1} meters");
        for warning in leg_warnings(&w[0], &w[1], obstacles) {
            walk.push_str(", ");
            walk.push_str(&warning);
        }
        out.push(walk);
    }
    out
}

/// Obstacles within warning range of any leg, with their signed lateral
/// offset at closest approach (positive left), nearest first.
pub fn nearby_obstacles(plan: &NavPlan, obstacles: &[ObstacleBox]) -> Vec<(ObstacleBox, f64)> {
    let mut out: Vec<(ObstacleBox, f64)> = Vec::new();
    for b in obstacles {
        let mut best: Option<f64> = None;
        for w in plan.waypoints.windows(2) {
            if let Some(off) = lateral_offset(&w[0], &w[1], b) {
                if best.map_or(true, |cur: f64| off.abs() < cur.abs()) {
                    best = Some(off);
                }
            }
        }
        if let Some(off) = best {
            out.push((b.clone(), off));
        }
    }
    out.sort_by(|a, b| {
        a.1.abs()
            .partial_cmp(&b.1.abs())
            .unwrap()
            .then_with(|| (a.0.min.x, a.0.min.y).partial_cmp(&(b.0.min.x, b.0.min.y)).unwrap())
    });
    out
}

/// Executes a turn/walk instruction sequence from a pose, literally. Used to
/// verify that following the rounded instructions reproduces the plan.
pub fn simulate_instructions(instructions: &[String], start: Vector2<f64>, heading: f64) -> Vector2<f64> {
    let mut pos = start;
    let mut heading = heading;
    for line in instructions {
        let words: Vec<&str> = line.split([' ', ',']).collect();
        if line.starts_with("turn") {
            let deg: f64 = words[2].parse().expect("turn degrees");
            let sign = if words[1] == "left" { 1.0 } else { -1.0 };
            heading = wrap_angle(heading + sign * deg.to_radians());
        } else if line.starts_with("walk") {
            let dist: f64 = words[2].parse().expect("walk distance");
            pos += Vector2::new(heading.cos(), heading.sin()) * dist;
        }
    }
    pos
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::voxelmap::HeightClass;
    use nalgebra::Vector3;

    fn plan_of(points: &[(f64, f64)]) -> NavPlan {
        let waypoints: Vec<Vector2<f64>> = points.iter().map(|&(x, y)| Vector2::new(x, y)).collect();
        let total_length = waypoints.windows(2).map(|w| (w[1] - w[0]).norm()).sum();
        NavPlan { waypoints, total_length, instructions: Vec::new(), nearby_obstacles: Vec::new() }
    }

    fn head_box(min: (f64, f64), max: (f64, f64)) -> ObstacleBox {
        ObstacleBox {
            min: Vector3::new(min.0, min.1, 1.6),
            max: Vector3::new(max.0, max.1, 1.9),
            height_class: HeightClass::Head,
            label: None,
            voxel_count: 1,
        }
    }

    #[test]
    fn straight_leg_is_a_single_walk() {
        let plan = plan_of(&[(0.0, 0.0), (3.0, 0.0)]);
        let got = generate_instructions(&plan, 0.0, &[]);
        assert_eq!(got, vec!["walk forward 3.0 meters".to_string()]);
    }

    #[test]
    fn left_turn_then_walk() {
        let plan = plan_of(&[(0.0, 0.0), (0.0, 2.0)]);
        let got = generate_instructions(&plan, 0.0, &[]);
        assert_eq!(got, vec!["turn left 90 degrees".to_string(), "walk forward 2.0 meters".to_string()]);
    }

    #[test]
    fn obstacle_warning_names_side_and_class() {
        let plan = plan_of(&[(0.0, 0.0), (2.0, 0.0)]);
        // Head-height box 0.5 m to the right of the leg midpoint.
        let b = head_box((0.9, -0.6), (1.1, -0.4));
        let got = generate_instructions(&plan, 0.0, &[b]);
        assert_eq!(got.len(), 1);
        assert!(
            got[0].contains("obstacle at head level on your right"),
            "instruction: {}",
            got[0]
        );
    }

    #[test]
    fn far_obstacles_are_silent() {
        let plan = plan_of(&[(0.0, 0.0), (2.0, 0.0)]);
        let b = head_box((0.9, -3.0), (1.1, -2.8));
        let got = generate_instructions(&plan, 0.0, &[b]);
        assert_eq!(got, vec!["walk forward 2.0 meters".to_string()]);
    }

    #[test]
    fn nearby_obstacles_report_signed_offsets() {
        let plan = plan_of(&[(0.0, 0.0), (4.0, 0.0)]);
        let right = head_box((1.0, -0.7), (1.2, -0.5));
        let left = head_box((2.0, 0.2), (2.2, 0.4));
        let got = nearby_obstacles(&plan, &[right.clone(), left.clone()]);
        assert_eq!(got.len(), 2);
        // Left box is nearer (0.2 m vs 0.5 m) and positive-side.
        assert!(got[0].1 > 0.0 && (got[0].1 - 0.2).abs() < 0.02);
        assert!(got[1].1 < 0.0 && (got[1].1 + 0.5).abs() < 0.02);
    }

    #[test]
    fn simulated_execution_reaches_endpoint() {
        // Headings that are multiples of 15 degrees make every turn exact;
        // residual error comes only from the 0.1 m distance rounding.
        let plan = plan_of(&[(0.0, 0.0), (2.0, 0.0), (2.0, 1.5), (4.0, 3.5)]);
        let heading = 0.0;
        let instructions = generate_instructions(&plan, heading, &[]);
        let end = simulate_instructions(&instructions, plan.waypoints[0], heading);
        let target = *plan.waypoints.last().unwrap();
        assert!((end - target).norm() < 0.15, "end {end:?} vs {target:?}");
    }

    #[test]
    fn executing_planned_instructions_lands_within_one_cell() {
        use crate::planner::{plan_path, Costmap, COST_BLOCKED};
        let cell = 0.5;
        let mut map = Costmap::new_free(cell, Vector2::new(0.0, 0.0), 24, 24).unwrap();
        for y in 4..20 {
            map.set(12, y, COST_BLOCKED);
        }
        let start = Vector2::new(1.25, 1.25);
        let goal = Vector2::new(10.75, 8.25);
        let plan = plan_path(&map, start, goal).unwrap();
        let heading = 0.0;
        let instructions = generate_instructions(&plan, heading, &[]);
        let end = simulate_instructions(&instructions, plan.waypoints[0], heading);
        let target = *plan.waypoints.last().unwrap();
        assert!(
            (end - target).norm() < cell,
            "executed endpoint {end:?} vs planned {target:?}"
        );
    }
}
