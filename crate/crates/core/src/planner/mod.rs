//! Traversability costmaps and collision-free path planning.
//!
//! The voxel map is projected onto a 2D grid: a column is blocked when any
//! voxel intersects the walker's swept height band (above step clearance,
//! below body height), so floor texture and ceiling fixtures don't block
//! travel. Blocked cells are inflated by the agent radius: cells closer
//! than the radius are lethal, and a linearly decaying soft cost extends one
//! radius further to keep paths away from walls when there is room.
//!
//! Planning is A* over 8-connected cells. Edge weights are integers
//! (milli-cells scaled by the cell cost), so optimal costs compare exactly
//! against a Dijkstra oracle with no floating-point ambiguity; ties break on
//! lexicographic cell order, making plans fully deterministic.

mod instructions;

pub use instructions::{generate_instructions, nearby_obstacles, simulate_instructions};

use nalgebra::Vector2;
use std::collections::BinaryHeap;
use thiserror::Error;

use crate::voxelmap::{HeightClass, ObstacleBox, SparseVoxelGrid};

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("invalid agent profile: {0}")]
    InvalidAgent(String),
    #[error("invalid costmap geometry: {0}")]
    InvalidMap(String),
    #[error("{which} ({x:.3}, {y:.3}) is outside the costmap")]
    OutOfBounds { which: &'static str, x: f64, y: f64 },
    #[error("{which} cell is blocked")]
    BlockedEndpoint { which: &'static str },
    #[error("no collision-free path from start to goal")]
    NoPath,
    #[error("no obstacle labeled \"{label}\"; available labels: {available:?}")]
    NotFound { label: String, available: Vec<String> },
}

pub const COST_FREE: u8 = 0;
pub const COST_BLOCKED: u8 = 255;

/// Walker dimensions used for projection and inflation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentProfile {
    /// Obstacles above this height are ignored, m.
    pub height: f64,
    /// Lethal inflation radius, m.
    pub radius: f64,
    /// Obstacles entirely below this height are walkable, m.
    pub step_clearance: f64,
}

impl Default for AgentProfile {
    fn default() -> Self {
        Self { height: 1.8, radius: 0.3, step_clearance: 0.15 }
    }
}

impl AgentProfile {
    pub fn validate(&self) -> Result<(), PlanError> {
        if !(self.step_clearance >= 0.0 && self.height > self.step_clearance) {
            return Err(PlanError::InvalidAgent(format!(
                "need height ({}) > step_clearance ({}) >= 0",
                self.height, self.step_clearance
            )));
        }
        if !(self.radius >= 0.0 && self.radius.is_finite()) {
            return Err(PlanError::InvalidAgent(format!("radius must be >= 0, got {}", self.radius)));
        }
        Ok(())
    }

    /// Lethal inflation radius on a grid of the given resolution. The half
    /// cell diagonal covers the gap between a blocked cell's center and an
    /// obstacle surface anywhere inside that cell, so a path that clears
    /// blocked centers by this radius clears the obstacles themselves by the
    /// agent radius.
    pub fn inflation_radius(&self, cell_size: f64) -> f64 {
        if self.radius == 0.0 {
            0.0
        } else {
            self.radius + cell_size * std::f64::consts::FRAC_1_SQRT_2
        }
    }
}

/// 2D traversal-cost grid. 0 is free, 255 blocked, 1..=254 a soft penalty.
#[derive(Debug, Clone, PartialEq)]
pub struct Costmap {
    cell_size: f64,
    origin: Vector2<f64>,
    width: usize,
    height: usize,
    cost: Vec<u8>,
}

impl Costmap {
    pub fn new_free(cell_size: f64, origin: Vector2<f64>, width: usize, height: usize) -> Result<Self, PlanError> {
        if !(cell_size > 0.0 && cell_size.is_finite()) {
            return Err(PlanError::InvalidMap(format!("cell_size must be positive, got {cell_size}")));
        }
        if width == 0 || height == 0 {
            return Err(PlanError::InvalidMap(format!("dimensions must be positive, got {width}x{height}")));
        }
        Ok(Self { cell_size, origin, width, height, cost: vec![COST_FREE; width * height] })
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn origin(&self) -> Vector2<f64> {
        self.origin
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    fn idx(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.cost[self.idx(x, y)]
    }

    pub fn set(&mut self, x: usize, y: usize, cost: u8) {
        let i = self.idx(x, y);
        self.cost[i] = cost;
    }

    pub fn is_blocked(&self, x: usize, y: usize) -> bool {
        self.get(x, y) == COST_BLOCKED
    }

    /// Cell containing a point, if inside the map.
    pub fn cell_of(&self, p: &Vector2<f64>) -> Option<(usize, usize)> {
        let cx = ((p.x - self.origin.x) / self.cell_size).floor();
        let cy = ((p.y - self.origin.y) / self.cell_size).floor();
        if cx < 0.0 || cy < 0.0 || cx >= self.width as f64 || cy >= self.height as f64 {
            None
        } else {
            Some((cx as usize, cy as usize))
        }
    }

    /// Center of a cell, meters.
    pub fn center(&self, x: usize, y: usize) -> Vector2<f64> {
        self.origin + Vector2::new((x as f64 + 0.5) * self.cell_size, (y as f64 + 0.5) * self.cell_size)
    }

    /// Marks a cell blocked and inflates around it: lethal within `radius`,
    /// linear soft cost decaying to zero at `2 * radius`.
    pub fn block_and_inflate(&mut self, x: usize, y: usize, radius: f64) {
        self.set(x, y, COST_BLOCKED);
        if radius <= 0.0 {
            return;
        }
        let reach = (2.0 * radius / self.cell_size).ceil() as i64 + 1;
        for dy in -reach..=reach {
            for dx in -reach..=reach {
                let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                if nx < 0 || ny < 0 || nx >= self.width as i64 || ny >= self.height as i64 {
                    continue;
                }
                let d = ((dx * dx + dy * dy) as f64).sqrt() * self.cell_size;
                let new_cost = inflation_cost(d, radius);
                let i = self.idx(nx as usize, ny as usize);
                if new_cost > self.cost[i] {
                    self.cost[i] = new_cost;
                }
            }
        }
    }
}

/// Cost assigned to a cell at center distance `d` from a blocked cell.
pub fn inflation_cost(d: f64, radius: f64) -> u8 {
    if d <= radius {
        COST_BLOCKED
    } else if d < 2.0 * radius {
        let c = (254.0 * (2.0 * radius - d) / radius).ceil();
        c.clamp(1.0, 254.0) as u8
    } else {
        COST_FREE
    }
}

/// Does a voxel column at `[zmin, zmax]` obstruct the walker?
fn blocks_band(zmin: f64, zmax: f64, agent: &AgentProfile) -> bool {
    zmax > agent.step_clearance && zmin < agent.height
}

/// Projects the voxel map into a costmap covering the occupied region (plus
/// the inflation margin). An empty grid projects to a 1x1 free map.
pub fn project_occupancy(grid: &SparseVoxelGrid, agent: &AgentProfile) -> Result<Costmap, PlanError> {
    agent.validate()?;
    let coords = grid.sorted_coords();
    let blocking: Vec<_> = coords
        .iter()
        .filter(|c| {
            let zmin = grid.cell_min(c).z;
            blocks_band(zmin, zmin + grid.voxel_size(), agent)
        })
        .collect();
    if blocking.is_empty() {
        return Costmap::new_free(grid.voxel_size(), grid.origin().xy(), 1, 1);
    }
    let inflation = agent.inflation_radius(grid.voxel_size());
    let margin = (2.0 * inflation / grid.voxel_size()).ceil() as i32 + 1;
    let min_x = blocking.iter().map(|c| c[0]).min().unwrap() - margin;
    let max_x = blocking.iter().map(|c| c[0]).max().unwrap() + margin;
    let min_y = blocking.iter().map(|c| c[1]).min().unwrap() - margin;
    let max_y = blocking.iter().map(|c| c[1]).max().unwrap() + margin;
    let origin = grid.origin().xy()
        + Vector2::new(min_x as f64 * grid.voxel_size(), min_y as f64 * grid.voxel_size());
    let mut map = Costmap::new_free(
        grid.voxel_size(),
        origin,
        (max_x - min_x + 1) as usize,
        (max_y - min_y + 1) as usize,
    )?;
    for c in blocking {
        map.block_and_inflate((c[0] - min_x) as usize, (c[1] - min_y) as usize, inflation);
    }
    Ok(map)
}

/// Builds a costmap over an explicit region from obstacle boxes (as loaded
/// from an obstacles file): every cell intersecting a box that reaches into
/// the walker's height band is blocked, then inflated.
pub fn costmap_from_obstacles(
    obstacles: &[ObstacleBox],
    agent: &AgentProfile,
    cell_size: f64,
    min_corner: Vector2<f64>,
    max_corner: Vector2<f64>,
) -> Result<Costmap, PlanError> {
    agent.validate()?;
    if !(max_corner.x > min_corner.x && max_corner.y > min_corner.y) {
        return Err(PlanError::InvalidMap("empty region".into()));
    }
    let width = ((max_corner.x - min_corner.x) / cell_size).ceil() as usize;
    let height = ((max_corner.y - min_corner.y) / cell_size).ceil() as usize;
    let mut map = Costmap::new_free(cell_size, min_corner, width.max(1), height.max(1))?;
    let inflation = agent.inflation_radius(cell_size);
    let half = cell_size / 2.0;
    for b in obstacles {
        if !blocks_band(b.min.z, b.max.z, agent) {
            continue;
        }
        for y in 0..map.height {
            for x in 0..map.width {
                let c = map.center(x, y);
                if c.x + half > b.min.x && c.x - half < b.max.x && c.y + half > b.min.y && c.y - half < b.max.y {
                    map.block_and_inflate(x, y, inflation);
                }
            }
        }
    }
    Ok(map)
}

/// A planned route: simplified waypoints (cell centers at direction
/// changes), its metric length, spoken-style instructions, and obstacles
/// within warning range of the route.
#[derive(Debug, Clone, PartialEq)]
pub struct NavPlan {
    pub waypoints: Vec<Vector2<f64>>,
    pub total_length: f64,
    pub instructions: Vec<String>,
    pub nearby_obstacles: Vec<(ObstacleBox, f64)>,
}

// Integer edge weights: straight steps cost 1000 length units, diagonals
// 1414, each scaled by (254 + cell cost). Exact arithmetic keeps A* and
// Dijkstra comparable with ==.
const STRAIGHT_UNITS: u64 = 1000;
const DIAGONAL_UNITS: u64 = 1414;
const COST_SCALE: u64 = 254;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct QueueEntry {
    priority: u64,
    cell: (usize, usize),
}

impl Ord for QueueEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // Min-heap with lexicographic tie-break on the cell.
        other
            .priority
            .cmp(&self.priority)
            .then_with(|| other.cell.cmp(&self.cell))
    }
}

impl PartialOrd for QueueEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

const NEIGHBORS: [(i64, i64, u64); 8] = [
    (1, 0, STRAIGHT_UNITS),
    (-1, 0, STRAIGHT_UNITS),
    (0, 1, STRAIGHT_UNITS),
    (0, -1, STRAIGHT_UNITS),
    (1, 1, DIAGONAL_UNITS),
    (1, -1, DIAGONAL_UNITS),
    (-1, 1, DIAGONAL_UNITS),
    (-1, -1, DIAGONAL_UNITS),
];

fn edge_weight(base: u64, target_cost: u8) -> u64 {
    base * (COST_SCALE + target_cost as u64)
}

/// Admissible octile heuristic in the same integer units as the edges.
fn heuristic(from: (usize, usize), to: (usize, usize)) -> u64 {
    let dx = from.0.abs_diff(to.0) as u64;
    let dy = from.1.abs_diff(to.1) as u64;
    let (lo, hi) = (dx.min(dy), dx.max(dy));
    (lo * DIAGONAL_UNITS + (hi - lo) * STRAIGHT_UNITS) * COST_SCALE
}

/// Grid search shared by A* and the Dijkstra oracle (heuristic off).
fn search(map: &Costmap, start: (usize, usize), goal: (usize, usize), use_heuristic: bool) -> Option<(u64, Vec<(usize, usize)>)> {
    let n = map.width * map.height;
    let mut dist = vec![u64::MAX; n];
    let mut parent: Vec<Option<(usize, usize)>> = vec![None; n];
    let mut heap = BinaryHeap::new();
    dist[map.idx(start.0, start.1)] = 0;
    heap.push(QueueEntry { priority: if use_heuristic { heuristic(start, goal) } else { 0 }, cell: start });

    while let Some(QueueEntry { priority, cell }) = heap.pop() {
        let i = map.idx(cell.0, cell.1);
        let g = dist[i];
        let f = if use_heuristic { g + heuristic(cell, goal) } else { g };
        if priority != f {
            continue; // stale entry
        }
        if cell == goal {
            let mut path = vec![cell];
            let mut cur = cell;
            while let Some(p) = parent[map.idx(cur.0, cur.1)] {
                path.push(p);
                cur = p;
            }
            path.reverse();
            return Some((g, path));
        }
        for (dx, dy, base) in NEIGHBORS {
            let (nx, ny) = (cell.0 as i64 + dx, cell.1 as i64 + dy);
            if nx < 0 || ny < 0 || nx >= map.width as i64 || ny >= map.height as i64 {
                continue;
            }
            let next = (nx as usize, ny as usize);
            let cost = map.get(next.0, next.1);
            if cost == COST_BLOCKED {
                continue;
            }
            let ng = g + edge_weight(base, cost);
            let j = map.idx(next.0, next.1);
            if ng < dist[j] {
                dist[j] = ng;
                parent[j] = Some(cell);
                let priority = if use_heuristic { ng + heuristic(next, goal) } else { ng };
                heap.push(QueueEntry { priority, cell: next });
            }
        }
    }
    None
}

fn endpoint_cells(
    map: &Costmap,
    start: &Vector2<f64>,
    goal: &Vector2<f64>,
) -> Result<((usize, usize), (usize, usize)), PlanError> {
    let start_cell = map
        .cell_of(start)
        .ok_or(PlanError::OutOfBounds { which: "start", x: start.x, y: start.y })?;
    let goal_cell = map
        .cell_of(goal)
        .ok_or(PlanError::OutOfBounds { which: "goal", x: goal.x, y: goal.y })?;
    if map.is_blocked(start_cell.0, start_cell.1) {
        return Err(PlanError::BlockedEndpoint { which: "start" });
    }
    if map.is_blocked(goal_cell.0, goal_cell.1) {
        return Err(PlanError::BlockedEndpoint { which: "goal" });
    }
    Ok((start_cell, goal_cell))
}

/// Optimal path cost in integer units plus the cell path; exposed so tests
/// can compare A* against the Dijkstra oracle exactly.
pub fn plan_path_cells(
    map: &Costmap,
    start: Vector2<f64>,
    goal: Vector2<f64>,
) -> Result<(u64, Vec<(usize, usize)>), PlanError> {
    let (start_cell, goal_cell) = endpoint_cells(map, &start, &goal)?;
    search(map, start_cell, goal_cell, true).ok_or(PlanError::NoPath)
}

/// Dijkstra over the identical graph; the independent optimality oracle.
pub fn dijkstra_cost(map: &Costmap, start: Vector2<f64>, goal: Vector2<f64>) -> Result<u64, PlanError> {
    let (start_cell, goal_cell) = endpoint_cells(map, &start, &goal)?;
    search(map, start_cell, goal_cell, false).map(|(g, _)| g).ok_or(PlanError::NoPath)
}

/// Drops intermediate cells along straight runs.
fn simplify(path: &[(usize, usize)]) -> Vec<(usize, usize)> {
    if path.len() <= 2 {
        return path.to_vec();
    }
    let mut out = vec![path[0]];
    for w in path.windows(3) {
        let d1 = (w[1].0 as i64 - w[0].0 as i64, w[1].1 as i64 - w[0].1 as i64);
        let d2 = (w[2].0 as i64 - w[1].0 as i64, w[2].1 as i64 - w[1].1 as i64);
        if d1 != d2 {
            out.push(w[1]);
        }
    }
    out.push(*path.last().unwrap());
    out
}

/// Does the straight segment between two cell centers stay off blocked
/// cells? Grid marching; a crossing exactly through a cell corner requires
/// both adjacent cells clear.
pub fn sight_clear(map: &Costmap, a: (usize, usize), b: (usize, usize)) -> bool {
    let (mut x, mut y) = (a.0 as i64, a.1 as i64);
    let (xe, ye) = (b.0 as i64, b.1 as i64);
    let (sx, sy) = ((xe - x).signum(), (ye - y).signum());
    let adx = (xe - x).abs() as f64;
    let ady = (ye - y).abs() as f64;
    let dtx = if sx != 0 { 1.0 / adx } else { f64::INFINITY };
    let dty = if sy != 0 { 1.0 / ady } else { f64::INFINITY };
    let mut tx = 0.5 * dtx;
    let mut ty = 0.5 * dty;
    loop {
        if map.is_blocked(x as usize, y as usize) {
            return false;
        }
        if x == xe && y == ye {
            return true;
        }
        if (tx - ty).abs() < 1e-12 {
            if map.is_blocked((x + sx) as usize, y as usize)
                || map.is_blocked(x as usize, (y + sy) as usize)
            {
                return false;
            }
            x += sx;
            y += sy;
            tx += dtx;
            ty += dty;
        } else if tx < ty {
            x += sx;
            tx += dtx;
        } else {
            y += sy;
            ty += dty;
        }
    }
}

/// Greedy line-of-sight shortcutting: keep the furthest waypoint each kept
/// one can see, turning grid stairsteps into straight legs.
fn smooth(map: &Costmap, cells: &[(usize, usize)]) -> Vec<(usize, usize)> {
    let mut out = vec![cells[0]];
    let mut i = 0;
    while i + 1 < cells.len() {
        let mut j = cells.len() - 1;
        while j > i + 1 && !sight_clear(map, cells[i], cells[j]) {
            j -= 1;
        }
        out.push(cells[j]);
        i = j;
    }
    out
}

/// Plans a shortest collision-free path. Waypoints are cell centers at
/// direction changes after line-of-sight smoothing; instructions and
/// obstacle annotations are filled in by the caller via
/// [`generate_instructions`] / [`nearby_obstacles`].
pub fn plan_path(map: &Costmap, start: Vector2<f64>, goal: Vector2<f64>) -> Result<NavPlan, PlanError> {
    let (_, cells) = plan_path_cells(map, start, goal)?;
    let waypoints: Vec<Vector2<f64>> =
        simplify(&smooth(map, &cells)).iter().map(|&(x, y)| map.center(x, y)).collect();
    let total_length = waypoints.windows(2).map(|w| (w[1] - w[0]).norm()).sum();
    Ok(NavPlan { waypoints, total_length, instructions: Vec::new(), nearby_obstacles: Vec::new() })
}

/// Nearest obstacle (xy center distance from `from`) whose label matches
/// case-insensitively; ties break on lexicographic center.
pub fn find_object<'a>(
    obstacles: &'a [ObstacleBox],
    label: &str,
    from: &Vector2<f64>,
) -> Result<&'a ObstacleBox, PlanError> {
    let needle = label.to_lowercase();
    let mut best: Option<(&ObstacleBox, f64)> = None;
    for b in obstacles {
        let Some(l) = &b.label else { continue };
        if l.to_lowercase() != needle {
            continue;
        }
        let d = (b.center().xy() - from).norm();
        let better = match best {
            None => true,
            Some((cur, cd)) => {
                d < cd
                    || (d == cd
                        && (b.center().x, b.center().y, b.center().z)
                            < (cur.center().x, cur.center().y, cur.center().z))
            }
        };
        if better {
            best = Some((b, d));
        }
    }
    best.map(|(b, _)| b).ok_or_else(|| {
        let mut available: Vec<String> = obstacles.iter().filter_map(|b| b.label.clone()).collect();
        available.sort();
        available.dedup();
        PlanError::NotFound { label: label.to_string(), available }
    })
}

/// Obstacles annotated with their class for warning text.
pub fn describe_class(class: HeightClass) -> &'static str {
    match class {
        HeightClass::Ground => "ground",
        HeightClass::Body => "body",
        HeightClass::Head => "head",
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    use crate::voxelmap::voxelize;

    fn boxed(min: (f64, f64, f64), max: (f64, f64, f64), label: Option<&str>) -> ObstacleBox {
        ObstacleBox {
            min: Vector3::new(min.0, min.1, min.2),
            max: Vector3::new(max.0, max.1, max.2),
            height_class: HeightClass::Body,
            label: label.map(str::to_string),
            voxel_count: 1,
        }
    }

    #[test]
    fn empty_grid_projects_all_free() {
        let grid = voxelize(&[], 0.05, Vector3::zeros()).unwrap();
        let map = project_occupancy(&grid, &AgentProfile::default()).unwrap();
        assert_eq!((map.width(), map.height()), (1, 1));
        assert_eq!(map.get(0, 0), COST_FREE);
    }

    #[test]
    fn ceiling_lamp_does_not_block() {
        let mut points = Vec::new();
        for i in 0..5 {
            points.push(Vector3::new(1.0, 1.0, 2.0 + i as f64 * 0.02));
        }
        let grid = voxelize(&points, 0.05, Vector3::zeros()).unwrap();
        let agent = AgentProfile { height: 1.8, radius: 0.3, step_clearance: 0.15 };
        let map = project_occupancy(&grid, &agent).unwrap();
        for y in 0..map.height() {
            for x in 0..map.width() {
                assert_eq!(map.get(x, y), COST_FREE);
            }
        }
    }

    #[test]
    fn floor_texture_does_not_block() {
        let points: Vec<Vector3<f64>> = (0..100)
            .map(|i| Vector3::new((i % 10) as f64 * 0.1, (i / 10) as f64 * 0.1, 0.02))
            .collect();
        let grid = voxelize(&points, 0.05, Vector3::zeros()).unwrap();
        let map = project_occupancy(&grid, &AgentProfile::default()).unwrap();
        for y in 0..map.height() {
            for x in 0..map.width() {
                assert_eq!(map.get(x, y), COST_FREE);
            }
        }
    }

    /// Brute-force Euclidean distance transform oracle for the inflation.
    fn distance_transform(map: &Costmap, blocked: &[(usize, usize)]) -> Vec<f64> {
        let mut out = vec![f64::INFINITY; map.width() * map.height()];
        for y in 0..map.height() {
            for x in 0..map.width() {
                for &(bx, by) in blocked {
                    let dx = (x as f64 - bx as f64) * map.cell_size();
                    let dy = (y as f64 - by as f64) * map.cell_size();
                    let d = (dx * dx + dy * dy).sqrt();
                    let i = y * map.width() + x;
                    if d < out[i] {
                        out[i] = d;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn wall_inflation_matches_distance_transform() {
        // Wall of voxels at x = 1.0, body height, radius 0.3.
        let mut points = Vec::new();
        for y in 0..40 {
            for z in 0..10 {
                points.push(Vector3::new(1.0, y as f64 * 0.05, 0.2 + z as f64 * 0.05));
            }
        }
        let size = 0.05;
        let grid = voxelize(&points, size, Vector3::zeros()).unwrap();
        let agent = AgentProfile { height: 1.8, radius: 0.3, step_clearance: 0.15 };
        let map = project_occupancy(&grid, &agent).unwrap();

        // Raw blocked cells derived straight from the projection rule.
        let mut blocked: Vec<(usize, usize)> = grid
            .sorted_coords()
            .iter()
            .filter(|c| {
                let zmin = grid.cell_min(c).z;
                zmin + size > agent.step_clearance && zmin < agent.height
            })
            .filter_map(|c| {
                let center = grid.cell_min(c) + Vector3::repeat(size / 2.0);
                map.cell_of(&center.xy())
            })
            .collect();
        blocked.sort_unstable();
        blocked.dedup();
        let dt = distance_transform(&map, &blocked);
        let inflation = agent.inflation_radius(size);
        for y in 0..map.height() {
            for x in 0..map.width() {
                let d = dt[y * map.width() + x];
                let expected = inflation_cost(d, inflation);
                assert_eq!(map.get(x, y), expected, "cell ({x},{y}) at distance {d}");
            }
        }
    }

    #[test]
    fn straight_path_on_empty_map() {
        // Cell centers land on integer coordinates.
        let map = Costmap::new_free(1.0, Vector2::new(-0.5, -0.5), 10, 5).unwrap();
        let plan = plan_path(&map, Vector2::new(0.0, 0.0), Vector2::new(5.0, 0.0)).unwrap();
        assert_eq!(plan.waypoints.len(), 2);
        assert!((plan.total_length - 5.0).abs() < 1e-9);
    }

    #[test]
    fn path_through_gap_matches_dijkstra() {
        let mut map = Costmap::new_free(0.25, Vector2::zeros(), 40, 40).unwrap();
        // Wall at x-cell 20 with a 1 m gap at y-cells 18..22.
        for y in 0..40 {
            if !(18..22).contains(&y) {
                map.block_and_inflate(20, y, 0.25);
            }
        }
        let start = Vector2::new(1.0, 5.0);
        let goal = Vector2::new(9.0, 5.0);
        let (cost, cells) = plan_path_cells(&map, start, goal).unwrap();
        assert_eq!(cost, dijkstra_cost(&map, start, goal).unwrap());
        // The path threads the gap.
        assert!(cells.iter().any(|&(x, y)| x == 20 && (18..22).contains(&y)));
        // No blocked cell on the path, and clearance humans care about:
        for &(x, y) in &cells {
            assert!(!map.is_blocked(x, y));
        }
    }

    #[test]
    fn enclosed_goal_is_no_path() {
        let mut map = Costmap::new_free(1.0, Vector2::zeros(), 20, 20).unwrap();
        for d in 0..20 {
            map.set(10 + d % 5, 10, COST_BLOCKED);
        }
        // Ring around (5,5).
        for x in 3..=7 {
            for y in 3..=7 {
                if x == 3 || x == 7 || y == 3 || y == 7 {
                    map.set(x, y, COST_BLOCKED);
                }
            }
        }
        let err = plan_path(&map, Vector2::new(15.5, 15.5), Vector2::new(5.5, 5.5)).unwrap_err();
        assert!(matches!(err, PlanError::NoPath));
    }

    #[test]
    fn blocked_and_out_of_bounds_endpoints() {
        let mut map = Costmap::new_free(1.0, Vector2::zeros(), 5, 5).unwrap();
        map.set(0, 0, COST_BLOCKED);
        assert!(matches!(
            plan_path(&map, Vector2::new(0.5, 0.5), Vector2::new(4.5, 4.5)),
            Err(PlanError::BlockedEndpoint { which: "start" })
        ));
        assert!(matches!(
            plan_path(&map, Vector2::new(1.5, 1.5), Vector2::new(9.0, 0.5)),
            Err(PlanError::OutOfBounds { which: "goal", .. })
        ));
    }

    #[test]
    fn astar_equals_dijkstra_on_random_maps() {
        let mut rng = StdRng::seed_from_u64(55);
        let mut compared = 0;
        while compared < 40 {
            let mut map = Costmap::new_free(0.5, Vector2::zeros(), 32, 32).unwrap();
            for _ in 0..rng.gen_range(5..25) {
                let x = rng.gen_range(0..32);
                let y = rng.gen_range(0..32);
                map.block_and_inflate(x, y, rng.gen_range(0.0..0.8));
            }
            let start = Vector2::new(rng.gen_range(0.0..16.0), rng.gen_range(0.0..16.0));
            let goal = Vector2::new(rng.gen_range(0.0..16.0), rng.gen_range(0.0..16.0));
            match (plan_path_cells(&map, start, goal), dijkstra_cost(&map, start, goal)) {
                (Ok((a, _)), Ok(d)) => {
                    assert_eq!(a, d);
                    compared += 1;
                }
                (Err(_), Err(_)) => {}
                (a, d) => panic!("A* and Dijkstra disagree on reachability: {a:?} vs {d:?}"),
            }
        }
    }

    #[test]
    fn plans_are_deterministic() {
        let mut rng = StdRng::seed_from_u64(56);
        let mut map = Costmap::new_free(0.5, Vector2::zeros(), 24, 24).unwrap();
        for _ in 0..15 {
            let x = rng.gen_range(0..24);
            let y = rng.gen_range(0..24);
            map.block_and_inflate(x, y, 0.5);
        }
        let start = Vector2::new(0.25, 0.25);
        let goal = Vector2::new(11.75, 11.75);
        if let Ok(first) = plan_path(&map, start, goal) {
            for _ in 0..5 {
                assert_eq!(plan_path(&map, start, goal).unwrap(), first);
            }
        }
    }

    #[test]
    fn find_object_nearest_and_errors() {
        let boxes = vec![
            boxed((0.0, 0.0, 0.0), (0.5, 0.5, 1.0), Some("door")),
            boxed((1.0, 0.0, 0.0), (1.5, 0.5, 1.0), Some("chair")),
            boxed((3.0, 0.0, 0.0), (3.5, 0.5, 1.0), Some("Chair")),
        ];
        let from = Vector2::new(1.0, 0.0);
        let hit = find_object(&boxes, "door", &from).unwrap();
        assert_eq!(hit.label.as_deref(), Some("door"));
        // Case-insensitive; nearest of the two chairs.
        let hit = find_object(&boxes, "CHAIR", &from).unwrap();
        assert!((hit.center().x - 1.25).abs() < 1e-12);
        match find_object(&boxes, "sofa", &from) {
            Err(PlanError::NotFound { available, .. }) => {
                assert_eq!(available, vec!["Chair".to_string(), "chair".into(), "door".into()]);
            }
            other => panic!("expected NotFound, got {other:?}"),
        }
    }
}
