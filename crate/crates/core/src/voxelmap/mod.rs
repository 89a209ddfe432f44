//! Sparse voxel grids: point-cloud voxelization, hash-indexed sparse 3D
//! convolution, and geometric obstacle extraction.
//!
//! Occupancy lives in a hash map keyed by integer voxel coordinates, so all
//! operations touch only occupied space. Voxelization accumulates a 4-channel
//! feature per cell (point count plus mean within-voxel offset in meters,
//! relative to the cell's min corner); the accumulation order is fixed by
//! sorting each cell's points, so the grid is independent of input point
//! order. Obstacles come out of connected-component labeling over the
//! occupied set, classified into ground/body/head bands by their top face.

mod conv;

pub use conv::{sparse_conv, sparse_conv_counted, ConvKernel, ConvStats};

use nalgebra::Vector3;
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum VoxelError {
    #[error("voxel_size must be positive, got {0}")]
    InvalidVoxelSize(f64),
    #[error("non-finite point at index {0}")]
    NonFinitePoint(usize),
    #[error("feature vector for cell {cell:?} has length {got}, grid has {expected} channels")]
    ChannelMismatch { cell: [i32; 3], got: usize, expected: usize },
    #[error("kernel expects {kernel} input channels, grid has {grid}")]
    KernelChannelMismatch { kernel: usize, grid: usize },
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),
    #[error("height thresholds must satisfy 0 < ground_max < body_max, got ({0}, {1})")]
    InvalidThresholds(f64, f64),
}

/// Integer voxel coordinate (cell index along x, y, z).
pub type VoxelCoord = [i32; 3];

/// Feature channels produced by [`voxelize`].
pub const VOXELIZE_CHANNELS: usize = 4;

/// Hash-indexed sparse voxel grid. Every stored cell carries a feature
/// vector of exactly `channels` values; all-zero features are never stored,
/// keeping sparsity canonical.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseVoxelGrid {
    voxel_size: f64,
    origin: Vector3<f64>,
    channels: usize,
    cells: HashMap<VoxelCoord, Vec<f32>>,
}

impl SparseVoxelGrid {
    pub fn new(voxel_size: f64, origin: Vector3<f64>, channels: usize) -> Result<Self, VoxelError> {
        if !(voxel_size > 0.0 && voxel_size.is_finite()) {
            return Err(VoxelError::InvalidVoxelSize(voxel_size));
        }
        Ok(Self { voxel_size, origin, channels, cells: HashMap::new() })
    }

    /// Builds a grid from explicit cells, validating channel counts and
    /// dropping all-zero features.
    pub fn from_cells<I>(
        voxel_size: f64,
        origin: Vector3<f64>,
        channels: usize,
        cells: I,
    ) -> Result<Self, VoxelError>
    where
        I: IntoIterator<Item = (VoxelCoord, Vec<f32>)>,
    {
        let mut grid = Self::new(voxel_size, origin, channels)?;
        for (coord, feature) in cells {
            grid.insert(coord, feature)?;
        }
        Ok(grid)
    }

    pub(crate) fn insert(&mut self, coord: VoxelCoord, feature: Vec<f32>) -> Result<(), VoxelError> {
        if feature.len() != self.channels {
            return Err(VoxelError::ChannelMismatch { cell: coord, got: feature.len(), expected: self.channels });
        }
        if feature.iter().any(|v| *v != 0.0) {
            self.cells.insert(coord, feature);
        }
        Ok(())
    }

    pub fn voxel_size(&self) -> f64 {
        self.voxel_size
    }

    pub fn origin(&self) -> Vector3<f64> {
        self.origin
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn get(&self, coord: &VoxelCoord) -> Option<&[f32]> {
        self.cells.get(coord).map(Vec::as_slice)
    }

    pub fn occupied(&self, coord: &VoxelCoord) -> bool {
        self.cells.contains_key(coord)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&VoxelCoord, &Vec<f32>)> {
        self.cells.iter()
    }

    /// Occupied coordinates in lexicographic order; exports and any
    /// order-sensitive consumers go through here.
    pub fn sorted_coords(&self) -> Vec<VoxelCoord> {
        let mut coords: Vec<VoxelCoord> = self.cells.keys().copied().collect();
        coords.sort_unstable();
        coords
    }

    /// Cell index containing a point.
    pub fn coord_of(&self, point: &Vector3<f64>) -> VoxelCoord {
        [
            ((point.x - self.origin.x) / self.voxel_size).floor() as i32,
            ((point.y - self.origin.y) / self.voxel_size).floor() as i32,
            ((point.z - self.origin.z) / self.voxel_size).floor() as i32,
        ]
    }

    /// Min corner of a cell, meters.
    pub fn cell_min(&self, coord: &VoxelCoord) -> Vector3<f64> {
        self.origin
            + Vector3::new(
                coord[0] as f64 * self.voxel_size,
                coord[1] as f64 * self.voxel_size,
                coord[2] as f64 * self.voxel_size,
            )
    }

    /// Max corner of a cell, meters.
    pub fn cell_max(&self, coord: &VoxelCoord) -> Vector3<f64> {
        self.cell_min(coord) + Vector3::repeat(self.voxel_size)
    }
}

/// One input point, optionally annotated with a class label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPoint {
    pub position: Vector3<f64>,
    pub label: Option<String>,
}

impl LabeledPoint {
    pub fn bare(position: Vector3<f64>) -> Self {
        Self { position, label: None }
    }
}

/// Per-cell label vote counts from an annotated cloud.
pub type CellLabels = HashMap<VoxelCoord, HashMap<String, usize>>;

/// Voxelizes a point cloud: cell = floor((p - origin) / voxel_size), feature
/// = (count, mean offset from the cell min corner). An empty cloud is a
/// valid empty grid. Output is independent of point order.
pub fn voxelize(
    points: &[Vector3<f64>],
    voxel_size: f64,
    origin: Vector3<f64>,
) -> Result<SparseVoxelGrid, VoxelError> {
    let labeled: Vec<LabeledPoint> = points.iter().map(|p| LabeledPoint::bare(*p)).collect();
    voxelize_labeled(&labeled, voxel_size, origin).map(|(grid, _)| grid)
}

/// [`voxelize`] keeping per-cell label votes for the component labeler.
pub fn voxelize_labeled(
    points: &[LabeledPoint],
    voxel_size: f64,
    origin: Vector3<f64>,
) -> Result<(SparseVoxelGrid, CellLabels), VoxelError> {
    let mut grid = SparseVoxelGrid::new(voxel_size, origin, VOXELIZE_CHANNELS)?;
    let mut buckets: HashMap<VoxelCoord, Vec<Vector3<f64>>> = HashMap::new();
    let mut labels: CellLabels = HashMap::new();
    for (i, p) in points.iter().enumerate() {
        if !p.position.iter().all(|v| v.is_finite()) {
            return Err(VoxelError::NonFinitePoint(i));
        }
        let coord = grid.coord_of(&p.position);
        buckets.entry(coord).or_default().push(p.position);
        if let Some(label) = &p.label {
            *labels.entry(coord).or_default().entry(label.clone()).or_insert(0) += 1;
        }
    }
    for (coord, mut pts) in buckets {
        // Fixed accumulation order: the mean is identical for any input
        // permutation.
        pts.sort_unstable_by(|a, b| {
            (a.x, a.y, a.z).partial_cmp(&(b.x, b.y, b.z)).expect("finite points")
        });
        let min_corner = grid.cell_min(&coord);
        let mut sum = Vector3::zeros();
        for p in &pts {
            sum += p - min_corner;
        }
        let mean = sum / pts.len() as f64;
        grid.insert(coord, vec![pts.len() as f32, mean.x as f32, mean.y as f32, mean.z as f32])?;
    }
    Ok((grid, labels))
}

/// Obstacle height bands. A box is classified by its top face.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeightClass {
    Ground,
    Body,
    Head,
}

impl std::fmt::Display for HeightClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            HeightClass::Ground => write!(f, "ground"),
            HeightClass::Body => write!(f, "body"),
            HeightClass::Head => write!(f, "head"),
        }
    }
}

/// Band boundaries in meters: top <= ground_max is ground, top <= body_max
/// is body, above is head.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeightThresholds {
    pub ground_max: f64,
    pub body_max: f64,
}

impl Default for HeightThresholds {
    fn default() -> Self {
        Self { ground_max: 0.4, body_max: 1.5 }
    }
}

impl HeightThresholds {
    pub fn validate(&self) -> Result<(), VoxelError> {
        if 0.0 < self.ground_max && self.ground_max < self.body_max {
            Ok(())
        } else {
            Err(VoxelError::InvalidThresholds(self.ground_max, self.body_max))
        }
    }
}

/// Axis-aligned obstacle box in meters with a height class and optional
/// label.
#[derive(Debug, Clone, PartialEq)]
pub struct ObstacleBox {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
    pub height_class: HeightClass,
    pub label: Option<String>,
    pub voxel_count: usize,
}

impl ObstacleBox {
    pub fn center(&self) -> Vector3<f64> {
        (self.min + self.max) * 0.5
    }
}

/// Voxel adjacency: faces only, or faces + edges + corners.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connectivity {
    Six,
    TwentySix,
}

impl Connectivity {
    fn offsets(&self) -> Vec<[i32; 3]> {
        match self {
            Connectivity::Six => vec![
                [1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1],
            ],
            Connectivity::TwentySix => {
                let mut out = Vec::with_capacity(26);
                for dx in -1..=1 {
                    for dy in -1..=1 {
                        for dz in -1..=1 {
                            if (dx, dy, dz) != (0, 0, 0) {
                                out.push([dx, dy, dz]);
                            }
                        }
                    }
                }
                out
            }
        }
    }
}

/// Classifies a box by the height of its top face.
pub fn classify_height(obstacle: &ObstacleBox, thresholds: &HeightThresholds) -> HeightClass {
    let top = obstacle.max.z;
    if top <= thresholds.ground_max {
        HeightClass::Ground
    } else if top <= thresholds.body_max {
        HeightClass::Body
    } else {
        HeightClass::Head
    }
}

/// Maximal connected components of the occupied set, reported as tight
/// boxes in meters, ordered by lexicographic min corner. Classes use the
/// default thresholds; reclassify with [`classify_height`] for custom bands.
pub fn connected_components(grid: &SparseVoxelGrid, connectivity: Connectivity) -> Vec<ObstacleBox> {
    connected_components_labeled(grid, connectivity, &CellLabels::new())
}

/// The raw component partition: each inner vector holds one component's
/// cells, sorted; components ordered by their smallest cell.
pub fn component_cells(grid: &SparseVoxelGrid, connectivity: Connectivity) -> Vec<Vec<VoxelCoord>> {
    let offsets = connectivity.offsets();
    let mut visited: HashMap<VoxelCoord, ()> = HashMap::with_capacity(grid.len());
    let mut components = Vec::new();

    // Seeding in sorted order makes output order deterministic regardless of
    // hash iteration.
    for seed in grid.sorted_coords() {
        if visited.contains_key(&seed) {
            continue;
        }
        let mut stack = vec![seed];
        visited.insert(seed, ());
        let mut cells = Vec::new();
        while let Some(cur) = stack.pop() {
            cells.push(cur);
            for off in &offsets {
                let next = [cur[0] + off[0], cur[1] + off[1], cur[2] + off[2]];
                if grid.occupied(&next) && !visited.contains_key(&next) {
                    visited.insert(next, ());
                    stack.push(next);
                }
            }
        }
        cells.sort_unstable();
        components.push(cells);
    }
    components
}

/// [`connected_components`] with per-cell label votes: a component takes the
/// majority label of its cells' points, ties broken lexicographically.
pub fn connected_components_labeled(
    grid: &SparseVoxelGrid,
    connectivity: Connectivity,
    labels: &CellLabels,
) -> Vec<ObstacleBox> {
    let thresholds = HeightThresholds::default();
    let mut boxes = Vec::new();
    for cells in component_cells(grid, connectivity) {
        let mut min_cell = cells[0];
        let mut max_cell = cells[0];
        let mut votes: HashMap<&str, usize> = HashMap::new();
        for c in &cells {
            for axis in 0..3 {
                min_cell[axis] = min_cell[axis].min(c[axis]);
                max_cell[axis] = max_cell[axis].max(c[axis]);
            }
            if let Some(cell_votes) = labels.get(c) {
                for (label, count) in cell_votes {
                    *votes.entry(label.as_str()).or_insert(0) += count;
                }
            }
        }
        let label = votes
            .into_iter()
            .max_by(|a, b| a.1.cmp(&b.1).then_with(|| b.0.cmp(a.0)))
            .map(|(label, _)| label.to_string());

        let mut obstacle = ObstacleBox {
            min: grid.cell_min(&min_cell),
            max: grid.cell_max(&max_cell),
            height_class: HeightClass::Ground,
            label,
            voxel_count: cells.len(),
        };
        obstacle.height_class = classify_height(&obstacle, &thresholds);
        boxes.push(obstacle);
    }

    boxes.sort_by(|a, b| {
        (a.min.x, a.min.y, a.min.z, a.max.x, a.max.y, a.max.z)
            .partial_cmp(&(b.min.x, b.min.y, b.min.z, b.max.x, b.max.y, b.max.z))
            .expect("finite corners")
    });
    boxes
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    use std::collections::HashSet;

    #[test]
    fn single_point_at_origin() {
        let grid = voxelize(&[Vector3::zeros()], 0.1, Vector3::zeros()).unwrap();
        assert_eq!(grid.len(), 1);
        let feature = grid.get(&[0, 0, 0]).unwrap();
        assert_eq!(feature[0], 1.0);
    }

    #[test]
    fn floor_arithmetic_splits_cells() {
        let points = [Vector3::new(0.05, 0.0, 0.0), Vector3::new(0.15, 0.0, 0.0)];
        let grid = voxelize(&points, 0.1, Vector3::zeros()).unwrap();
        assert_eq!(grid.len(), 2);
        assert!(grid.occupied(&[0, 0, 0]));
        assert!(grid.occupied(&[1, 0, 0]));
    }

    #[test]
    fn empty_cloud_is_valid_empty_grid() {
        let grid = voxelize(&[], 0.1, Vector3::zeros()).unwrap();
        assert!(grid.is_empty());
    }

    #[test]
    fn counts_match_dense_histogram_oracle() {
        let mut rng = StdRng::seed_from_u64(31);
        let points: Vec<Vector3<f64>> = (0..10_000)
            .map(|_| Vector3::new(rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)))
            .collect();
        let size = 0.1;
        let grid = voxelize(&points, size, Vector3::zeros()).unwrap();

        // Brute-force dense histogram over the unit cube.
        let mut hist = vec![0usize; 11 * 11 * 11];
        for p in &points {
            let ix = (p.x / size).floor() as usize;
            let iy = (p.y / size).floor() as usize;
            let iz = (p.z / size).floor() as usize;
            hist[(ix * 11 + iy) * 11 + iz] += 1;
        }
        let mut grid_total = 0usize;
        for (coord, feature) in grid.iter() {
            let idx = (coord[0] as usize * 11 + coord[1] as usize) * 11 + coord[2] as usize;
            assert_eq!(hist[idx], feature[0] as usize, "cell {coord:?}");
            grid_total += feature[0] as usize;
        }
        assert_eq!(grid_total, points.len());
    }

    #[test]
    fn mean_offset_is_within_voxel() {
        let points = [Vector3::new(0.02, 0.04, 0.06), Vector3::new(0.08, 0.04, 0.02)];
        let grid = voxelize(&points, 0.1, Vector3::zeros()).unwrap();
        let f = grid.get(&[0, 0, 0]).unwrap();
        assert_eq!(f[0], 2.0);
        assert!((f[1] - 0.05).abs() < 1e-6);
        assert!((f[2] - 0.04).abs() < 1e-6);
        assert!((f[3] - 0.04).abs() < 1e-6);
    }

    #[test]
    fn rejects_non_finite_points() {
        let err = voxelize(&[Vector3::new(f64::NAN, 0.0, 0.0)], 0.1, Vector3::zeros()).unwrap_err();
        assert!(matches!(err, VoxelError::NonFinitePoint(0)));
    }

    #[test]
    fn single_voxel_component() {
        let grid = voxelize(&[Vector3::new(0.02, 0.02, 0.02)], 0.05, Vector3::zeros()).unwrap();
        let boxes = connected_components(&grid, Connectivity::TwentySix);
        assert_eq!(boxes.len(), 1);
        assert!((boxes[0].max - boxes[0].min - Vector3::repeat(0.05)).norm() < 1e-12);
        assert_eq!(boxes[0].voxel_count, 1);
    }

    #[test]
    fn diagonal_adjacency_depends_on_connectivity() {
        let grid = SparseVoxelGrid::from_cells(
            1.0,
            Vector3::zeros(),
            1,
            vec![([0, 0, 0], vec![1.0]), ([1, 1, 0], vec![1.0])],
        )
        .unwrap();
        assert_eq!(connected_components(&grid, Connectivity::TwentySix).len(), 1);
        assert_eq!(connected_components(&grid, Connectivity::Six).len(), 2);
    }

    /// Dense flood-fill oracle over a cube, independent of the hash-map BFS.
    fn dense_components(occ: &HashSet<VoxelCoord>, dim: i32, conn: Connectivity) -> Vec<Vec<VoxelCoord>> {
        let offsets = conn.offsets();
        let mut seen: HashSet<VoxelCoord> = HashSet::new();
        let mut comps = Vec::new();
        for x in 0..dim {
            for y in 0..dim {
                for z in 0..dim {
                    let c = [x, y, z];
                    if !occ.contains(&c) || seen.contains(&c) {
                        continue;
                    }
                    let mut comp = Vec::new();
                    let mut queue = std::collections::VecDeque::from([c]);
                    seen.insert(c);
                    while let Some(cur) = queue.pop_front() {
                        comp.push(cur);
                        for off in &offsets {
                            let n = [cur[0] + off[0], cur[1] + off[1], cur[2] + off[2]];
                            if occ.contains(&n) && !seen.contains(&n) {
                                seen.insert(n);
                                queue.push_back(n);
                            }
                        }
                    }
                    comp.sort_unstable();
                    comps.push(comp);
                }
            }
        }
        comps.sort();
        comps
    }

    #[test]
    fn components_match_flood_fill_oracle() {
        let mut rng = StdRng::seed_from_u64(33);
        for _ in 0..20 {
            let dim = 16;
            let fill = rng.gen_range(0.05..0.5);
            let mut occ: HashSet<VoxelCoord> = HashSet::new();
            let mut cells = Vec::new();
            for x in 0..dim {
                for y in 0..dim {
                    for z in 0..dim {
                        if rng.gen_bool(fill) {
                            occ.insert([x, y, z]);
                            cells.push(([x, y, z], vec![1.0]));
                        }
                    }
                }
            }
            let grid = SparseVoxelGrid::from_cells(1.0, Vector3::zeros(), 1, cells).unwrap();
            for conn in [Connectivity::Six, Connectivity::TwentySix] {
                let oracle = dense_components(&occ, dim, conn);
                let mut got = component_cells(&grid, conn);
                got.sort();
                assert_eq!(got, oracle, "fill {fill}");
                // Partition: every occupied voxel in exactly one component.
                let total: usize = got.iter().map(Vec::len).sum();
                assert_eq!(total, occ.len());
            }
        }
    }

    #[test]
    fn majority_label_with_lexicographic_ties() {
        let points = vec![
            LabeledPoint { position: Vector3::new(0.01, 0.01, 0.01), label: Some("chair".into()) },
            LabeledPoint { position: Vector3::new(0.02, 0.01, 0.01), label: Some("chair".into()) },
            LabeledPoint { position: Vector3::new(0.03, 0.01, 0.01), label: Some("table".into()) },
        ];
        let (grid, labels) = voxelize_labeled(&points, 0.05, Vector3::zeros()).unwrap();
        let boxes = connected_components_labeled(&grid, Connectivity::Six, &labels);
        assert_eq!(boxes[0].label.as_deref(), Some("chair"));

        // Tie: 1 "b" vs 1 "a" -> lexicographically smaller wins.
        let points = vec![
            LabeledPoint { position: Vector3::new(0.01, 0.01, 0.01), label: Some("b".into()) },
            LabeledPoint { position: Vector3::new(0.02, 0.01, 0.01), label: Some("a".into()) },
        ];
        let (grid, labels) = voxelize_labeled(&points, 0.05, Vector3::zeros()).unwrap();
        let boxes = connected_components_labeled(&grid, Connectivity::Six, &labels);
        assert_eq!(boxes[0].label.as_deref(), Some("a"));
    }

    #[test]
    fn height_classification_bands() {
        let thresholds = HeightThresholds { ground_max: 0.4, body_max: 1.5 };
        let make = |z0: f64, z1: f64| ObstacleBox {
            min: Vector3::new(0.0, 0.0, z0),
            max: Vector3::new(1.0, 1.0, z1),
            height_class: HeightClass::Ground,
            label: None,
            voxel_count: 1,
        };
        assert_eq!(classify_height(&make(0.0, 0.3), &thresholds), HeightClass::Ground);
        assert_eq!(classify_height(&make(0.5, 1.2), &thresholds), HeightClass::Body);
        assert_eq!(classify_height(&make(1.6, 1.8), &thresholds), HeightClass::Head);
    }

    #[test]
    fn invalid_thresholds_rejected() {
        assert!(HeightThresholds { ground_max: 0.0, body_max: 1.0 }.validate().is_err());
        assert!(HeightThresholds { ground_max: 1.5, body_max: 1.0 }.validate().is_err());
        assert!(HeightThresholds::default().validate().is_ok());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn voxelize_is_permutation_invariant(
            seed in 0u64..1000,
            n in 1usize..500,
        ) {
            let mut rng = StdRng::seed_from_u64(seed);
            let points: Vec<Vector3<f64>> = (0..n)
                .map(|_| Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect();
            let grid = voxelize(&points, 0.25, Vector3::zeros()).unwrap();
            let mut shuffled = points.clone();
            for i in (1..shuffled.len()).rev() {
                shuffled.swap(i, rng.gen_range(0..=i));
            }
            let grid2 = voxelize(&shuffled, 0.25, Vector3::zeros()).unwrap();
            prop_assert_eq!(grid, grid2);
        }
    }
}
