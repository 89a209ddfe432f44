//! Indoor pedestrian navigation core.
//!
//! The pipeline: a foot-mounted IMU stream is turned into orientation
//! ([`ahrs`]) and a drift-compensated position track ([`deadreckon`]),
//! optionally stabilized with sparse absolute pose fixes ([`fusion`]).
//! Point clouds of the environment become sparse voxel obstacle maps
//! ([`voxelmap`]), which feed a 2D costmap planner with height-aware
//! spoken-style instructions ([`planner`]). [`simharness`] generates
//! ground-truth gait trajectories and synthetic IMU streams so the whole
//! chain can be verified end to end without hardware.
//!
//! All positions are meters in a shared earth frame with z up. Orientations
//! are body-to-earth unit quaternions.

pub mod ahrs;
pub mod deadreckon;
pub mod fusion;
pub mod io;
pub mod planner;
pub mod simharness;
pub mod voxelmap;

/// Standard gravity (m/s^2), shared by tracker defaults and the simulator.
pub const STANDARD_GRAVITY: f64 = 9.80665;
