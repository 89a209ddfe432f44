//! gaitnav: foot-IMU tracking, map building, and indoor route guidance in
//! one binary.
//!
//! Exit codes are stable: 0 success, 1 internal error, 2 malformed input,
//! 3 no steps detected, 4 unreachable goal, 5 unknown object label.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::Vector2;

use gaitnav_core::io::parse_xy;
use gaitnav_core::voxelmap::Connectivity;

use commands::{MapArgs, NavigateArgs, SimulateArgs, TrackArgs};
use config::AppConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    Other,
    BadInput,
    NoSteps,
    Unreachable,
    UnknownLabel,
}

impl ExitKind {
    fn code(self) -> u8 {
        match self {
            ExitKind::Other => 1,
            ExitKind::BadInput => 2,
            ExitKind::NoSteps => 3,
            ExitKind::Unreachable => 4,
            ExitKind::UnknownLabel => 5,
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ExitKind,
    pub message: String,
}

#[derive(Parser)]
#[command(
    name = "gaitnav",
    version,
    about = "Foot-mounted IMU dead reckoning with per-step drift compensation, sparse voxel obstacle maps, and height-aware indoor route guidance"
)]
struct Cli {
    /// Config JSON path (defaults to $GAITNAV_CONFIG, then built-in values).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Reconstruct a trajectory from an IMU recording.
    Track(TrackCli),
    /// Generate a ground-truth walk and its synthetic IMU stream.
    Simulate(SimulateCli),
    /// Voxelize a point cloud into obstacles and a traversability costmap.
    Map(MapCli),
    /// Run the full loop: track, fuse fixes, plan, and narrate a route.
    Navigate(NavigateCli),
}

#[derive(Args)]
struct TrackCli {
    /// IMU CSV recording (header: t,ax,ay,az,gx,gy,gz).
    #[arg(long)]
    input: PathBuf,
    /// Stream through the online tracker (per-step compensation as steps
    /// complete) instead of the offline batch pass.
    #[arg(long, conflicts_with = "offline")]
    online: bool,
    /// Whole-recording batch processing (the default).
    #[arg(long)]
    offline: bool,
    /// Disable zero-velocity drift compensation (raw double integration).
    #[arg(long)]
    no_zupt: bool,
    /// Reference trajectory (CSV or JSON) to score against.
    #[arg(long)]
    compare: Option<PathBuf>,
    /// Output prefix; writes <out>.csv and <out>.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateCli {
    /// Scenario JSON file.
    #[arg(long)]
    scenario: PathBuf,
    /// IMU sample rate, Hz.
    #[arg(long, default_value_t = 100.0)]
    rate: f64,
    /// Noise generator seed (all randomness flows from it).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Accelerometer noise sigma, m/s^2.
    #[arg(long, default_value_t = 0.0)]
    noise_accel: f64,
    /// Gyro noise sigma, rad/s.
    #[arg(long, default_value_t = 0.0)]
    noise_gyro: f64,
    /// Constant accelerometer bias "x,y,z", m/s^2.
    #[arg(long)]
    accel_bias: Option<String>,
    /// Constant gyro bias "x,y,z", rad/s.
    #[arg(long)]
    gyro_bias: Option<String>,
    /// Output prefix; writes <out>_imu.csv, <out>_truth.csv, <out>_truth.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MapCli {
    /// Point cloud: ASCII `x y z [label]`, or little-endian f32 triples for
    /// `.bin`.
    #[arg(long)]
    cloud: PathBuf,
    /// Voxel adjacency for obstacle grouping: 6 or 26.
    #[arg(long, default_value_t = 26)]
    connectivity: u8,
    /// Output prefix; writes <out>_obstacles.json and <out>_costmap.pgm.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct NavigateCli {
    /// Obstacles JSON from `gaitnav map`.
    #[arg(long)]
    obstacles: PathBuf,
    /// IMU CSV of the walk.
    #[arg(long)]
    imu: PathBuf,
    /// Absolute pose fixes CSV (t,px,py,pz,qw,qx,qy,qz,confidence).
    #[arg(long)]
    fixes: Option<PathBuf>,
    /// Goal position "x,y" in map frame meters.
    #[arg(long, conflicts_with = "find")]
    goal: Option<String>,
    /// Navigate to the nearest obstacle with this label instead.
    #[arg(long)]
    find: Option<String>,
    /// Start position "x,y" (default origin).
    #[arg(long, default_value = "0,0")]
    start: String,
    /// Output prefix; writes <out>_plan.json, <out>_transcript.txt,
    /// <out>_fused.csv.
    #[arg(long)]
    out: PathBuf,
}

fn parse_vec3(text: &str, what: &str) -> Result<[f64; 3], CliError> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    let values: Option<Vec<f64>> = parts.iter().map(|p| p.parse().ok()).collect();
    match values {
        Some(v) if v.len() == 3 => Ok([v[0], v[1], v[2]]),
        _ => Err(CliError {
            kind: ExitKind::BadInput,
            message: format!("{what} must be \"x,y,z\", got \"{text}\""),
        }),
    }
}

fn parse_point(text: &str, what: &str) -> Result<Vector2<f64>, CliError> {
    parse_xy(text).ok_or_else(|| CliError {
        kind: ExitKind::BadInput,
        message: format!("{what} must be \"x,y\", got \"{text}\""),
    })
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config = AppConfig::load(cli.config.as_deref())
        .map_err(|message| CliError { kind: ExitKind::BadInput, message })?;
    match cli.command {
        Command::Track(args) => commands::cmd_track(
            &TrackArgs {
                input: args.input,
                online: args.online,
                no_zupt: args.no_zupt,
                compare: args.compare,
                out: args.out,
            },
            &config,
        ),
        Command::Simulate(args) => {
            let accel_bias = match &args.accel_bias {
                Some(text) => parse_vec3(text, "--accel-bias")?,
                None => [0.0; 3],
            };
            let gyro_bias = match &args.gyro_bias {
                Some(text) => parse_vec3(text, "--gyro-bias")?,
                None => [0.0; 3],
            };
            commands::cmd_simulate(&SimulateArgs {
                scenario: args.scenario,
                rate: args.rate,
                seed: args.seed,
                noise_accel: args.noise_accel,
                noise_gyro: args.noise_gyro,
                accel_bias,
                gyro_bias,
                out: args.out,
            })
        }
        Command::Map(args) => {
            let connectivity = match args.connectivity {
                6 => Connectivity::Six,
                26 => Connectivity::TwentySix,
                other => {
                    return Err(CliError {
                        kind: ExitKind::BadInput,
                        message: format!("--connectivity must be 6 or 26, got {other}"),
                    })
                }
            };
            commands::cmd_map(&MapArgs { cloud: args.cloud, connectivity, out: args.out }, &config)
        }
        Command::Navigate(args) => {
            let goal = match &args.goal {
                Some(text) => Some(parse_point(text, "--goal")?),
                None => None,
            };
            let start = parse_point(&args.start, "--start")?;
            commands::cmd_navigate(
                &NavigateArgs {
                    obstacles: args.obstacles,
                    imu: args.imu,
                    fixes: args.fixes,
                    goal,
                    find: args.find,
                    start,
                    out: args.out,
                },
                &config,
            )
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message);
            ExitCode::from(err.kind.code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn point_parsing() {
        assert_eq!(parse_point("1.5,-2", "--goal").unwrap(), Vector2::new(1.5, -2.0));
        assert!(parse_point("1.5", "--goal").is_err());
        assert_eq!(parse_vec3("0.1, 0.2, 0.3", "--accel-bias").unwrap(), [0.1, 0.2, 0.3]);
        assert!(parse_vec3("a,b,c", "--accel-bias").is_err());
    }
}
