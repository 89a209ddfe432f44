//! Pipeline configuration: one JSON document covering the tracker, fusion,
//! mapping, and planning knobs, validated by each owning module's rules at
//! load time. Unknown keys are rejected so typos fail loudly.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use gaitnav_core::deadreckon::TrackerConfig;
use gaitnav_core::fusion::FusionState;
use gaitnav_core::planner::AgentProfile;
use gaitnav_core::voxelmap::HeightThresholds;
use gaitnav_core::STANDARD_GRAVITY;

/// Environment variable naming a config file, overridden by `--config`.
pub const CONFIG_ENV: &str = "GAITNAV_CONFIG";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AppConfig {
    // Tracker.
    pub sample_rate: f64,
    pub hp_cutoff: f64,
    pub lp_cutoff: f64,
    pub stance_threshold: f64,
    pub min_stance_duration: f64,
    pub g: f64,
    // Fusion.
    pub fusion_alpha: f64,
    // Mapping.
    pub voxel_size: f64,
    pub ground_max: f64,
    pub body_max: f64,
    // Agent / planner.
    pub agent_height: f64,
    pub agent_radius: f64,
    pub step_clearance: f64,
}

impl Default for AppConfig {
    fn default() -> Self {
        let tracker = TrackerConfig::default();
        let thresholds = HeightThresholds::default();
        let agent = AgentProfile::default();
        Self {
            sample_rate: tracker.sample_rate,
            hp_cutoff: tracker.hp_cutoff,
            lp_cutoff: tracker.lp_cutoff,
            stance_threshold: tracker.stance_threshold,
            min_stance_duration: tracker.min_stance_duration,
            g: STANDARD_GRAVITY,
            fusion_alpha: FusionState::DEFAULT_ALPHA,
            voxel_size: 0.05,
            ground_max: thresholds.ground_max,
            body_max: thresholds.body_max,
            agent_height: agent.height,
            agent_radius: agent.radius,
            step_clearance: agent.step_clearance,
        }
    }
}

impl AppConfig {
    /// Loads from `--config`, else `$GAITNAV_CONFIG`, else defaults, then
    /// validates every field through its owning module.
    pub fn load(explicit: Option<&Path>) -> Result<Self, String> {
        let path: Option<PathBuf> = explicit
            .map(Path::to_path_buf)
            .or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from));
        let config = match path {
            Some(path) => {
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| format!("{}: {e}", path.display()))?;
                serde_json::from_str::<AppConfig>(&text)
                    .map_err(|e| format!("{}: {e}", path.display()))?
            }
            None => AppConfig::default(),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), String> {
        self.tracker().validate().map_err(|e| e.to_string())?;
        self.thresholds().validate().map_err(|e| e.to_string())?;
        self.agent().validate().map_err(|e| e.to_string())?;
        FusionState::new(self.fusion_alpha).map_err(|e| e.to_string())?;
        if !(self.voxel_size > 0.0 && self.voxel_size.is_finite()) {
            return Err(format!("voxel_size must be positive, got {}", self.voxel_size));
        }
        Ok(())
    }

    pub fn tracker(&self) -> TrackerConfig {
        TrackerConfig {
            sample_rate: self.sample_rate,
            hp_cutoff: self.hp_cutoff,
            lp_cutoff: self.lp_cutoff,
            stance_threshold: self.stance_threshold,
            min_stance_duration: self.min_stance_duration,
            g: self.g,
        }
    }

    pub fn thresholds(&self) -> HeightThresholds {
        HeightThresholds { ground_max: self.ground_max, body_max: self.body_max }
    }

    pub fn agent(&self) -> AgentProfile {
        AgentProfile {
            height: self.agent_height,
            radius: self.agent_radius,
            step_clearance: self.step_clearance,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        AppConfig::default().validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = serde_json::from_str::<AppConfig>("{\"sample_rate\": 100.0, \"bogus\": 1}");
        assert!(err.is_err());
    }

    #[test]
    fn bad_field_values_are_rejected() {
        let cfg: AppConfig = serde_json::from_str("{\"hp_cutoff\": 100.0}").unwrap();
        assert!(cfg.validate().is_err());
        let cfg: AppConfig = serde_json::from_str("{\"fusion_alpha\": 2.0}").unwrap();
        assert!(cfg.validate().is_err());
    }
}
