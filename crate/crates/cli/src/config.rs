//! Run configuration shared by all subcommands.

use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use serde::{Deserialize, Serialize};

use uavstate::budget::BudgetInput;
use uavstate::filter::FilterConfig;
use uavstate::measure::{MeasureConfig, VehicleDims};
use uavstate::stabilize::RobustFitConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub camera: CameraConfig,
    /// Pixel ambiguity of GCP and corner locations, pixels per axis.
    pub zeta_px: f64,
    /// Dimensions of the tracked vehicle when known; `measure.generic_dims` otherwise.
    pub vehicle: Option<VehicleDims>,
    pub measure: MeasureConfig,
    /// Derived from the mapping's α and `zeta_px` when absent.
    pub filter: Option<FilterConfig>,
    pub stabilization: RobustFitConfig,
    pub sync: SyncConfig,
    /// Used by `errors` only.
    pub operating_point: OperatingPoint,
    pub paths: Paths,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            camera: CameraConfig::default(),
            zeta_px: 1.0,
            vehicle: None,
            measure: MeasureConfig::default(),
            filter: None,
            stabilization: RobustFitConfig::default(),
            sync: SyncConfig::default(),
            operating_point: OperatingPoint::default(),
            paths: Paths::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraConfig {
    pub resolution: [f64; 2],
    pub hover_altitude_m: f64,
    /// Only read by `errors` when no mapping is given; tracking takes α from the mapping.
    pub alpha_m_per_px: f64,
}

impl Default for CameraConfig {
    fn default() -> Self {
        Self { resolution: [1920.0, 1080.0], hover_altitude_m: 50.0, alpha_m_per_px: 0.0334 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyncConfig {
    pub fps: f64,
    /// Place the time base inside the band allowed by the LED exposure lag
    /// instead of using the plain least-squares intercept.
    pub lag_correction: bool,
}

impl Default for SyncConfig {
    fn default() -> Self {
        Self { fps: 50.0, lag_correction: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OperatingPoint {
    pub speed_mps: f64,
    pub accel_mps2: f64,
    pub height_range_m: [f64; 2],
}

impl Default for OperatingPoint {
    fn default() -> Self {
        Self { speed_mps: 50.0 / 3.6, accel_mps2: 5.0, height_range_m: [0.11, 1.85] }
    }
}

/// Input files. Relative paths are resolved against the config file's directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub gcps: Option<PathBuf>,
    pub matches: Option<PathBuf>,
    pub detections: Option<PathBuf>,
    pub mapping: Option<PathBuf>,
    pub stab: Option<PathBuf>,
    pub led_events: Option<PathBuf>,
    pub states: Option<PathBuf>,
    pub reference: Option<PathBuf>,
}

/// A loaded config and the directory its relative paths refer to.
#[derive(Debug, Clone, Default)]
pub struct Loaded {
    pub cfg: PipelineConfig,
    base: PathBuf,
}

impl Loaded {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let cfg: PipelineConfig = uavstate::io::read_json(path)?;
        cfg.validate()?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { cfg, base })
    }

    /// Flag value if given, else the config entry, else an error naming both.
    pub fn input(&self, flag: Option<&Path>, entry: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
        if let Some(p) = flag {
            return Ok(p.to_path_buf());
        }
        match entry {
            Some(p) => Ok(self.base.join(p)),
            None => bail!("missing input: pass --{} or set paths.{} in the config", name.replace('_', "-"), name),
        }
    }

    pub fn optional(&self, flag: Option<&Path>, entry: &Option<PathBuf>) -> Option<PathBuf> {
        flag.map(Path::to_path_buf).or_else(|| entry.as_ref().map(|p| self.base.join(p)))
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let [rx, ry] = self.camera.resolution;
        if !(rx > 0.0 && ry > 0.0 && self.camera.hover_altitude_m > 0.0 && self.camera.alpha_m_per_px > 0.0) {
            bail!("camera: resolution, hover_altitude_m and alpha_m_per_px must be positive");
        }
        if !(self.zeta_px >= 0.0 && self.zeta_px.is_finite()) {
            bail!("zeta_px must be finite and non-negative");
        }
        if !self.sync.fps.is_finite() || self.sync.fps <= 0.0 {
            bail!("sync.fps must be positive");
        }
        if let Some(d) = &self.vehicle {
            d.validate()?;
        }
        self.measure.generic_dims.validate()?;
        if let Some(f) = &self.filter {
            f.validate()?;
        }
        Ok(())
    }

    pub fn budget_input(&self, alpha: f64) -> BudgetInput {
        let op = &self.operating_point;
        BudgetInput {
            resolution: self.camera.resolution,
            hover_altitude_m: self.camera.hover_altitude_m,
            alpha_m_per_px: alpha,
            zeta_px: self.zeta_px,
            clearance_m: self.vehicle.unwrap_or(self.measure.generic_dims).clearance,
            height_range_m: op.height_range_m,
            fps: self.sync.fps,
            speed_mps: op.speed_mps,
            accel_mps2: op.accel_mps2,
            gcp_baseline_px: None,
        }
    }

    /// Filter settings for a mapping of resolution `alpha`.
    pub fn filter_for(&self, alpha: f64) -> FilterConfig {
        self.filter.unwrap_or_else(|| FilterConfig::for_resolution(alpha, self.zeta_px.max(0.5)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_default() {
        let cfg: PipelineConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(cfg, PipelineConfig::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"zeta": 1}"#).is_err());
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"sync": {"fps": 50, "lag": true}}"#).is_err());
    }

    #[test]
    fn flag_overrides_config_and_relative_paths_follow_config() {
        let mut l = Loaded { base: PathBuf::from("/data/run1"), ..Loaded::default() };
        l.cfg.paths.gcps = Some("gcps.csv".into());
        let p = l.input(None, &l.cfg.paths.gcps, "gcps").unwrap();
        assert_eq!(p, Path::new("/data/run1/gcps.csv"));
        let p = l.input(Some(Path::new("other.csv")), &l.cfg.paths.gcps, "gcps").unwrap();
        assert_eq!(p, Path::new("other.csv"));
        let err = l.input(None, &None, "led_events").unwrap_err().to_string();
        assert!(err.contains("--led-events") && err.contains("paths.led_events"), "{err}");
    }
}
