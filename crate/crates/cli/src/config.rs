//! Pipeline configuration loaded from TOML.

use std::path::{Path, PathBuf};

use instyle_core::CameraIntrinsics;
use instyle_evalkit::ReportSettings;
use instyle_pairgen::{DistanceRange, DrConfig, DsConfig, MockProviderConfig, SupportPlane, TemplateMatcherConfig};
use instyle_render::StyleGap;
use instyle_stylekit::TransNetConfig;
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// Model library JSON; the built-in catalogue when absent.
    pub models: Option<PathBuf>,
    pub output: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            models: None,
            output: PathBuf::from("runs/default"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObjectsConfig {
    pub classes: Vec<String>,
    /// Keep only the first resting orientation of every model.
    pub first_upright_only: bool,
}

impl Default for ObjectsConfig {
    fn default() -> Self {
        Self {
            classes: vec!["puck".into()],
            first_upright_only: false,
        }
    }
}

/// Pinhole camera shared by every stage, principal point at the image center.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraConfig {
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
}

impl Default for CameraConfig {
    fn default() -> Self {
        Self {
            width: 320,
            height: 240,
            fx: 400.0,
            fy: 400.0,
        }
    }
}

impl CameraConfig {
    pub fn intrinsics(&self) -> Result<CameraIntrinsics, ConfigError> {
        CameraIntrinsics::new(
            self.fx,
            self.fy,
            (self.width as f64 - 1.0) / 2.0,
            (self.height as f64 - 1.0) / 2.0,
            self.width,
            self.height,
        )
        .map_err(|e| ConfigError(format!("camera: {e}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CaptureConfig {
    pub train_scenes: usize,
    /// Held-out scenes used only by `eval`.
    pub test_scenes: usize,
    pub max_objects: usize,
    pub max_yaw: f64,
    /// Gantry grid `[nx, ny]`; views per scene is `nx * ny`.
    pub grid: [usize; 2],
    pub spacing: [f64; 2],
    pub height: f64,
    /// Valid camera-to-object distances for the mismatch filter.
    pub distance: DistanceRange,
}

impl Default for CaptureConfig {
    fn default() -> Self {
        Self {
            train_scenes: 10,
            test_scenes: 5,
            max_objects: 3,
            max_yaw: std::f64::consts::PI,
            grid: [4, 4],
            spacing: [0.05, 0.05],
            height: 0.5,
            distance: DistanceRange::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub dr_images: usize,
    pub ds_images: usize,
    pub dr: DrConfig,
    pub ds: DsConfig,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            dr_images: 2500,
            ds_images: 2500,
            dr: DrConfig::default(),
            ds: DsConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransferConfig {
    pub resolution: usize,
}

impl Default for TransferConfig {
    fn default() -> Self {
        Self { resolution: 512 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub report: ReportSettings,
    pub template: TemplateMatcherConfig,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub paths: PathsConfig,
    pub objects: ObjectsConfig,
    pub camera: CameraConfig,
    pub table: SupportPlane,
    pub capture: CaptureConfig,
    /// Appearance of the simulated real world relative to the renderer.
    pub real_style: StyleGap,
    pub synth: SynthConfig,
    pub provider: MockProviderConfig,
    pub transnet: TransNetConfig,
    pub transfer: TransferConfig,
    pub eval: EvalConfig,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        let mut config: Self = toml::from_str(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        if let Some(models) = &config.paths.models {
            if models.is_relative() {
                let dir = path.parent().unwrap_or(Path::new("."));
                config.paths.models = Some(dir.join(models));
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError(m));
        if self.objects.classes.is_empty() {
            return bad("objects.classes is empty".into());
        }
        self.camera.intrinsics()?;
        self.capture
            .distance
            .validate()
            .map_err(|e| ConfigError(format!("capture.distance: {e}")))?;
        if self.capture.grid[0] == 0 || self.capture.grid[1] == 0 {
            return bad("capture.grid must be at least 1 x 1".into());
        }
        if self.capture.max_objects == 0 {
            return bad("capture.max_objects must be >= 1".into());
        }
        if !(self.capture.height > 0.0) {
            return bad("capture.height must be > 0".into());
        }
        self.provider
            .validate()
            .map_err(|e| ConfigError(format!("provider: {e}")))?;
        self.transnet
            .validate()
            .map_err(|e| ConfigError(format!("transnet: {e}")))?;
        if self.transfer.resolution == 0 || self.transfer.resolution % 2 != 0 {
            return bad(format!("transfer.resolution {} must be even and > 0", self.transfer.resolution));
        }
        Ok(())
    }

    /// Hash of everything that affects artifacts; output locations excluded.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.paths.output = PathBuf::new();
        instyle_core::config_hash(&c)
    }
}
