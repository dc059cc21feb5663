//! Persistent scene manifests.
//!
//! One JSON file per scene. Paths inside a manifest are relative to the
//! directory holding the manifest. Fields this version does not know about
//! are kept in `extra` maps and written back unchanged, so older stages can
//! pass manifests through without dropping newer annotations.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::CoreError;
use crate::geometry::{CameraIntrinsics, Pose};
use crate::region::BBox2D;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Provenance {
    #[serde(rename = "real")]
    Real,
    #[serde(rename = "synthetic-DR")]
    SyntheticDr,
    #[serde(rename = "synthetic-DS")]
    SyntheticDs,
    #[serde(rename = "adapted")]
    Adapted,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Real => "real",
            Provenance::SyntheticDr => "synthetic-DR",
            Provenance::SyntheticDs => "synthetic-DS",
            Provenance::Adapted => "adapted",
        })
    }
}

/// Per-instance annotation attached to a view.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceLabel {
    pub class_name: String,
    pub instance_id: u32,
    /// Object pose in the camera frame.
    pub pose: Pose,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<BBox2D>,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewRecord {
    pub scene_id: String,
    pub view_id: u32,
    pub image: String,
    /// Camera-to-world pose.
    pub camera_pose: Pose,
    pub intrinsics: CameraIntrinsics,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub instances: Vec<InstanceLabel>,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneManifest {
    pub schema: u32,
    pub scene_id: String,
    pub provenance: Provenance,
    pub classes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    pub views: Vec<ViewRecord>,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

impl InstanceLabel {
    pub fn new(class_name: impl Into<String>, instance_id: u32, pose: Pose) -> Self {
        Self {
            class_name: class_name.into(),
            instance_id,
            pose,
            mask: None,
            bbox: None,
            extra: BTreeMap::new(),
        }
    }
}

impl ViewRecord {
    pub fn new(
        scene_id: impl Into<String>,
        view_id: u32,
        image: impl Into<String>,
        camera_pose: Pose,
        intrinsics: CameraIntrinsics,
    ) -> Self {
        Self {
            scene_id: scene_id.into(),
            view_id,
            image: image.into(),
            camera_pose,
            intrinsics,
            instances: Vec::new(),
            extra: BTreeMap::new(),
        }
    }
}

/// Non-fatal problem found while checking a manifest against the filesystem.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ValidationWarning {
    MissingImage { view_id: u32, path: PathBuf },
    MissingMask { view_id: u32, instance_id: u32, path: PathBuf },
}

impl fmt::Display for ValidationWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValidationWarning::MissingImage { view_id, path } => {
                write!(f, "view {view_id}: image {} not found", path.display())
            }
            ValidationWarning::MissingMask {
                view_id,
                instance_id,
                path,
            } => write!(
                f,
                "view {view_id} instance {instance_id}: mask {} not found",
                path.display()
            ),
        }
    }
}

impl SceneManifest {
    pub fn new(scene_id: impl Into<String>, provenance: Provenance) -> Self {
        Self {
            schema: SCHEMA_VERSION,
            scene_id: scene_id.into(),
            provenance,
            classes: Vec::new(),
            config_hash: None,
            views: Vec::new(),
            extra: BTreeMap::new(),
        }
    }

    pub fn validate(&self) -> Result<(), CoreError> {
        if self.schema != SCHEMA_VERSION {
            return Err(CoreError::InvalidManifest(format!(
                "unsupported schema {} (expected {SCHEMA_VERSION})",
                self.schema
            )));
        }
        if self.views.is_empty() {
            return Err(CoreError::InvalidManifest(format!(
                "scene {} has no views",
                self.scene_id
            )));
        }
        let mut seen = BTreeSet::new();
        for view in &self.views {
            if view.scene_id != self.scene_id {
                return Err(CoreError::InvalidManifest(format!(
                    "view {} belongs to scene {} inside manifest for {}",
                    view.view_id, view.scene_id, self.scene_id
                )));
            }
            if !seen.insert(view.view_id) {
                return Err(CoreError::InvalidManifest(format!(
                    "duplicate view id {} in scene {}",
                    view.view_id, self.scene_id
                )));
            }
            view.intrinsics.validate()?;
        }
        Ok(())
    }

    pub fn view(&self, view_id: u32) -> Option<&ViewRecord> {
        self.views.iter().find(|v| v.view_id == view_id)
    }

    /// Serialized form written by [`save`](Self::save).
    pub fn to_json(&self) -> Result<String, CoreError> {
        self.validate()?;
        Ok(serde_json::to_string_pretty(self).expect("manifest serializes") + "\n")
    }

    pub fn save(&self, path: &Path) -> Result<(), CoreError> {
        let text = self.to_json()?;
        write_text(path, &text)
    }

    pub fn from_json(text: &str, origin: &Path) -> Result<Self, CoreError> {
        let manifest: SceneManifest = parse_json(text, origin)?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn load(path: &Path) -> Result<Self, CoreError> {
        let text = std::fs::read_to_string(path).map_err(|e| CoreError::io(path, e))?;
        Self::from_json(&text, path)
    }

    /// Loads and reports referenced files that do not exist.
    pub fn load_checked(path: &Path) -> Result<(Self, Vec<ValidationWarning>), CoreError> {
        let manifest = Self::load(path)?;
        let warnings = manifest.check_files(base_dir(path));
        Ok((manifest, warnings))
    }

    pub fn check_files(&self, base: &Path) -> Vec<ValidationWarning> {
        let mut warnings = Vec::new();
        for view in &self.views {
            let image = base.join(&view.image);
            if !image.exists() {
                warnings.push(ValidationWarning::MissingImage {
                    view_id: view.view_id,
                    path: image,
                });
            }
            for inst in &view.instances {
                if let Some(mask) = &inst.mask {
                    let mask = base.join(mask);
                    if !mask.exists() {
                        warnings.push(ValidationWarning::MissingMask {
                            view_id: view.view_id,
                            instance_id: inst.instance_id,
                            path: mask,
                        });
                    }
                }
            }
        }
        warnings
    }

    /// All per-instance labels, in view order, as JSON. Used to check that a
    /// pipeline stage left annotations untouched.
    pub fn labels_json(&self) -> String {
        let labels: Vec<(&str, u32, &Vec<InstanceLabel>)> = self
            .views
            .iter()
            .map(|v| (v.scene_id.as_str(), v.view_id, &v.instances))
            .collect();
        serde_json::to_string(&labels).expect("labels serialize")
    }
}

/// List of scene manifests making up one dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetIndex {
    pub schema: u32,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    /// Manifest paths relative to the index file.
    pub manifests: Vec<String>,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

impl DatasetIndex {
    pub fn new(provenance: Provenance) -> Self {
        Self {
            schema: SCHEMA_VERSION,
            provenance,
            config_hash: None,
            manifests: Vec::new(),
            extra: BTreeMap::new(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), CoreError> {
        let text = serde_json::to_string_pretty(self).expect("index serializes") + "\n";
        write_text(path, &text)
    }

    pub fn load(path: &Path) -> Result<Self, CoreError> {
        let text = std::fs::read_to_string(path).map_err(|e| CoreError::io(path, e))?;
        parse_json(&text, path)
    }
}

/// Loads either a dataset index or a single scene manifest, returning every
/// scene manifest with the path it was read from.
pub fn load_dataset(path: &Path) -> Result<(Option<DatasetIndex>, Vec<(PathBuf, SceneManifest)>), CoreError> {
    let text = std::fs::read_to_string(path).map_err(|e| CoreError::io(path, e))?;
    let probe: Value = serde_json::from_str(&text).map_err(|e| CoreError::Parse {
        path: path.to_path_buf(),
        field: format!("line {} column {}", e.line(), e.column()),
        message: e.to_string(),
    })?;
    if probe.get("manifests").is_some() {
        let index: DatasetIndex = parse_json(&text, path)?;
        let base = base_dir(path);
        let scenes = index
            .manifests
            .iter()
            .map(|rel| {
                let p = base.join(rel);
                SceneManifest::load(&p).map(|m| (p, m))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok((Some(index), scenes))
    } else {
        let manifest = SceneManifest::from_json(&text, path)?;
        Ok((None, vec![(path.to_path_buf(), manifest)]))
    }
}

pub fn base_dir(path: &Path) -> &Path {
    path.parent().unwrap_or_else(|| Path::new("."))
}

/// Path of `target` relative to `base`, assuming `target` lives below it.
pub fn relative_to(target: &Path, base: &Path) -> String {
    target
        .strip_prefix(base)
        .unwrap_or(target)
        .to_string_lossy()
        .replace('\\', "/")
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<(), CoreError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| CoreError::io(parent, e))?;
        }
    }
    std::fs::write(path, text).map_err(|e| CoreError::io(path, e))
}

/// Deserializes JSON, reporting the failing field path and line/column.
pub fn parse_json<T: DeserializeOwned>(text: &str, origin: &Path) -> Result<T, CoreError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|err| {
        let field = err.path().to_string();
        let inner = err.into_inner();
        CoreError::Parse {
            path: origin.to_path_buf(),
            field: format!("{field} (line {} column {})", inner.line(), inner.column()),
            message: inner.to_string(),
        }
    })
}
