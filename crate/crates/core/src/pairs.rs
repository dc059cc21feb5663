//! Weakly-paired images: a real view and its rendered counterpart.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::CoreError;
use crate::geometry::Pose;
use crate::manifest::{parse_json, write_text, SCHEMA_VERSION};
use crate::region::BBox2D;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairInstance {
    pub class_name: String,
    pub instance_id: u32,
    /// Visibility mask of the rendered instance (PNG, relative path).
    pub mask: String,
    /// Tight box around the mask.
    pub bbox: BBox2D,
    /// `bbox` expanded by the pairing policy's crop factor and clamped.
    pub crop_box: BBox2D,
    /// Estimated pose, camera frame.
    pub pose: Pose,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeakPair {
    pub scene_id: String,
    pub view_id: u32,
    pub real_image: String,
    pub synthetic_image: String,
    pub width: u32,
    pub height: u32,
    pub instances: Vec<PairInstance>,
}

impl WeakPair {
    pub fn validate(&self) -> Result<(), CoreError> {
        for inst in &self.instances {
            if !inst.bbox.fits(self.width, self.height) || !inst.crop_box.contains(&inst.bbox) {
                return Err(CoreError::InvalidManifest(format!(
                    "pair {}/{} instance {}: boxes out of bounds",
                    self.scene_id, self.view_id, inst.instance_id
                )));
            }
        }
        Ok(())
    }
}

/// Collection of weak pairs, stored as one JSON file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairSet {
    pub schema: u32,
    pub crop_factor: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    pub pairs: Vec<WeakPair>,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

impl PairSet {
    pub fn new(crop_factor: f64, pairs: Vec<WeakPair>) -> Self {
        Self {
            schema: SCHEMA_VERSION,
            crop_factor,
            config_hash: None,
            pairs,
            extra: BTreeMap::new(),
        }
    }

    /// Pairs restricted to the instances of one class; pairs without any
    /// instance of that class are dropped.
    pub fn for_class(&self, class_name: &str) -> Vec<WeakPair> {
        self.pairs
            .iter()
            .filter_map(|p| {
                let instances: Vec<PairInstance> = p
                    .instances
                    .iter()
                    .filter(|i| i.class_name == class_name)
                    .cloned()
                    .collect();
                (!instances.is_empty()).then(|| WeakPair {
                    instances,
                    ..p.clone()
                })
            })
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<(), CoreError> {
        write_text(path, &(serde_json::to_string_pretty(self).expect("pairs serialize") + "\n"))
    }

    pub fn load(path: &Path) -> Result<Self, CoreError> {
        let text = std::fs::read_to_string(path).map_err(|e| CoreError::io(path, e))?;
        let set: PairSet = parse_json(&text, path)?;
        for pair in &set.pairs {
            pair.validate()?;
        }
        Ok(set)
    }
}
