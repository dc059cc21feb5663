//! Pose-estimator outputs and their on-disk log.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::geometry::Pose;
use crate::manifest::{parse_json, write_text, SCHEMA_VERSION};

/// One detected object instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub class_name: String,
    pub instance_id: u32,
    /// Object pose in the camera frame.
    pub pose: Pose,
    pub score: f64,
}

impl Detection {
    pub fn new(class_name: impl Into<String>, instance_id: u32, pose: Pose, score: f64) -> Self {
        Self {
            class_name: class_name.into(),
            instance_id,
            pose,
            score,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.pose.is_valid() && (0.0..=1.0).contains(&self.score)
    }

    /// Distance from the camera center, meters.
    pub fn distance(&self) -> f64 {
        self.pose.translation().norm()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewDetections {
    pub scene_id: String,
    pub view_id: u32,
    pub detections: Vec<Detection>,
}

/// Detections for a set of views, as produced by a pose provider.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DetectionLog {
    pub schema: u32,
    pub entries: Vec<ViewDetections>,
}

impl DetectionLog {
    pub fn new() -> Self {
        Self {
            schema: SCHEMA_VERSION,
            entries: Vec::new(),
        }
    }

    pub fn get(&self, scene_id: &str, view_id: u32) -> Option<&[Detection]> {
        self.entries
            .iter()
            .find(|e| e.scene_id == scene_id && e.view_id == view_id)
            .map(|e| e.detections.as_slice())
    }

    pub fn save(&self, path: &Path) -> Result<(), CoreError> {
        write_text(path, &(serde_json::to_string_pretty(self).expect("log serializes") + "\n"))
    }

    pub fn load(path: &Path) -> Result<Self, CoreError> {
        let text = std::fs::read_to_string(path).map_err(|e| CoreError::io(path, e))?;
        let log: DetectionLog = parse_json(&text, path)?;
        if let Some(bad) = log
            .entries
            .iter()
            .flat_map(|e| e.detections.iter())
            .find(|d| !d.is_valid())
        {
            return Err(CoreError::InvalidPose(format!(
                "detection of {} has score {} outside [0, 1]",
                bad.class_name, bad.score
            )));
        }
        Ok(log)
    }
}
