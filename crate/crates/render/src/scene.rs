use std::collections::BTreeSet;
use std::sync::Arc;

use image::RgbImage;
use instyle_core::{CameraIntrinsics, MeshModel, Pose};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::RenderError;

/// A target object placed in the world.
#[derive(Clone, Debug)]
pub struct SceneInstance {
    pub mesh: Arc<MeshModel>,
    pub pose: Pose,
    /// Nonzero; 0 is reserved for "no instance" in id maps.
    pub instance_id: u32,
}

/// Geometry that occludes but is never labeled (tables, walls, distractors).
#[derive(Clone, Debug)]
pub struct EnvironmentPiece {
    pub mesh: Arc<MeshModel>,
    pub pose: Pose,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Light {
    /// World-frame unit vector pointing from surfaces toward the light.
    pub direction: [f64; 3],
    pub ambient: f64,
}

impl Default for Light {
    fn default() -> Self {
        Self {
            direction: [0.0, 0.0, 1.0],
            ambient: 0.35,
        }
    }
}

impl Light {
    pub fn direction(&self) -> Vector3<f64> {
        Vector3::from(self.direction).normalize()
    }
}

#[derive(Clone, Debug, Default)]
pub struct SceneGraph {
    pub instances: Vec<SceneInstance>,
    pub environment: Vec<EnvironmentPiece>,
    pub background: [f64; 3],
    pub light: Light,
}

impl SceneGraph {
    pub fn validate(&self) -> Result<(), RenderError> {
        let mut ids = BTreeSet::new();
        for inst in &self.instances {
            if inst.instance_id == 0 {
                return Err(RenderError::InvalidScene("instance id 0 is reserved".into()));
            }
            if !ids.insert(inst.instance_id) {
                return Err(RenderError::InvalidScene(format!(
                    "duplicate instance id {}",
                    inst.instance_id
                )));
            }
            if !inst.pose.is_valid() {
                return Err(RenderError::InvalidScene(format!(
                    "instance {} has an invalid pose",
                    inst.instance_id
                )));
            }
        }
        if self.environment.iter().any(|e| !e.pose.is_valid()) {
            return Err(RenderError::InvalidScene("environment piece with invalid pose".into()));
        }
        Ok(())
    }

    pub fn instance(&self, instance_id: u32) -> Option<&SceneInstance> {
        self.instances.iter().find(|i| i.instance_id == instance_id)
    }

    pub fn next_instance_id(&self) -> u32 {
        self.instances.iter().map(|i| i.instance_id).max().unwrap_or(0) + 1
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Camera {
    /// Camera-to-world.
    pub pose: Pose,
    pub intrinsics: CameraIntrinsics,
}

impl Camera {
    pub fn new(pose: Pose, intrinsics: CameraIntrinsics) -> Self {
        Self { pose, intrinsics }
    }
}

/// Identity of a rendered image, used to key stochastic backends.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ViewKey {
    pub scene_id: String,
    pub view_id: u32,
}

impl ViewKey {
    pub fn new(scene_id: impl Into<String>, view_id: u32) -> Self {
        Self {
            scene_id: scene_id.into(),
            view_id,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RenderedInstance {
    pub instance_id: u32,
    pub class_name: String,
}

/// RGB, per-pixel instance id (0 = none) and depth in meters (0 = no
/// surface), all at the camera resolution.
#[derive(Clone, Debug, PartialEq)]
pub struct RenderOutput {
    pub rgb: RgbImage,
    pub ids: Vec<u32>,
    pub depth: Vec<f32>,
    /// Every instance of the scene, visible or not.
    pub instances: Vec<RenderedInstance>,
}

impl RenderOutput {
    pub fn width(&self) -> u32 {
        self.rgb.width()
    }

    pub fn height(&self) -> u32 {
        self.rgb.height()
    }

    pub fn id_at(&self, x: u32, y: u32) -> u32 {
        self.ids[(y * self.width() + x) as usize]
    }

    pub fn depth_at(&self, x: u32, y: u32) -> f32 {
        self.depth[(y * self.width() + x) as usize]
    }

    pub fn class_of(&self, instance_id: u32) -> Option<&str> {
        self.instances
            .iter()
            .find(|i| i.instance_id == instance_id)
            .map(|i| i.class_name.as_str())
    }
}
