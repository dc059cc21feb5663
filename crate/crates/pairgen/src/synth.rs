//! Synthetic scene generators.
//!
//! DR scenes scatter instances at random poses inside the camera frustum,
//! ignoring gravity, with random background, light and distractors. DS
//! scenes rest instances on a support plane in one of their stable uprights
//! with a random yaw, keeping footprints disjoint.

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use instyle_core::io::save_rgb;
use instyle_core::par::par_map;
use instyle_core::{
    bbox_from_mask, CameraIntrinsics, InstanceLabel, MeshModel, Pose, Provenance, SceneManifest, ViewRecord,
};
use instyle_render::{mask_for_instance, Camera, EnvironmentPiece, Light, Renderer, SceneGraph, SceneInstance, ViewKey};
use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::capture::top_down_pose;
use crate::error::PairgenError;
use crate::filter::DistanceRange;
use crate::library::ModelLibrary;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DrConfig {
    #[serde(default = "default_max_instances")]
    pub max_instances: usize,
    #[serde(default)]
    pub distance: DistanceRange,
    #[serde(default = "default_max_distractors")]
    pub max_distractors: usize,
}

fn default_max_instances() -> usize {
    5
}

fn default_max_distractors() -> usize {
    3
}

impl Default for DrConfig {
    fn default() -> Self {
        Self {
            max_instances: default_max_instances(),
            distance: DistanceRange::default(),
            max_distractors: default_max_distractors(),
        }
    }
}

/// Horizontal rectangle at `height` (world z up) on which DS objects rest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupportPlane {
    pub height: f64,
    pub center: [f64; 2],
    pub half_extent: [f64; 2],
    pub color: [f64; 3],
}

impl Default for SupportPlane {
    fn default() -> Self {
        Self {
            height: 0.0,
            center: [0.0, 0.0],
            half_extent: [0.3, 0.3],
            color: [0.5, 0.5, 0.5],
        }
    }
}

impl SupportPlane {
    pub fn piece(&self) -> EnvironmentPiece {
        let mesh = MeshModel::quad(
            "support_plane",
            2.0 * self.half_extent[0],
            2.0 * self.half_extent[1],
            self.color,
        );
        EnvironmentPiece {
            mesh: Arc::new(mesh),
            pose: Pose::from_translation(Vector3::new(self.center[0], self.center[1], self.height)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DsConfig {
    #[serde(default = "default_max_instances")]
    pub max_instances: usize,
    /// Yaw is drawn uniformly from `[-max_yaw, max_yaw]`.
    #[serde(default = "default_max_yaw")]
    pub max_yaw: f64,
    /// Placement attempts per instance before it is dropped.
    #[serde(default = "default_attempts")]
    pub max_attempts: usize,
    /// Camera height range above the plane for DS views.
    #[serde(default = "default_camera_height")]
    pub camera_height: [f64; 2],
}

fn default_max_yaw() -> f64 {
    PI
}

fn default_attempts() -> usize {
    50
}

fn default_camera_height() -> [f64; 2] {
    [0.4, 0.6]
}

impl Default for DsConfig {
    fn default() -> Self {
        Self {
            max_instances: default_max_instances(),
            max_yaw: default_max_yaw(),
            max_attempts: default_attempts(),
            camera_height: default_camera_height(),
        }
    }
}

fn random_rotation(rng: &mut impl Rng) -> UnitQuaternion<f64> {
    let q: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(rng));
    UnitQuaternion::from_quaternion(Quaternion::new(q[0], q[1], q[2], q[3]))
}

fn random_color(rng: &mut impl Rng) -> [f64; 3] {
    std::array::from_fn(|_| rng.random_range(0.05..0.95))
}

/// Random point inside the frustum of `intrinsics` at a distance drawn
/// uniformly from `range`.
fn frustum_point(intrinsics: &CameraIntrinsics, range: &DistanceRange, rng: &mut impl Rng) -> Vector3<f64> {
    let u = rng.random_range(0.0..intrinsics.width as f64);
    let v = rng.random_range(0.0..intrinsics.height as f64);
    let d = rng.random_range(range.d_min..=range.d_max);
    intrinsics.ray(u, v).normalize() * d
}

/// DR scene in the camera frame (the camera sits at the world origin).
pub fn generate_dr_scene(
    library: &ModelLibrary,
    class_name: &str,
    intrinsics: &CameraIntrinsics,
    config: &DrConfig,
    rng: &mut impl Rng,
) -> Result<SceneGraph, PairgenError> {
    config.distance.validate()?;
    if config.max_instances == 0 {
        return Err(PairgenError::InvalidConfig("max_instances must be >= 1".into()));
    }
    let mesh = library.mesh(class_name)?;
    let n = rng.random_range(1..=config.max_instances);
    let mut scene = SceneGraph {
        background: random_color(rng),
        ..Default::default()
    };
    for id in 1..=n as u32 {
        let t = frustum_point(intrinsics, &config.distance, rng);
        scene.instances.push(SceneInstance {
            mesh: mesh.clone(),
            pose: Pose::new(random_rotation(rng), t),
            instance_id: id,
        });
    }
    for _ in 0..rng.random_range(0..=config.max_distractors) {
        let size: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.03..0.12));
        let color = random_color(rng);
        let t = frustum_point(intrinsics, &config.distance, rng);
        scene.environment.push(EnvironmentPiece {
            mesh: Arc::new(MeshModel::cuboid("distractor", size, color)),
            pose: Pose::new(random_rotation(rng), t),
        });
    }
    let mut dir: Vector3<f64> = Vector3::from_fn(|_, _| StandardNormal.sample(rng));
    // keep the light on the camera's side so visible faces are lit
    dir.z = -dir.z.abs();
    scene.light = Light {
        direction: dir.normalize().into(),
        ambient: rng.random_range(0.2..0.5),
    };
    Ok(scene)
}

/// Radius of the smallest vertical cylinder about the object origin that
/// contains the rotated model.
pub fn footprint_radius(mesh: &MeshModel, rotation: &UnitQuaternion<f64>) -> f64 {
    mesh.vertices
        .iter()
        .map(|v| {
            let p = rotation * Vector3::from(*v);
            (p.x * p.x + p.y * p.y).sqrt()
        })
        .fold(0.0, f64::max)
}

/// Lowest world z of the model under `rotation` with the origin at z = 0.
pub fn lowest_point(mesh: &MeshModel, rotation: &UnitQuaternion<f64>) -> f64 {
    mesh.vertices
        .iter()
        .map(|v| (rotation * Vector3::from(*v)).z)
        .fold(f64::INFINITY, f64::min)
}

/// DS scene in world coordinates (z up) with the support plane as its only
/// environment piece.
pub fn generate_ds_scene(
    library: &ModelLibrary,
    class_name: &str,
    plane: &SupportPlane,
    config: &DsConfig,
    rng: &mut impl Rng,
) -> Result<SceneGraph, PairgenError> {
    if config.max_instances == 0 {
        return Err(PairgenError::InvalidConfig("max_instances must be >= 1".into()));
    }
    let entry = library.get(class_name)?;
    let n = rng.random_range(1..=config.max_instances);
    let mut scene = SceneGraph {
        environment: vec![plane.piece()],
        background: [0.2, 0.2, 0.2],
        ..Default::default()
    };
    let mut placed: Vec<([f64; 2], f64)> = Vec::new();
    for _ in 0..n {
        for _ in 0..config.max_attempts {
            let upright = entry.uprights[rng.random_range(0..entry.uprights.len())];
            let yaw = if config.max_yaw > 0.0 {
                rng.random_range(-config.max_yaw..=config.max_yaw)
            } else {
                0.0
            };
            let rotation = if yaw == 0.0 {
                upright
            } else {
                UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw) * upright
            };
            let r = footprint_radius(&entry.mesh, &rotation);
            let (hx, hy) = (plane.half_extent[0] - r, plane.half_extent[1] - r);
            if hx < 0.0 || hy < 0.0 {
                break;
            }
            let xy = [
                plane.center[0] + rng.random_range(-hx..=hx),
                plane.center[1] + rng.random_range(-hy..=hy),
            ];
            let clear = placed
                .iter()
                .all(|(c, rc)| ((c[0] - xy[0]).powi(2) + (c[1] - xy[1]).powi(2)).sqrt() >= r + rc);
            if !clear {
                continue;
            }
            let z = plane.height - lowest_point(&entry.mesh, &rotation);
            placed.push((xy, r));
            scene.instances.push(SceneInstance {
                mesh: entry.mesh.clone(),
                pose: Pose::new(rotation, Vector3::new(xy[0], xy[1], z)),
                instance_id: placed.len() as u32,
            });
            break;
        }
    }
    Ok(scene)
}

/// Top-down DS camera above a random point of the plane.
pub fn sample_ds_camera(plane: &SupportPlane, config: &DsConfig, rng: &mut impl Rng) -> Pose {
    let [lo, hi] = config.camera_height;
    let h = if hi > lo { rng.random_range(lo..=hi) } else { lo };
    let x = plane.center[0] + rng.random_range(-plane.half_extent[0]..=plane.half_extent[0]);
    let y = plane.center[1] + rng.random_range(-plane.half_extent[1]..=plane.half_extent[1]);
    top_down_pose(x, y, plane.height + h)
}

/// One synthetic image to render: a scene and the camera viewing it.
#[derive(Clone, Debug)]
pub struct SyntheticSample {
    pub scene: SceneGraph,
    pub camera: Camera,
}

/// Renders `samples` into a dataset under `out_dir`: `images/NNNNN.png`,
/// `masks/NNNNN_ID.png` and labels (camera-frame pose, mask, tight box) for
/// every visible instance. Each sample becomes one view of a manifest
/// named `name`.
pub fn write_synthetic_dataset(
    name: &str,
    provenance: Provenance,
    samples: &[SyntheticSample],
    renderer: &dyn Renderer,
    out_dir: &Path,
    workers: usize,
) -> Result<SceneManifest, PairgenError> {
    let indexed: Vec<(u32, &SyntheticSample)> = samples.iter().enumerate().map(|(i, s)| (i as u32, s)).collect();
    let views = par_map(&indexed, workers, |&(view_id, sample)| {
        let out = renderer.render(&sample.scene, &sample.camera, &ViewKey::new(name, view_id))?;
        let image = format!("images/{view_id:05}.png");
        save_rgb(&out.rgb, &out_dir.join(&image))?;
        let world_to_camera = sample.camera.pose.inverse();
        let mut view = ViewRecord::new(name, view_id, image, sample.camera.pose, sample.camera.intrinsics);
        for inst in &sample.scene.instances {
            let mask = mask_for_instance(&out, inst.instance_id)?;
            if mask.is_empty() {
                continue;
            }
            let rel = format!("masks/{view_id:05}_{}.png", inst.instance_id);
            mask.save_png(&out_dir.join(&rel))?;
            let mut label = InstanceLabel::new(inst.mesh.class_name.clone(), inst.instance_id, world_to_camera * inst.pose);
            label.mask = Some(rel);
            label.bbox = Some(bbox_from_mask(&mask)?);
            view.instances.push(label);
        }
        Ok::<_, PairgenError>(view)
    })?;
    let mut manifest = SceneManifest::new(name, provenance);
    let mut classes: Vec<String> = samples
        .iter()
        .flat_map(|s| s.scene.instances.iter().map(|i| i.mesh.class_name.clone()))
        .collect();
    classes.sort();
    classes.dedup();
    manifest.classes = classes;
    manifest.views = views;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use instyle_core::rng::substream;

    fn k() -> CameraIntrinsics {
        CameraIntrinsics::new(200.0, 200.0, 80.0, 60.0, 160, 120).unwrap()
    }

    #[test]
    fn dr_replays_and_stays_in_range() {
        let lib = ModelLibrary::builtin();
        let cfg = DrConfig::default();
        for s in 0..50 {
            let a = generate_dr_scene(&lib, "mug", &k(), &cfg, &mut substream(s, &["dr"])).unwrap();
            let b = generate_dr_scene(&lib, "mug", &k(), &cfg, &mut substream(s, &["dr"])).unwrap();
            assert_eq!(a.instances.len(), b.instances.len());
            assert!((1..=5).contains(&a.instances.len()));
            for (x, y) in a.instances.iter().zip(&b.instances) {
                assert_eq!(x.pose, y.pose);
                let d = x.pose.translation().norm();
                assert!(cfg.distance.contains(d) || (d - cfg.distance.d_max).abs() < 1e-12);
                assert!(x.pose.translation().z > 0.0);
            }
            assert_eq!(a.background, b.background);
        }
    }

    #[test]
    fn ds_instances_touch_plane() {
        let lib = ModelLibrary::builtin();
        let plane = SupportPlane {
            height: 0.7,
            ..Default::default()
        };
        for s in 0..50 {
            let scene = generate_ds_scene(&lib, "cracker_box", &plane, &DsConfig::default(), &mut substream(s, &["ds"])).unwrap();
            for inst in &scene.instances {
                let min_z = inst
                    .mesh
                    .vertices
                    .iter()
                    .map(|v| inst.pose.transform_point(&Vector3::from(*v)).z)
                    .fold(f64::INFINITY, f64::min);
                assert!((min_z - 0.7).abs() < 1e-6);
            }
        }
    }
}
