//! Simulated multi-view capture.

use std::collections::BTreeSet;
use std::path::Path;

use instyle_core::io::save_rgb;
use instyle_core::par::par_map;
use instyle_core::{bbox_from_mask, look_at, CameraIntrinsics, InstanceLabel, Pose, Provenance, SceneManifest, ViewRecord};
use instyle_render::{mask_for_instance, Camera, Renderer, SceneGraph, ViewKey};
use nalgebra::Vector3;

use crate::error::PairgenError;

/// Camera `height` meters above `(x, y)` looking straight down (world z up),
/// image x along world +x and image y along world -y.
pub fn top_down_pose(x: f64, y: f64, height: f64) -> Pose {
    Pose::from_parts([0.0, 1.0, 0.0, 0.0], [x, y, height]).expect("exact unit quaternion")
}

/// Row-major `nx x ny` grid of top-down cameras centered on `center`.
pub fn gantry_trajectory(center: [f64; 2], height: f64, nx: usize, ny: usize, spacing: [f64; 2]) -> Vec<Pose> {
    let offset = |i: usize, n: usize, s: f64| (i as f64 - (n as f64 - 1.0) / 2.0) * s;
    (0..ny)
        .flat_map(|j| {
            (0..nx).map(move |i| {
                top_down_pose(
                    center[0] + offset(i, nx, spacing[0]),
                    center[1] + offset(j, ny, spacing[1]),
                    height,
                )
            })
        })
        .collect()
}

/// `count` cameras on a horizontal circle of `radius` at `height` above
/// `target`, sweeping `sweep` radians from `start`, all looking at `target`.
pub fn orbit_trajectory(target: [f64; 3], radius: f64, height: f64, count: usize, start: f64, sweep: f64) -> Vec<Pose> {
    let target = Vector3::from(target);
    (0..count)
        .map(|i| {
            let a = start + sweep * i as f64 / count.max(1) as f64;
            let eye = target + Vector3::new(radius * a.cos(), radius * a.sin(), height);
            look_at(eye, target, Vector3::z())
        })
        .collect()
}

/// Renders `scene` from every pose of `trajectory` with `renderer`, writing
/// `images/NNNN.png` under `out_dir`, and returns a "real" manifest.
///
/// Each view records the camera-frame pose and tight box of every visible
/// instance as evaluation ground truth.
pub fn capture_scene(
    scene: &SceneGraph,
    trajectory: &[Pose],
    intrinsics: &CameraIntrinsics,
    renderer: &dyn Renderer,
    scene_id: &str,
    out_dir: &Path,
    workers: usize,
) -> Result<SceneManifest, PairgenError> {
    if trajectory.is_empty() {
        return Err(PairgenError::InvalidConfig("capture trajectory is empty".into()));
    }
    intrinsics.validate()?;
    scene.validate()?;
    let indexed: Vec<(u32, Pose)> = trajectory.iter().enumerate().map(|(i, p)| (i as u32, *p)).collect();
    let views = par_map(&indexed, workers, |&(view_id, pose)| {
        let camera = Camera::new(pose, *intrinsics);
        let out = renderer.render(scene, &camera, &ViewKey::new(scene_id, view_id))?;
        let rel = format!("images/{view_id:04}.png");
        save_rgb(&out.rgb, &out_dir.join(&rel))?;
        let world_to_camera = pose.inverse();
        let mut view = ViewRecord::new(scene_id, view_id, rel, pose, *intrinsics);
        for inst in &scene.instances {
            let mask = mask_for_instance(&out, inst.instance_id)?;
            if mask.is_empty() {
                continue;
            }
            let mut label = InstanceLabel::new(
                inst.mesh.class_name.clone(),
                inst.instance_id,
                world_to_camera * inst.pose,
            );
            label.bbox = Some(bbox_from_mask(&mask)?);
            view.instances.push(label);
        }
        Ok::<_, PairgenError>(view)
    })?;
    let mut manifest = SceneManifest::new(scene_id, Provenance::Real);
    manifest.classes = scene
        .instances
        .iter()
        .map(|i| i.mesh.class_name.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    manifest.views = views;
    manifest.validate()?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn top_down_camera_looks_down() {
        let p = top_down_pose(0.1, 0.2, 0.5);
        let forward = p.rotate_vector(&Vector3::z());
        assert_eq!(forward, Vector3::new(0.0, 0.0, -1.0));
        let right = p.rotate_vector(&Vector3::x());
        assert_eq!(right, Vector3::x());
        // a table point below the camera is 0.5 m in front of it
        let local = p.inverse().transform_point(&Vector3::new(0.1, 0.2, 0.0));
        assert!((local - Vector3::new(0.0, 0.0, 0.5)).norm() < 1e-15);
    }

    #[test]
    fn trajectories_have_requested_size() {
        assert_eq!(gantry_trajectory([0.0, 0.0], 0.5, 4, 3, [0.05, 0.05]).len(), 12);
        let orbit = orbit_trajectory([0.0, 0.0, 0.0], 0.6, 0.4, 20, 0.0, 1.0);
        assert_eq!(orbit.len(), 20);
        for p in &orbit {
            let d = p.translation().norm();
            assert!((d - (0.36f64 + 0.16).sqrt()).abs() < 1e-12);
            let target_cam = p.inverse().transform_point(&Vector3::zeros());
            assert!(target_cam.x.abs() < 1e-9 && target_cam.y.abs() < 1e-9 && target_cam.z > 0.0);
        }
    }
}
