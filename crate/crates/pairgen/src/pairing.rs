//! Weak pairs: each retained real view plus a render of its detections.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use instyle_core::io::save_rgb;
use instyle_core::manifest::relative_to;
use instyle_core::par::par_map;
use instyle_core::{bbox_from_mask, expand_bbox, PairInstance, Pose, SceneManifest, ViewDetections, WeakPair};
use instyle_render::{mask_for_instance, Camera, EnvironmentPiece, Light, Renderer, SceneGraph, SceneInstance, ViewKey};
use log::warn;

use crate::error::PairgenError;
use crate::library::ModelLibrary;

/// The known environment model (world frame) rendered behind detections.
#[derive(Clone, Debug, Default)]
pub struct SyntheticEnvironment {
    pub environment: Vec<EnvironmentPiece>,
    pub background: [f64; 3],
    pub light: Light,
}

/// Builds one weak pair per retained view.
///
/// The synthetic counterpart is rendered in the camera frame: environment
/// pieces are moved by the inverse camera pose and detections are placed at
/// their estimated poses. Paths in the returned pairs are relative to
/// `out_dir`; real image paths are resolved from `manifest_dir`.
/// Instances whose rendered mask is empty are dropped and reported in the
/// returned warning list.
#[allow(clippy::too_many_arguments)]
pub fn build_weak_pairs(
    manifest: &SceneManifest,
    manifest_dir: &Path,
    detections: &[ViewDetections],
    library: &ModelLibrary,
    env: &SyntheticEnvironment,
    renderer: &dyn Renderer,
    crop_factor: f64,
    out_dir: &Path,
    workers: usize,
) -> Result<(Vec<WeakPair>, Vec<String>), PairgenError> {
    if !(crop_factor >= 1.0) {
        return Err(PairgenError::InvalidConfig(format!("crop factor {crop_factor} < 1")));
    }
    let by_view: BTreeMap<u32, &ViewDetections> = detections
        .iter()
        .filter(|d| d.scene_id == manifest.scene_id)
        .map(|d| (d.view_id, d))
        .collect();
    for dets in by_view.values() {
        for d in &dets.detections {
            library.get(&d.class_name)?;
        }
    }
    let results = par_map(&manifest.views, workers, |view| {
        let mut warnings = Vec::new();
        let dets = by_view.get(&view.view_id).map(|d| d.detections.as_slice()).unwrap_or(&[]);
        let ids: BTreeSet<u32> = dets.iter().map(|d| d.instance_id).collect();
        let keep_ids = ids.len() == dets.len() && !ids.contains(&0);
        let world_to_camera = view.camera_pose.inverse();
        let mut scene = SceneGraph {
            environment: env
                .environment
                .iter()
                .map(|p| EnvironmentPiece {
                    mesh: p.mesh.clone(),
                    pose: world_to_camera * p.pose,
                })
                .collect(),
            background: env.background,
            light: Light {
                direction: world_to_camera.rotate_vector(&env.light.direction()).into(),
                ambient: env.light.ambient,
            },
            ..Default::default()
        };
        for (k, d) in dets.iter().enumerate() {
            scene.instances.push(SceneInstance {
                mesh: library.mesh(&d.class_name)?,
                pose: d.pose,
                instance_id: if keep_ids { d.instance_id } else { k as u32 + 1 },
            });
        }
        let camera = Camera::new(Pose::identity(), view.intrinsics);
        let key = ViewKey::new(view.scene_id.clone(), view.view_id);
        let out = renderer.render(&scene, &camera, &key)?;
        let stem = format!("{}_{:04}", view.scene_id, view.view_id);
        let synthetic_rel = format!("synthetic/{stem}.png");
        save_rgb(&out.rgb, &out_dir.join(&synthetic_rel))?;
        let (w, h) = (view.intrinsics.width, view.intrinsics.height);
        let mut instances = Vec::new();
        for inst in &scene.instances {
            let mask = mask_for_instance(&out, inst.instance_id)?;
            if mask.is_empty() {
                warnings.push(format!(
                    "{}/{}: instance {} ({}) not visible in the synthetic render, dropped",
                    view.scene_id, view.view_id, inst.instance_id, inst.mesh.class_name
                ));
                continue;
            }
            let bbox = bbox_from_mask(&mask)?;
            let mask_rel = format!("masks/{stem}_{}.png", inst.instance_id);
            mask.save_png(&out_dir.join(&mask_rel))?;
            instances.push(PairInstance {
                class_name: inst.mesh.class_name.clone(),
                instance_id: inst.instance_id,
                mask: mask_rel,
                bbox,
                crop_box: expand_bbox(&bbox, crop_factor, w, h),
                pose: inst.pose,
            });
        }
        let pair = WeakPair {
            scene_id: view.scene_id.clone(),
            view_id: view.view_id,
            real_image: relative_path(&manifest_dir.join(&view.image), out_dir),
            synthetic_image: synthetic_rel,
            width: w,
            height: h,
            instances,
        };
        pair.validate()?;
        Ok::<_, PairgenError>((pair, warnings))
    })?;
    let mut pairs = Vec::new();
    let mut warnings = Vec::new();
    for (pair, w) in results {
        for msg in &w {
            warn!("{msg}");
        }
        warnings.extend(w);
        if !pair.instances.is_empty() {
            pairs.push(pair);
        }
    }
    Ok((pairs, warnings))
}

/// `target` relative to `base`, walking up with `..` where needed. Falls
/// back to the absolute path when the two share no prefix.
fn relative_path(target: &Path, base: &Path) -> String {
    let (t, b) = match (absolute(target), absolute(base)) {
        (Some(t), Some(b)) => (t, b),
        _ => return relative_to(target, base),
    };
    let common = t.components().zip(b.components()).take_while(|(x, y)| x == y).count();
    if common == 0 {
        return t.to_string_lossy().replace('\\', "/");
    }
    let ups = b.components().count() - common;
    let mut parts: Vec<String> = vec!["..".into(); ups];
    parts.extend(t.components().skip(common).map(|c| c.as_os_str().to_string_lossy().into_owned()));
    parts.join("/")
}

fn absolute(p: &Path) -> Option<std::path::PathBuf> {
    let p = if p.is_absolute() {
        p.to_path_buf()
    } else {
        std::env::current_dir().ok()?.join(p)
    };
    // lexical normalization of `.` and `..`
    let mut out = std::path::PathBuf::new();
    for c in p.components() {
        match c {
            std::path::Component::CurDir => {}
            std::path::Component::ParentDir => {
                out.pop();
            }
            other => out.push(other),
        }
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_paths_walk_up() {
        assert_eq!(relative_path(Path::new("/a/b/real/images/0001.png"), Path::new("/a/b/pairs")), "../real/images/0001.png");
        assert_eq!(relative_path(Path::new("/a/b/x.png"), Path::new("/a/b")), "x.png");
    }
}
