//! Ingestion of renders produced outside this crate.
//!
//! Layout: one directory per view id holding `rgb.png` (8-bit RGB),
//! `ids.png` (16-bit instance ids, 0 = none) and `depth.pgm` (16-bit binary
//! PGM, depth in units of 0.1 mm, 0 = no surface).

use std::path::{Path, PathBuf};

use image::Luma;
use instyle_core::io::{load_ids, load_pgm16, load_rgb, save_ids, save_pgm16, save_rgb, IdImage};

use crate::error::RenderError;
use crate::scene::{Camera, RenderOutput, RenderedInstance, SceneGraph, ViewKey};
use crate::Renderer;

pub const DEPTH_UNITS_PER_METER: f64 = 10_000.0;

fn view_dir(root: &Path, view_id: u32) -> PathBuf {
    root.join(view_id.to_string())
}

/// Writes a render in the external layout.
pub fn write_external(root: &Path, view_id: u32, out: &RenderOutput) -> Result<(), RenderError> {
    let dir = view_dir(root, view_id);
    let (w, h) = (out.width(), out.height());
    save_rgb(&out.rgb, &dir.join("rgb.png"))?;
    if let Some(&big) = out.ids.iter().find(|&&i| i > u16::MAX as u32) {
        return Err(RenderError::External {
            view_id,
            reason: format!("instance id {big} does not fit in 16 bits"),
        });
    }
    let ids = IdImage::from_fn(w, h, |x, y| Luma([out.ids[(y * w + x) as usize] as u16]));
    save_ids(&ids, &dir.join("ids.png"))?;
    let depth: Vec<u16> = out
        .depth
        .iter()
        .map(|&d| (d as f64 * DEPTH_UNITS_PER_METER).round().clamp(0.0, u16::MAX as f64) as u16)
        .collect();
    save_pgm16(w, h, &depth, &dir.join("depth.pgm"))?;
    Ok(())
}

/// Serves pre-rendered views from disk. The scene graph is consulted only
/// for the class name of each instance id.
#[derive(Clone, Debug)]
pub struct ExternalRenderer {
    pub root: PathBuf,
}

impl ExternalRenderer {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }
}

impl Renderer for ExternalRenderer {
    fn render(&self, scene: &SceneGraph, camera: &Camera, view: &ViewKey) -> Result<RenderOutput, RenderError> {
        let dir = view_dir(&self.root, view.view_id);
        let rgb = load_rgb(&dir.join("rgb.png"))?;
        let ids = load_ids(&dir.join("ids.png"))?;
        let (dw, dh, depth) = load_pgm16(&dir.join("depth.pgm"))?;
        let (w, h) = (rgb.width(), rgb.height());
        let k = &camera.intrinsics;
        if (w, h) != (k.width, k.height) || ids.dimensions() != (w, h) || (dw, dh) != (w, h) {
            return Err(RenderError::External {
                view_id: view.view_id,
                reason: format!("rasters disagree with the {}x{} camera", k.width, k.height),
            });
        }
        let ids: Vec<u32> = ids.pixels().map(|p| p.0[0] as u32).collect();
        if let Some(&unknown) = ids.iter().find(|&&i| i != 0 && scene.instance(i).is_none()) {
            return Err(RenderError::External {
                view_id: view.view_id,
                reason: format!("id map references unknown instance {unknown}"),
            });
        }
        let depth = depth
            .iter()
            .map(|&d| (d as f64 / DEPTH_UNITS_PER_METER) as f32)
            .collect();
        Ok(RenderOutput {
            rgb,
            ids,
            depth,
            instances: scene
                .instances
                .iter()
                .map(|i| RenderedInstance {
                    instance_id: i.instance_id,
                    class_name: i.mesh.class_name.clone(),
                })
                .collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::raster::render_view;
    use crate::scene::SceneInstance;
    use instyle_core::{CameraIntrinsics, MeshModel, Pose};
    use nalgebra::Vector3;

    #[test]
    fn round_trip_through_disk() {
        let scene = SceneGraph {
            instances: vec![SceneInstance {
                mesh: Arc::new(MeshModel::quad("tile", 0.3, 0.3, [0.8, 0.2, 0.2])),
                pose: Pose::from_translation(Vector3::new(0.0, 0.0, 1.0)),
                instance_id: 7,
            }],
            ..Default::default()
        };
        let cam = Camera::new(
            Pose::identity(),
            CameraIntrinsics::new(80.0, 80.0, 16.0, 16.0, 32, 32).unwrap(),
        );
        let out = render_view(&scene, &cam);
        let dir = tempfile::tempdir().unwrap();
        write_external(dir.path(), 5, &out).unwrap();
        let back = ExternalRenderer::new(dir.path())
            .render(&scene, &cam, &ViewKey::new("s", 5))
            .unwrap();
        assert_eq!(back.rgb, out.rgb);
        assert_eq!(back.ids, out.ids);
        for (a, b) in back.depth.iter().zip(&out.depth) {
            assert!((a - b).abs() <= 0.5 / DEPTH_UNITS_PER_METER as f32 + 1e-6);
        }
        // the same files do not match a scene lacking instance 7
        let empty = SceneGraph::default();
        assert!(ExternalRenderer::new(dir.path())
            .render(&empty, &cam, &ViewKey::new("s", 5))
            .is_err());
    }
}
