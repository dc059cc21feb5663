//! Stand-in for a real camera: the rasterizer plus an appearance gap.
//!
//! Each object class gets an affine color transform (its "material" as the
//! real world shows it), then every image gets a global gain jitter and
//! per-pixel Gaussian noise. Noise is drawn from a stream keyed by the
//! view, so a capture replays identically.

use std::collections::BTreeMap;

use instyle_core::rng::substream;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::RenderError;
use crate::raster::render_view_float;
use crate::scene::{Camera, RenderOutput, SceneGraph, ViewKey};
use crate::Renderer;

/// `out = matrix * rgb + offset`, clamped to `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColorTransform {
    pub matrix: [[f64; 3]; 3],
    pub offset: [f64; 3],
}

impl ColorTransform {
    pub fn identity() -> Self {
        Self {
            matrix: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            offset: [0.0; 3],
        }
    }

    /// Replaces a nominal base color by another, scaling with shading.
    pub fn recolor(from: [f64; 3], to: [f64; 3]) -> Self {
        let mut matrix = [[0.0; 3]; 3];
        for c in 0..3 {
            matrix[c][c] = if from[c] > 1e-6 { to[c] / from[c] } else { 0.0 };
        }
        let offset = std::array::from_fn(|c| if from[c] > 1e-6 { 0.0 } else { to[c] });
        Self { matrix, offset }
    }

    pub fn apply(&self, rgb: [f64; 3]) -> [f64; 3] {
        std::array::from_fn(|r| {
            let v: f64 = (0..3).map(|c| self.matrix[r][c] * rgb[c]).sum::<f64>() + self.offset[r];
            v.clamp(0.0, 1.0)
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StyleGap {
    /// Per-class transform applied to instance pixels.
    #[serde(default)]
    pub class_styles: BTreeMap<String, ColorTransform>,
    /// Transform for everything that is not a target instance.
    #[serde(default)]
    pub environment_style: Option<ColorTransform>,
    /// Per-view, per-channel gain drawn from `1 +/- jitter`.
    #[serde(default)]
    pub jitter: f64,
    /// Standard deviation of additive per-pixel noise.
    #[serde(default)]
    pub noise_sigma: f64,
}

#[derive(Clone, Debug)]
pub struct StyledRenderer {
    pub gap: StyleGap,
    pub seed: u64,
}

impl StyledRenderer {
    pub fn new(gap: StyleGap, seed: u64) -> Self {
        Self { gap, seed }
    }
}

impl Renderer for StyledRenderer {
    fn render(&self, scene: &SceneGraph, camera: &Camera, view: &ViewKey) -> Result<RenderOutput, RenderError> {
        scene.validate()?;
        let mut raw = render_view_float(scene, camera);
        let mut rng = substream(
            self.seed,
            &["render", &view.scene_id, &view.view_id.to_string()],
        );
        let gain: [f64; 3] = std::array::from_fn(|_| 1.0 + self.gap.jitter * rng.random_range(-1.0..=1.0));
        let noise = Normal::new(0.0, self.gap.noise_sigma.max(0.0))
            .map_err(|e| RenderError::InvalidScene(format!("noise sigma: {e}")))?;
        let plane = raw.color.width * raw.color.height;
        let styles: Vec<Option<&ColorTransform>> = std::iter::once(self.gap.environment_style.as_ref())
            .chain(raw.instances.iter().map(|i| self.gap.class_styles.get(&i.class_name)))
            .collect();
        let slot: BTreeMap<u32, usize> = raw
            .instances
            .iter()
            .enumerate()
            .map(|(k, i)| (i.instance_id, k + 1))
            .collect();
        for idx in 0..plane {
            let rgb = [
                raw.color.data[idx],
                raw.color.data[plane + idx],
                raw.color.data[2 * plane + idx],
            ];
            let id = raw.ids[idx];
            let style = if id == 0 { styles[0] } else { styles[slot[&id]] };
            let styled = style.map_or(rgb, |t| t.apply(rgb));
            for c in 0..3 {
                let mut v = styled[c] * gain[c];
                if self.gap.noise_sigma > 0.0 {
                    v += noise.sample(&mut rng);
                }
                raw.color.data[c * plane + idx] = v.clamp(0.0, 1.0);
            }
        }
        Ok(raw.into_output())
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

    fn scene() -> (SceneGraph, Camera) {
        let scene = SceneGraph {
            instances: vec![SceneInstance {
                mesh: Arc::new(MeshModel::quad("tile", 0.3, 0.3, [0.8, 0.2, 0.2])),
                pose: Pose::from_translation(Vector3::new(0.0, 0.0, 1.0)),
                instance_id: 1,
            }],
            background: [0.5; 3],
            ..Default::default()
        };
        let cam = Camera::new(
            Pose::identity(),
            CameraIntrinsics::new(80.0, 80.0, 16.0, 16.0, 32, 32).unwrap(),
        );
        (scene, cam)
    }

    #[test]
    fn recolor_maps_base_color() {
        let t = ColorTransform::recolor([0.8, 0.2, 0.0], [0.2, 0.4, 0.9]);
        let out = t.apply([0.8, 0.2, 0.0]);
        for (a, b) in out.iter().zip([0.2, 0.4, 0.9]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn same_view_replays_identically_and_geometry_is_unchanged() {
        let (scene, cam) = scene();
        let mut gap = StyleGap {
            jitter: 0.05,
            noise_sigma: 0.03,
            ..Default::default()
        };
        gap.class_styles.insert("tile".into(), ColorTransform::recolor([0.8, 0.2, 0.2], [0.2, 0.3, 0.8]));
        let r = StyledRenderer::new(gap, 11);
        let a = r.render(&scene, &cam, &ViewKey::new("s", 3)).unwrap();
        let b = r.render(&scene, &cam, &ViewKey::new("s", 3)).unwrap();
        let c = r.render(&scene, &cam, &ViewKey::new("s", 4)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.rgb, c.rgb);
        let plain = render_view(&scene, &cam);
        assert_eq!(a.ids, plain.ids);
        assert_eq!(a.depth, plain.depth);
        // instance pixels moved toward the target style
        let p = a.rgb.get_pixel(16, 16).0;
        assert!(p[2] > p[0]);
    }
}
