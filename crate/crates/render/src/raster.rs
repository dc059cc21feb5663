//! Z-buffered triangle rasterizer.
//!
//! Pixels are sampled at integer centers. Depth and vertex colors are
//! interpolated perspective-correctly, so the depth at a covered pixel is
//! the exact ray/plane depth of the triangle up to rounding. Shading is
//! flat Lambertian per face: `ambient + max(0, n . l)`, two-sided.

use instyle_core::{FloatImage, InstanceMask, MeshModel, Pose};
use nalgebra::Vector3;

use crate::error::RenderError;
use crate::scene::{Camera, RenderOutput, RenderedInstance, SceneGraph, ViewKey};
use crate::Renderer;

const NEAR_PLANE: f64 = 1e-3;

/// Float radiance plus the id and depth rasters, before quantization.
#[derive(Clone, Debug)]
pub struct RawRender {
    pub color: FloatImage,
    pub ids: Vec<u32>,
    pub depth: Vec<f32>,
    pub instances: Vec<RenderedInstance>,
}

impl RawRender {
    pub fn into_output(self) -> RenderOutput {
        RenderOutput {
            rgb: self.color.to_rgb(),
            ids: self.ids,
            depth: self.depth,
            instances: self.instances,
        }
    }
}

/// Built-in deterministic backend.
#[derive(Clone, Copy, Debug, Default)]
pub struct Rasterizer;

impl Renderer for Rasterizer {
    fn render(&self, scene: &SceneGraph, camera: &Camera, _view: &ViewKey) -> Result<RenderOutput, RenderError> {
        scene.validate()?;
        Ok(render_view(scene, camera))
    }
}

pub fn render_view(scene: &SceneGraph, camera: &Camera) -> RenderOutput {
    render_view_float(scene, camera).into_output()
}

#[derive(Clone, Copy)]
struct ClipVertex {
    p: Vector3<f64>,
    color: Vector3<f64>,
}

struct Target<'a> {
    camera: &'a Camera,
    color: FloatImage,
    zbuf: Vec<f64>,
    ids: Vec<u32>,
}

pub fn render_view_float(scene: &SceneGraph, camera: &Camera) -> RawRender {
    let k = &camera.intrinsics;
    let (w, h) = (k.width as usize, k.height as usize);
    let mut target = Target {
        camera,
        color: FloatImage::filled(w, h, scene.background),
        zbuf: vec![f64::INFINITY; w * h],
        ids: vec![0; w * h],
    };
    let world_to_camera = camera.pose.inverse();
    let light = world_to_camera.rotate_vector(&scene.light.direction());
    let ambient = scene.light.ambient;

    for piece in &scene.environment {
        draw_mesh(&mut target, &piece.mesh, &(world_to_camera * piece.pose), 0, &light, ambient);
    }
    for inst in &scene.instances {
        draw_mesh(
            &mut target,
            &inst.mesh,
            &(world_to_camera * inst.pose),
            inst.instance_id,
            &light,
            ambient,
        );
    }

    let depth = target
        .zbuf
        .iter()
        .map(|&z| if z.is_finite() { z as f32 } else { 0.0 })
        .collect();
    RawRender {
        color: target.color,
        ids: target.ids,
        depth,
        instances: scene
            .instances
            .iter()
            .map(|i| RenderedInstance {
                instance_id: i.instance_id,
                class_name: i.mesh.class_name.clone(),
            })
            .collect(),
    }
}

fn draw_mesh(
    target: &mut Target<'_>,
    mesh: &MeshModel,
    camera_from_object: &Pose,
    id: u32,
    light: &Vector3<f64>,
    ambient: f64,
) {
    let verts: Vec<Vector3<f64>> = mesh
        .vertices
        .iter()
        .map(|v| camera_from_object.transform_point(&Vector3::from(*v)))
        .collect();
    for face in &mesh.faces {
        let tri = face.map(|i| ClipVertex {
            p: verts[i as usize],
            color: Vector3::from(mesh.vertex_colors[i as usize]),
        });
        let normal = (tri[1].p - tri[0].p).cross(&(tri[2].p - tri[0].p));
        let norm = normal.norm();
        if norm == 0.0 {
            continue;
        }
        let mut n = normal / norm;
        if n.dot(&tri[0].p) > 0.0 {
            n = -n;
        }
        let shade = ambient + n.dot(light).max(0.0);
        let poly = clip_near(&tri);
        for i in 1..poly.len().saturating_sub(1) {
            raster_triangle(target, [poly[0], poly[i], poly[i + 1]], shade, id);
        }
    }
}

/// Clips a triangle against `z >= NEAR_PLANE`, returning a convex polygon.
fn clip_near(tri: &[ClipVertex; 3]) -> Vec<ClipVertex> {
    if tri.iter().all(|v| v.p.z >= NEAR_PLANE) {
        return tri.to_vec();
    }
    let mut out = Vec::with_capacity(4);
    for i in 0..3 {
        let a = tri[i];
        let b = tri[(i + 1) % 3];
        let a_in = a.p.z >= NEAR_PLANE;
        let b_in = b.p.z >= NEAR_PLANE;
        if a_in {
            out.push(a);
        }
        if a_in != b_in {
            let t = (NEAR_PLANE - a.p.z) / (b.p.z - a.p.z);
            out.push(ClipVertex {
                p: a.p + (b.p - a.p) * t,
                color: a.color + (b.color - a.color) * t,
            });
        }
    }
    out
}

#[inline]
fn edge(ax: f64, ay: f64, bx: f64, by: f64, px: f64, py: f64) -> f64 {
    (bx - ax) * (py - ay) - (by - ay) * (px - ax)
}

fn raster_triangle(target: &mut Target<'_>, tri: [ClipVertex; 3], shade: f64, id: u32) {
    let k = &target.camera.intrinsics;
    let (w, h) = (k.width as i64, k.height as i64);
    let s: [(f64, f64); 3] = tri.map(|v| {
        let uv = k.project(&v.p);
        (uv.x, uv.y)
    });
    let area = edge(s[0].0, s[0].1, s[1].0, s[1].1, s[2].0, s[2].1);
    if area == 0.0 || !area.is_finite() {
        return;
    }
    let min_x = s.iter().map(|p| p.0).fold(f64::INFINITY, f64::min).ceil().max(0.0) as i64;
    let max_x = (s.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max).floor() as i64).min(w - 1);
    let min_y = s.iter().map(|p| p.1).fold(f64::INFINITY, f64::min).ceil().max(0.0) as i64;
    let max_y = (s.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max).floor() as i64).min(h - 1);
    if min_x > max_x || min_y > max_y {
        return;
    }
    let inv_z = tri.map(|v| 1.0 / v.p.z);
    let plane = target.color.width * target.color.height;
    for y in min_y..=max_y {
        let py = y as f64;
        for x in min_x..=max_x {
            let px = x as f64;
            let w0 = edge(s[1].0, s[1].1, s[2].0, s[2].1, px, py) / area;
            let w1 = edge(s[2].0, s[2].1, s[0].0, s[0].1, px, py) / area;
            let w2 = edge(s[0].0, s[0].1, s[1].0, s[1].1, px, py) / area;
            if w0 < 0.0 || w1 < 0.0 || w2 < 0.0 {
                continue;
            }
            let iz = w0 * inv_z[0] + w1 * inv_z[1] + w2 * inv_z[2];
            if iz <= 0.0 {
                continue;
            }
            let z = 1.0 / iz;
            let idx = (y * w + x) as usize;
            if z >= target.zbuf[idx] {
                continue;
            }
            target.zbuf[idx] = z;
            target.ids[idx] = id;
            let color = (tri[0].color * (w0 * inv_z[0])
                + tri[1].color * (w1 * inv_z[1])
                + tri[2].color * (w2 * inv_z[2]))
                * z;
            for c in 0..3 {
                target.color.data[c * plane + idx] = (color[c] * shade).clamp(0.0, 1.0);
            }
        }
    }
}

/// Visibility mask of one instance. Empty when the instance is fully
/// occluded or out of frame.
pub fn mask_for_instance(out: &RenderOutput, instance_id: u32) -> Result<InstanceMask, RenderError> {
    let class_name = out
        .class_of(instance_id)
        .ok_or(RenderError::UnknownInstance(instance_id))?;
    let width = out.width();
    Ok(InstanceMask::from_fn(width, out.height(), instance_id, class_name, |x, y| {
        out.ids[(y * width + x) as usize] == instance_id
    }))
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::scene::{EnvironmentPiece, Light, SceneInstance};
    use instyle_core::{bbox_from_mask, CameraIntrinsics};
    use nalgebra::UnitQuaternion;

    fn camera() -> Camera {
        Camera::new(
            Pose::identity(),
            CameraIntrinsics::new(100.0, 100.0, 32.0, 24.0, 64, 48).unwrap(),
        )
    }

    fn quad_at(id: u32, depth: f64, size: f64, offset_x: f64) -> SceneInstance {
        SceneInstance {
            mesh: Arc::new(MeshModel::quad(&format!("q{id}"), size, size, [0.8, 0.4, 0.2])),
            pose: Pose::from_translation(Vector3::new(offset_x, 0.0, depth)),
            instance_id: id,
        }
    }

    #[test]
    fn empty_scene_is_background() {
        let scene = SceneGraph {
            background: [0.2, 0.4, 0.6],
            ..Default::default()
        };
        let out = render_view(&scene, &camera());
        assert!(out.ids.iter().all(|&i| i == 0));
        assert!(out.depth.iter().all(|&d| d == 0.0));
        assert!(out.rgb.pixels().all(|p| p.0 == [51, 102, 153]));
    }

    #[test]
    fn facing_triangle_gives_nonempty_mask() {
        let tri = MeshModel::new(
            "tri",
            vec![[-0.05, -0.05, 0.0], [0.05, -0.05, 0.0], [0.0, 0.05, 0.0]],
            vec![[0, 1, 2]],
            vec![[1.0, 0.0, 0.0]; 3],
        )
        .unwrap();
        let scene = SceneGraph {
            instances: vec![SceneInstance {
                mesh: Arc::new(tri),
                pose: Pose::from_translation(Vector3::new(0.0, 0.0, 1.0)),
                instance_id: 1,
            }],
            ..Default::default()
        };
        let out = render_view(&scene, &camera());
        let mask = mask_for_instance(&out, 1).unwrap();
        assert!(!mask.is_empty());
        bbox_from_mask(&mask).unwrap();
        // sole instance: mask equals the nonzero part of the id map
        for (m, id) in mask.as_slice().iter().zip(&out.ids) {
            assert_eq!(*m, *id != 0);
        }
    }

    #[test]
    fn nearer_quad_wins_overlap() {
        let scene = SceneGraph {
            instances: vec![quad_at(1, 2.0, 0.61, 0.1), quad_at(2, 1.0, 0.21, 0.0)],
            ..Default::default()
        };
        let out = render_view(&scene, &camera());
        let k = camera().intrinsics;
        // oracle: per pixel, compare the depths each quad would have there
        let covers = |x: f64, y: f64, depth: f64, half: f64, off: f64| {
            let r = k.ray(x, y) * depth;
            (r.x - off).abs() <= half && r.y.abs() <= half
        };
        let mut overlap = 0;
        for y in 0..48 {
            for x in 0..64 {
                let (fx, fy) = (x as f64, y as f64);
                let far = covers(fx, fy, 2.0, 0.305, 0.1);
                let near = covers(fx, fy, 1.0, 0.105, 0.0);
                let id = out.id_at(x, y);
                if near {
                    if far {
                        overlap += 1;
                    }
                    assert_eq!(id, 2, "pixel ({x},{y})");
                } else if far {
                    assert_eq!(id, 1, "pixel ({x},{y})");
                }
            }
        }
        assert!(overlap > 50);
    }

    #[test]
    fn masks_are_disjoint() {
        let scene = SceneGraph {
            instances: vec![quad_at(1, 2.0, 0.6, 0.1), quad_at(2, 1.0, 0.2, 0.0), quad_at(3, 1.5, 0.2, -0.2)],
            ..Default::default()
        };
        let out = render_view(&scene, &camera());
        let masks: Vec<_> = (1..=3).map(|i| mask_for_instance(&out, i).unwrap()).collect();
        for a in 0..3 {
            for b in a + 1..3 {
                assert_eq!(masks[a].overlap(&masks[b]), 0);
            }
        }
    }

    #[test]
    fn fully_occluded_instance_has_empty_mask() {
        let scene = SceneGraph {
            instances: vec![quad_at(1, 3.0, 0.1, 0.0)],
            environment: vec![EnvironmentPiece {
                mesh: Arc::new(MeshModel::quad("wall", 2.0, 2.0, [0.5; 3])),
                pose: Pose::from_translation(Vector3::new(0.0, 0.0, 1.0)),
            }],
            ..Default::default()
        };
        let out = render_view(&scene, &camera());
        assert!(mask_for_instance(&out, 1).unwrap().is_empty());
        assert!(matches!(mask_for_instance(&out, 9), Err(RenderError::UnknownInstance(9))));
    }

    #[test]
    fn depth_matches_ray_plane_intersection() {
        let mesh = MeshModel::new(
            "slanted",
            vec![[-0.3, -0.2, 0.0], [0.3, -0.25, 0.1], [0.05, 0.3, -0.15]],
            vec![[0, 1, 2]],
            vec![[1.0; 3]; 3],
        )
        .unwrap();
        let pose = Pose::new(
            UnitQuaternion::from_euler_angles(0.3, -0.4, 0.2),
            Vector3::new(0.02, -0.01, 1.3),
        );
        let scene = SceneGraph {
            instances: vec![SceneInstance {
                mesh: Arc::new(mesh.clone()),
                pose,
                instance_id: 1,
            }],
            ..Default::default()
        };
        let cam = camera();
        let out = render_view(&scene, &cam);
        let p: Vec<Vector3<f64>> = mesh.points().iter().map(|v| pose.transform_point(v)).collect();
        let n = (p[1] - p[0]).cross(&(p[2] - p[0]));
        let mut checked = 0;
        for y in 0..48 {
            for x in 0..64 {
                if out.id_at(x, y) == 1 {
                    let d = cam.intrinsics.ray(x as f64, y as f64);
                    let t = n.dot(&p[0]) / n.dot(&d);
                    assert!((out.depth_at(x, y) as f64 - t).abs() < 1e-4);
                    checked += 1;
                }
            }
        }
        assert!(checked > 100);
    }

    #[test]
    fn rendering_is_deterministic() {
        let scene = SceneGraph {
            instances: vec![SceneInstance {
                mesh: Arc::new(MeshModel::cylinder("can", 0.1, 0.3, 20, [0.2, 0.6, 0.9])),
                pose: Pose::new(
                    UnitQuaternion::from_euler_angles(1.0, 0.2, 0.1),
                    Vector3::new(0.0, 0.0, 1.5),
                ),
                instance_id: 4,
            }],
            light: Light {
                direction: [0.3, -0.5, 1.0],
                ambient: 0.2,
            },
            ..Default::default()
        };
        assert_eq!(render_view(&scene, &camera()), render_view(&scene, &camera()));
    }

    #[test]
    fn geometry_crossing_near_plane_is_clipped() {
        // a floor running from behind the camera to far in front
        let floor = EnvironmentPiece {
            mesh: Arc::new(MeshModel::quad("floor", 4.0, 4.0, [0.5; 3])),
            pose: Pose::new(
                UnitQuaternion::from_euler_angles(std::f64::consts::FRAC_PI_2, 0.0, 0.0),
                Vector3::new(0.0, 0.3, 1.0),
            ),
        };
        let scene = SceneGraph {
            environment: vec![floor],
            ..Default::default()
        };
        let out = render_view(&scene, &camera());
        // lower half of the image sees the floor, upper half sees nothing
        assert!(out.depth_at(32, 47) > 0.0);
        assert_eq!(out.depth_at(32, 0), 0.0);
        assert!(out.depth.iter().all(|d| d.is_finite() && *d >= 0.0));
    }
}
