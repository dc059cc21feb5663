//! Vertex-colored triangle meshes and a handful of procedural primitives.

use std::f64::consts::TAU;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::CoreError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeshModel {
    pub class_name: String,
    /// Object-frame vertex positions, meters.
    pub vertices: Vec<[f64; 3]>,
    pub faces: Vec<[u32; 3]>,
    /// Per-vertex RGB in `[0, 1]`.
    pub vertex_colors: Vec<[f64; 3]>,
}

impl MeshModel {
    pub fn new(
        class_name: impl Into<String>,
        vertices: Vec<[f64; 3]>,
        faces: Vec<[u32; 3]>,
        vertex_colors: Vec<[f64; 3]>,
    ) -> Result<Self, CoreError> {
        let mesh = Self {
            class_name: class_name.into(),
            vertices,
            faces,
            vertex_colors,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn validate(&self) -> Result<(), CoreError> {
        if self.faces.is_empty() {
            return Err(CoreError::InvalidMesh(format!(
                "{}: mesh has no triangles",
                self.class_name
            )));
        }
        if self.vertex_colors.len() != self.vertices.len() {
            return Err(CoreError::InvalidMesh(format!(
                "{}: {} colors for {} vertices",
                self.class_name,
                self.vertex_colors.len(),
                self.vertices.len()
            )));
        }
        if self.vertices.iter().flatten().any(|v| !v.is_finite()) {
            return Err(CoreError::InvalidMesh(format!(
                "{}: non-finite vertex",
                self.class_name
            )));
        }
        let n = self.vertices.len() as u32;
        if let Some(face) = self.faces.iter().find(|f| f.iter().any(|&i| i >= n)) {
            return Err(CoreError::InvalidMesh(format!(
                "{}: face {:?} indexes past {} vertices",
                self.class_name, face, n
            )));
        }
        Ok(())
    }

    pub fn vertex(&self, i: usize) -> Vector3<f64> {
        Vector3::from(self.vertices[i])
    }

    pub fn points(&self) -> Vec<Vector3<f64>> {
        self.vertices.iter().map(|v| Vector3::from(*v)).collect()
    }

    pub fn with_color(mut self, rgb: [f64; 3]) -> Self {
        for c in &mut self.vertex_colors {
            *c = rgb;
        }
        self
    }

    /// Radius of the smallest origin-centered sphere containing the mesh.
    pub fn bounding_radius(&self) -> f64 {
        self.vertices
            .iter()
            .map(|v| Vector3::from(*v).norm())
            .fold(0.0, f64::max)
    }

    pub fn load(path: &Path) -> Result<Self, CoreError> {
        let text = std::fs::read_to_string(path).map_err(|e| CoreError::io(path, e))?;
        let mesh: MeshModel = serde_json::from_str(&text).map_err(|e| CoreError::Parse {
            path: path.to_path_buf(),
            field: format!("line {} column {}", e.line(), e.column()),
            message: e.to_string(),
        })?;
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn save(&self, path: &Path) -> Result<(), CoreError> {
        let text = serde_json::to_string_pretty(self).expect("mesh serializes");
        std::fs::write(path, text + "\n").map_err(|e| CoreError::io(path, e))
    }

    /// Axis-aligned box centered on the origin.
    pub fn cuboid(class_name: &str, size: [f64; 3], color: [f64; 3]) -> Self {
        let [hx, hy, hz] = [size[0] / 2.0, size[1] / 2.0, size[2] / 2.0];
        let mut vertices = Vec::with_capacity(24);
        let mut faces = Vec::with_capacity(12);
        // one quad per face, vertices duplicated so faces stay flat-shaded
        let quads: [[[f64; 3]; 4]; 6] = [
            [[-hx, -hy, hz], [hx, -hy, hz], [hx, hy, hz], [-hx, hy, hz]],
            [[-hx, hy, -hz], [hx, hy, -hz], [hx, -hy, -hz], [-hx, -hy, -hz]],
            [[hx, -hy, -hz], [hx, hy, -hz], [hx, hy, hz], [hx, -hy, hz]],
            [[-hx, -hy, hz], [-hx, hy, hz], [-hx, hy, -hz], [-hx, -hy, -hz]],
            [[-hx, hy, -hz], [-hx, hy, hz], [hx, hy, hz], [hx, hy, -hz]],
            [[hx, -hy, -hz], [hx, -hy, hz], [-hx, -hy, hz], [-hx, -hy, -hz]],
        ];
        for quad in quads {
            let base = vertices.len() as u32;
            vertices.extend_from_slice(&quad);
            faces.push([base, base + 1, base + 2]);
            faces.push([base, base + 2, base + 3]);
        }
        let vertex_colors = vec![color; vertices.len()];
        Self {
            class_name: class_name.into(),
            vertices,
            faces,
            vertex_colors,
        }
    }

    /// Closed cylinder along +z with its base at z = 0.
    pub fn cylinder(class_name: &str, radius: f64, height: f64, segments: u32, color: [f64; 3]) -> Self {
        let segments = segments.max(3);
        let mut vertices = Vec::new();
        let mut faces = Vec::new();
        let ring = |z: f64| -> Vec<[f64; 3]> {
            (0..segments)
                .map(|i| {
                    let a = TAU * i as f64 / segments as f64;
                    [radius * a.cos(), radius * a.sin(), z]
                })
                .collect()
        };
        // side
        let bottom = ring(0.0);
        let top = ring(height);
        let side_base = vertices.len() as u32;
        vertices.extend_from_slice(&bottom);
        vertices.extend_from_slice(&top);
        for i in 0..segments {
            let j = (i + 1) % segments;
            let (b0, b1) = (side_base + i, side_base + j);
            let (t0, t1) = (side_base + segments + i, side_base + segments + j);
            faces.push([b0, b1, t1]);
            faces.push([b0, t1, t0]);
        }
        // caps
        for (z, flip) in [(0.0, true), (height, false)] {
            let center = vertices.len() as u32;
            vertices.push([0.0, 0.0, z]);
            let rim = vertices.len() as u32;
            vertices.extend(ring(z));
            for i in 0..segments {
                let j = (i + 1) % segments;
                if flip {
                    faces.push([center, rim + j, rim + i]);
                } else {
                    faces.push([center, rim + i, rim + j]);
                }
            }
        }
        let vertex_colors = vec![color; vertices.len()];
        Self {
            class_name: class_name.into(),
            vertices,
            faces,
            vertex_colors,
        }
    }

    /// Flat rectangle in the object xy-plane, centered on the origin.
    pub fn quad(class_name: &str, size_x: f64, size_y: f64, color: [f64; 3]) -> Self {
        let (hx, hy) = (size_x / 2.0, size_y / 2.0);
        Self {
            class_name: class_name.into(),
            vertices: vec![[-hx, -hy, 0.0], [hx, -hy, 0.0], [hx, hy, 0.0], [-hx, hy, 0.0]],
            faces: vec![[0, 1, 2], [0, 2, 3]],
            vertex_colors: vec![color; 4],
        }
    }

    /// Flat disk in the object xy-plane.
    pub fn disk(class_name: &str, radius: f64, segments: u32, color: [f64; 3]) -> Self {
        let segments = segments.max(3);
        let mut vertices = vec![[0.0, 0.0, 0.0]];
        for i in 0..segments {
            let a = TAU * i as f64 / segments as f64;
            vertices.push([radius * a.cos(), radius * a.sin(), 0.0]);
        }
        let faces = (0..segments)
            .map(|i| [0, 1 + i, 1 + (i + 1) % segments])
            .collect();
        let vertex_colors = vec![color; vertices.len()];
        Self {
            class_name: class_name.into(),
            vertices,
            faces,
            vertex_colors,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn primitives_validate() {
        MeshModel::cuboid("box", [0.1, 0.2, 0.3], [1.0, 0.0, 0.0]).validate().unwrap();
        MeshModel::cylinder("can", 0.03, 0.1, 16, [0.5; 3]).validate().unwrap();
        MeshModel::quad("table", 1.0, 1.0, [0.5; 3]).validate().unwrap();
        MeshModel::disk("puck", 0.03, 24, [0.5; 3]).validate().unwrap();
    }

    #[test]
    fn rejects_out_of_range_face() {
        let err = MeshModel::new("bad", vec![[0.0; 3]; 3], vec![[0, 1, 3]], vec![[0.0; 3]; 3]);
        assert!(matches!(err, Err(CoreError::InvalidMesh(_))));
    }

    #[test]
    fn rejects_empty_and_non_finite() {
        assert!(MeshModel::new("bad", vec![[0.0; 3]; 3], vec![], vec![[0.0; 3]; 3]).is_err());
        assert!(MeshModel::new(
            "bad",
            vec![[0.0; 3], [f64::INFINITY, 0.0, 0.0], [0.0; 3]],
            vec![[0, 1, 2]],
            vec![[0.0; 3]; 3]
        )
        .is_err());
    }

    #[test]
    fn cylinder_sits_on_origin_plane() {
        let m = MeshModel::cylinder("can", 0.03, 0.1, 12, [0.5; 3]);
        let min_z = m.vertices.iter().map(|v| v[2]).fold(f64::MAX, f64::min);
        let max_z = m.vertices.iter().map(|v| v[2]).fold(f64::MIN, f64::max);
        assert_eq!(min_z, 0.0);
        assert!((max_z - 0.1).abs() < 1e-15);
    }
}
