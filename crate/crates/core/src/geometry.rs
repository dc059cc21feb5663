//! Rigid poses and the pinhole camera.
//!
//! Camera frame follows the usual vision convention: +z looks forward,
//! +x right, +y down. A camera pose stored in a manifest is the camera's
//! placement in the world (camera-to-world); world points are brought into
//! the camera frame by applying its inverse.

use std::ops::Mul;

use nalgebra::{Quaternion, UnitQuaternion, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::CoreError;

/// Unit-norm tolerance accepted when a quaternion is supplied from outside.
pub const QUATERNION_NORM_TOLERANCE: f64 = 1e-9;

/// Rigid transform: rotation as a unit quaternion `(w, x, y, z)` followed by
/// a translation in meters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PoseRepr", into = "PoseRepr")]
pub struct Pose {
    rotation: UnitQuaternion<f64>,
    translation: Vector3<f64>,
}

#[derive(Serialize, Deserialize)]
struct PoseRepr {
    rotation: [f64; 4],
    translation: [f64; 3],
}

impl TryFrom<PoseRepr> for Pose {
    type Error = CoreError;

    fn try_from(repr: PoseRepr) -> Result<Self, Self::Error> {
        Pose::from_parts(repr.rotation, repr.translation)
    }
}

impl From<Pose> for PoseRepr {
    fn from(pose: Pose) -> Self {
        PoseRepr {
            rotation: pose.quaternion_wxyz(),
            translation: pose.translation.into(),
        }
    }
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self::new(UnitQuaternion::identity(), translation)
    }

    /// Builds a pose from raw `(w, x, y, z)` quaternion components without
    /// renormalizing them, so serialized values round-trip bit-exactly.
    pub fn from_parts(wxyz: [f64; 4], translation: [f64; 3]) -> Result<Self, CoreError> {
        if wxyz.iter().chain(translation.iter()).any(|v| !v.is_finite()) {
            return Err(CoreError::InvalidPose("non-finite component".into()));
        }
        let q = Quaternion::new(wxyz[0], wxyz[1], wxyz[2], wxyz[3]);
        let norm = q.norm();
        if (norm - 1.0).abs() > QUATERNION_NORM_TOLERANCE {
            return Err(CoreError::InvalidPose(format!(
                "quaternion norm {norm} is not 1"
            )));
        }
        Ok(Self {
            rotation: UnitQuaternion::new_unchecked(q),
            translation: Vector3::from(translation),
        })
    }

    pub fn rotation(&self) -> &UnitQuaternion<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn quaternion_wxyz(&self) -> [f64; 4] {
        let q = self.rotation.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    pub fn inverse(&self) -> Self {
        let rotation = self.rotation.inverse();
        let translation = -(rotation * self.translation);
        Self {
            rotation,
            translation,
        }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn rotate_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    pub fn is_valid(&self) -> bool {
        let q = self.rotation.quaternion();
        (q.norm() - 1.0).abs() <= QUATERNION_NORM_TOLERANCE
            && q.coords.iter().all(|v| v.is_finite())
            && self.translation.iter().all(|v| v.is_finite())
    }
}

impl Mul for Pose {
    type Output = Pose;

    /// `a * b` applies `b` first, then `a`.
    fn mul(self, rhs: Pose) -> Pose {
        Pose {
            rotation: self.rotation * rhs.rotation,
            translation: self.rotation * rhs.translation + self.translation,
        }
    }
}

impl Mul for &Pose {
    type Output = Pose;

    fn mul(self, rhs: &Pose) -> Pose {
        *self * *rhs
    }
}

/// Camera-to-world pose of a camera at `eye` looking at `target`.
///
/// `up` is the world direction that should appear upward in the image
/// (camera -y). Falls back to a different reference axis when `up` is
/// parallel to the viewing direction.
pub fn look_at(eye: Vector3<f64>, target: Vector3<f64>, up: Vector3<f64>) -> Pose {
    let forward = (target - eye).normalize();
    let mut right = forward.cross(&up);
    if right.norm() < 1e-9 {
        right = forward.cross(&Vector3::x());
        if right.norm() < 1e-9 {
            right = forward.cross(&Vector3::y());
        }
    }
    let right = right.normalize();
    let down = forward.cross(&right);
    let basis = nalgebra::Matrix3::from_columns(&[right, down, forward]);
    let rotation = UnitQuaternion::from_matrix(&basis);
    Pose::new(rotation, eye)
}

/// Pinhole intrinsics, in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self, CoreError> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), CoreError> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(CoreError::InvalidIntrinsics(format!(
                "focal lengths must be positive (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64) {
            return Err(CoreError::InvalidIntrinsics(format!(
                "cx={} outside [0, {})",
                self.cx, self.width
            )));
        }
        if !(self.cy >= 0.0 && self.cy < self.height as f64) {
            return Err(CoreError::InvalidIntrinsics(format!(
                "cy={} outside [0, {})",
                self.cy, self.height
            )));
        }
        Ok(())
    }

    pub fn project(&self, p: &Vector3<f64>) -> Vector2<f64> {
        Vector2::new(
            self.fx * p.x / p.z + self.cx,
            self.fy * p.y / p.z + self.cy,
        )
    }

    /// Direction (z = 1) of the ray through pixel coordinate `(u, v)`.
    pub fn ray(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }
}

/// Projects camera-frame points to pixel coordinates.
pub fn project_points(
    points: &[Vector3<f64>],
    intrinsics: &CameraIntrinsics,
) -> Result<Vec<Vector2<f64>>, CoreError> {
    points
        .iter()
        .enumerate()
        .map(|(index, p)| {
            if p.z <= 0.0 {
                Err(CoreError::BehindCamera { index, z: p.z })
            } else {
                Ok(intrinsics.project(p))
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn k() -> CameraIntrinsics {
        CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0, 640, 480).unwrap()
    }

    #[test]
    fn optical_axis_hits_principal_point() {
        let uv = project_points(&[Vector3::new(0.0, 0.0, 1.0)], &k()).unwrap();
        assert_eq!((uv[0].x, uv[0].y), (320.0, 240.0));
    }

    #[test]
    fn lateral_offset() {
        let uv = project_points(&[Vector3::new(0.1, 0.0, 1.0)], &k()).unwrap();
        assert!((uv[0].x - 370.0).abs() < 1e-12);
        assert_eq!(uv[0].y, 240.0);
    }

    #[test]
    fn behind_camera_reports_index() {
        let pts = [Vector3::new(0.0, 0.0, 1.0), Vector3::new(0.0, 0.0, -1.0)];
        match project_points(&pts, &k()) {
            Err(CoreError::BehindCamera { index, .. }) => assert_eq!(index, 1),
            other => panic!("expected behind-camera error, got {other:?}"),
        }
    }

    #[test]
    fn intrinsics_validation() {
        assert!(CameraIntrinsics::new(0.0, 1.0, 1.0, 1.0, 4, 4).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 4.0, 1.0, 4, 4).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 3.9, 3.9, 4, 4).is_ok());
    }

    #[test]
    fn pose_rejects_non_unit_quaternion() {
        assert!(Pose::from_parts([1.0, 0.1, 0.0, 0.0], [0.0; 3]).is_err());
        assert!(Pose::from_parts([1.0, 0.0, 0.0, 0.0], [f64::NAN, 0.0, 0.0]).is_err());
    }

    #[test]
    fn inverse_composes_to_identity() {
        let p = Pose::new(
            UnitQuaternion::from_euler_angles(0.3, -0.2, 1.1),
            Vector3::new(0.1, 0.2, 0.9),
        );
        let id = p * p.inverse();
        assert!(id.translation().norm() < 1e-12);
        assert!(id.rotation().angle() < 1e-12);
    }

    #[test]
    fn identity_composition_is_exact() {
        let p = Pose::new(
            UnitQuaternion::from_euler_angles(0.3, -0.2, 1.1),
            Vector3::new(0.1, 0.2, 0.9),
        );
        assert_eq!(Pose::identity().inverse() * p, p);
    }

    #[test]
    fn look_at_points_camera_z_at_target() {
        let eye = Vector3::new(0.2, -0.1, 0.8);
        let target = Vector3::new(0.0, 0.0, 0.0);
        let cam = look_at(eye, target, Vector3::z());
        let in_cam = cam.inverse().transform_point(&target);
        assert!(in_cam.x.abs() < 1e-12 && in_cam.y.abs() < 1e-12);
        assert!((in_cam.z - eye.norm()).abs() < 1e-12);
        // straight down is the degenerate case
        let cam = look_at(Vector3::new(0.0, 0.0, 1.0), target, Vector3::z());
        let in_cam = cam.inverse().transform_point(&target);
        assert!((in_cam.z - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pose_json_round_trip_is_exact() {
        let p = Pose::new(
            UnitQuaternion::from_euler_angles(0.3, -0.2, 1.1),
            Vector3::new(0.1, 0.2, 0.9),
        );
        let s = serde_json::to_string(&p).unwrap();
        let q: Pose = serde_json::from_str(&s).unwrap();
        assert_eq!(p, q);
    }

    proptest! {
        #[test]
        fn projection_is_homogeneous_in_depth(
            x in -1.0f64..1.0, y in -1.0f64..1.0, z in 0.05f64..5.0, lambda in 0.01f64..100.0,
        ) {
            let a = project_points(&[Vector3::new(x, y, z)], &k()).unwrap()[0];
            let b = project_points(&[Vector3::new(x, y, z) * lambda], &k()).unwrap()[0];
            prop_assert!((a - b).norm() < 1e-9);
        }
    }
}
