//! Shared primitives for the instyle sim-to-real pipeline.
//!
//! Everything downstream (rendering, pairing, style transfer, evaluation)
//! speaks in terms of the types defined here:
//!
//! - [`Pose`] and [`CameraIntrinsics`] for rigid transforms and the pinhole model,
//! - [`MeshModel`] for vertex-colored triangle meshes,
//! - [`BBox2D`] and [`InstanceMask`] for per-instance image regions,
//! - [`SceneManifest`] for the on-disk record of a multi-view capture,
//! - [`WeakPair`] for a real image and its rendered counterpart.
//!
//! Pixel convention: integer pixel centers, boxes inclusive on both ends.

pub mod detection;
pub mod error;
pub mod geometry;
pub mod imageops;
pub mod io;
pub mod manifest;
pub mod mesh;
pub mod pairs;
pub mod par;
pub mod region;
pub mod rng;

pub use detection::{Detection, DetectionLog, ViewDetections};
pub use error::CoreError;
pub use geometry::{look_at, project_points, CameraIntrinsics, Pose};
pub use imageops::FloatImage;
pub use manifest::{
    DatasetIndex, InstanceLabel, Provenance, SceneManifest, ValidationWarning, ViewRecord,
    SCHEMA_VERSION,
};
pub use mesh::MeshModel;
pub use pairs::{PairInstance, PairSet, WeakPair};
pub use region::{bbox_from_mask, expand_bbox, square_bbox, BBox2D, InstanceMask};

/// Short stable hash of any serializable value, used to tag artifacts with
/// the configuration that produced them.
pub fn config_hash<T: serde::Serialize>(value: &T) -> String {
    use sha2::{Digest, Sha256};
    let bytes = serde_json::to_vec(value).expect("config values serialize");
    let digest = Sha256::digest(&bytes);
    hex::encode(&digest[..8])
}
