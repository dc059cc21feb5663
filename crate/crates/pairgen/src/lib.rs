//! Data generation for the sim-to-real pipeline.
//!
//! - [`capture`]: multi-view capture of a scene through a "real" renderer.
//! - [`synth`]: domain-randomized (DR) and domain-specific (DS) synthetic data.
//! - [`provider`]: the pose-provider contract, a fault-injecting mock and a
//!   replay provider; [`template`] holds a template-matching provider.
//! - [`filter`]: the multi-view mismatch filter.
//! - [`pairing`]: weak pairs from retained views and their detections.

pub mod capture;
pub mod error;
pub mod filter;
pub mod library;
pub mod pairing;
pub mod provider;
pub mod synth;
pub mod template;

pub use capture::{capture_scene, gantry_trajectory, orbit_trajectory, top_down_pose};
pub use error::PairgenError;
pub use filter::{
    consensus_count, count_in_range, estimate_views, mismatch_filter, ClassFilter, DistanceRange,
    FilterReport, ViewCount,
};
pub use library::{ModelEntry, ModelLibrary};
pub use pairing::{build_weak_pairs, SyntheticEnvironment};
pub use provider::{MockProvider, MockProviderConfig, PoseProvider, RecordedProvider};
pub use synth::{
    generate_dr_scene, generate_ds_scene, write_synthetic_dataset, DrConfig, DsConfig,
    SupportPlane, SyntheticSample,
};
pub use template::{TemplateMatcher, TemplateMatcherConfig};
