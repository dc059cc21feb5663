//! Instance style transfer networks trained on weakly paired crops.
//!
//! A [`TransNet`] holds a residual generator `G`, a discriminator `D` and a
//! projection head `H` for one object class. Training draws 64x64 patches
//! from instance crops ([`pipeline`]) and minimizes the contrastive, adversarial
//! and L1 terms in [`losses`]. All arithmetic is `f64` on the CPU.

pub mod error;
pub mod layers;
pub mod losses;
pub mod nets;
pub mod optim;
pub mod pipeline;
pub mod tensor;
pub mod train;
pub mod weights;

pub use error::StylekitError;
pub use pipeline::{crop_instance_region, draw_patch, load_crop_pairs, CropPair, PatchProvenance, PatchSpec};
pub use tensor::Tensor;
pub use train::{train_transnet, L1Mode, PatchBatch, StepLosses, TrainOptions, TransNet, TransNetConfig};
pub use weights::{load_weights, save_weights};
