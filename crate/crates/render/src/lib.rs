//! Rendering for weakly-paired counterpart generation.
//!
//! [`Renderer`] is the contract the pipeline renders through. The default
//! backend is [`Rasterizer`], a deterministic z-buffer rasterizer with flat
//! Lambertian shading. [`StyledRenderer`] wraps it with a per-class color
//! transform and sensor noise to stand in for real captures, and
//! [`ExternalRenderer`] ingests images produced elsewhere.

mod error;
mod external;
mod raster;
mod scene;
mod styled;

pub use error::RenderError;
pub use external::{write_external, ExternalRenderer, DEPTH_UNITS_PER_METER};
pub use raster::{mask_for_instance, render_view, render_view_float, Rasterizer, RawRender};
pub use scene::{Camera, EnvironmentPiece, Light, RenderOutput, RenderedInstance, SceneGraph, SceneInstance, ViewKey};
pub use styled::{ColorTransform, StyleGap, StyledRenderer};

/// Renders a scene graph from a camera.
///
/// `view` identifies the image being produced; deterministic backends
/// ignore it, stochastic ones derive their noise stream from it.
pub trait Renderer: Send + Sync {
    fn render(&self, scene: &SceneGraph, camera: &Camera, view: &ViewKey) -> Result<RenderOutput, RenderError>;
}
