use instyle_core::CoreError;
use instyle_render::RenderError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PairgenError {
    #[error("no model for class `{0}`")]
    MissingModel(String),
    #[error("consensus of an empty count list")]
    EmptyCounts,
    #[error("invalid distance range [{d_min}, {d_max}]")]
    InvalidRange { d_min: f64, d_max: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("view {view_id}: {reason}")]
    View { view_id: u32, reason: String },
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error(transparent)]
    Render(#[from] RenderError),
}
