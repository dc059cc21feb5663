use thiserror::Error;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("instance id {0} is not part of the rendered scene")]
    UnknownInstance(u32),

    #[error("invalid scene: {0}")]
    InvalidScene(String),

    #[error("external render for view {view_id} is inconsistent: {reason}")]
    External { view_id: u32, reason: String },

    #[error(transparent)]
    Core(#[from] instyle_core::CoreError),
}
