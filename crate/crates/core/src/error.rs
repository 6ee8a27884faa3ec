use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = FlareError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum FlareError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unsupported or malformed image {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("no light source found and no synthetic source position supplied")]
    SourceMissing,

    #[error("no fully known candidate patch within a {window}px search window around ({x}, {y})")]
    SearchExhausted { x: usize, y: usize, window: usize },

    #[error("inpainting stalled with {remaining} unfilled pixels")]
    Stall { remaining: usize },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("non-finite value in stage `{stage}`")]
    NonFinite { stage: &'static str },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<FlareError>,
    },
}

impl FlareError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        FlareError::Io { path: path.into(), source }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        FlareError::Format { path: path.into(), reason: reason.into() }
    }

    /// Wraps an error with the name of the pipeline stage that produced it.
    pub fn in_stage(self, stage: &'static str) -> Self {
        FlareError::Stage { stage, source: Box::new(self) }
    }
}

/// Extension for annotating results with a pipeline stage name.
pub trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| e.in_stage(stage))
    }
}
