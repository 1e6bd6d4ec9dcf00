use std::path::PathBuf;

/// Errors raised anywhere in the extraction, localization and evaluation pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("not a JPEG stream (missing SOI marker)")]
    NotAJpeg,

    #[error("malformed JPEG stream at byte {offset}: {reason}")]
    MalformedStream { offset: usize, reason: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("training diverged during {stage} at step {step}")]
    TrainingDivergence { stage: &'static str, step: usize },

    #[error("degenerate batch: no same-history pair")]
    DegenerateBatch,

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("degenerate clustering: {0}")]
    DegenerateClustering(String),

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error("config: {0}")]
    Config(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("{}: {source}", path.display())]
    Path {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Wraps the error with the name of the pipeline stage that raised it.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    pub fn at_path(self, path: impl Into<PathBuf>) -> Self {
        Error::Path {
            path: path.into(),
            source: Box::new(self),
        }
    }

    /// Strips stage and path annotations.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } | Error::Path { source, .. } => source.root(),
            other => other,
        }
    }

    /// True for errors caused by bad user input rather than a pipeline failure.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self.root(),
            Error::InvalidArgument(_)
                | Error::NotAJpeg
                | Error::MalformedStream { .. }
                | Error::ModelFormat(_)
                | Error::Config(_)
                | Error::Io(_)
                | Error::Image(_)
        )
    }
}

pub(crate) trait ResultExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> ResultExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| e.in_stage(stage))
    }
}
