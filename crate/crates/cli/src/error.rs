use hct_core::dataset::active::{EmptyPool, ManifestError};
use hct_core::dataset::augment::AugmentError;
use hct_core::dataset::oversample::OversampleError;
use hct_core::dataset::review::ReviewError;
use hct_core::dataset::split::SplitError;
use hct_core::dataset::AnnotationError;
use hct_core::eval::EvalError;
use hct_core::pipeline::PipelineError;
use hct_core::wsi::WsiError;
use serde_json::json;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Wsi(#[from] WsiError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Annotation(#[from] AnnotationError),
    #[error(transparent)]
    Split(#[from] SplitError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error(transparent)]
    Oversample(#[from] OversampleError),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Review(#[from] ReviewError),
    #[error(transparent)]
    EmptyPool(#[from] EmptyPool),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
}

impl CliError {
    pub fn io(path: impl AsRef<std::path::Path>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.as_ref().display().to_string();
        move |source| CliError::Io { path, source }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Input(_) => "input",
            CliError::Pipeline(PipelineError::BackendUnavailable { .. }) => "backend-unavailable",
            CliError::Pipeline(PipelineError::PartialRun { .. }) => "partial-run",
            CliError::Pipeline(PipelineError::InvalidConfig(_)) => "invalid-config",
            CliError::Pipeline(_) => "pipeline",
            CliError::Wsi(_) => "slide",
            CliError::Eval(_) => "eval",
            CliError::Annotation(_) => "annotation",
            CliError::Split(_) => "split",
            CliError::Augment(_) => "augment",
            CliError::Oversample(_) => "oversample",
            CliError::Manifest(_) => "manifest",
            CliError::Review(_) => "review",
            CliError::EmptyPool(_) => "empty-pool",
            CliError::Io { .. } => "io",
            CliError::Json(_) => "json",
            CliError::Image(_) => "image",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }

    /// One-line JSON for stderr.
    pub fn to_json(&self) -> String {
        json!({ "error": self.kind(), "message": self.to_string() }).to_string()
    }
}
