use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GlpError {
    #[error("{file}:{line}:{col}: {msg}")]
    Parse { file: String, line: usize, col: usize, msg: String },
    #[error("duplicate module name {0}")]
    DuplicateModule(String),
    #[error("load error: {0}")]
    Load(String),
    #[error("internal corruption: {0}")]
    Corruption(String),
    #[error("io error on {path}: {msg}")]
    Io { path: String, msg: String },
    #[error("scenario error: {0}")]
    Scenario(String),
    #[error("trace error at line {line}: {msg}")]
    Trace { line: usize, msg: String },
}

impl GlpError {
    pub fn io(path: &std::path::Path, e: std::io::Error) -> GlpError {
        GlpError::Io { path: path.display().to_string(), msg: e.to_string() }
    }
}
