use std::path::{Path, PathBuf};

use mtsx_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum MtsxError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{0}")]
    Core(#[from] CoreError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = MtsxError> = std::result::Result<T, E>;

impl MtsxError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        MtsxError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn parse(path: &Path, line: usize, message: impl Into<String>) -> Self {
        MtsxError::Parse {
            path: path.to_path_buf(),
            line,
            message: message.into(),
        }
    }

    /// 2 for usage, 4 for numeric failures, 3 for everything about the data.
    pub fn exit_code(&self) -> i32 {
        match self {
            MtsxError::Usage(_) => 2,
            MtsxError::Core(e) if is_numeric(e) => 4,
            _ => 3,
        }
    }

    pub fn category(&self) -> &'static str {
        match self.exit_code() {
            2 => "usage",
            4 => "numeric",
            _ => "data",
        }
    }

    /// One JSON object on one line.
    pub fn to_json_line(&self) -> String {
        serde_json::json!({
            "error": self.category(),
            "code": self.exit_code(),
            "message": self.to_string(),
        })
        .to_string()
    }
}

fn is_numeric(e: &CoreError) -> bool {
    matches!(
        e,
        CoreError::NonFinite(_)
            | CoreError::SingularSystem
            | CoreError::DomainError { .. }
            | CoreError::DegenerateSpread
    )
}
