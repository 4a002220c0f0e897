use std::path::PathBuf;

use thiserror::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] optproxy::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Config(_) | Self::Core(optproxy::Error::Config(_)) => "config",
            Self::Core(e) if e.is_numerical() => "numerical",
            Self::Schema(_) | Self::Core(optproxy::Error::Schema(_)) => "schema",
            _ => "data",
        }
    }

    /// 1 for configuration errors, 2 for bad data, 3 for numerical failures.
    pub fn exit_code(&self) -> u8 {
        match self.kind() {
            "config" => 1,
            "numerical" => 3,
            _ => 2,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({
            "error": self.kind(),
            "exit_code": self.exit_code(),
            "message": self.to_string(),
        })
        .to_string()
    }
}
