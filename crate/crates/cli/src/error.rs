use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] mcaurora::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Invalid experiment configuration, with a 1-based line when known.
    #[error("{}", format_config_error(*.line, .message))]
    Config { line: Option<usize>, message: String },

    #[error("unknown preset '{0}'")]
    UnknownPreset(String),

    #[error("missing artifacts in {dir}: expected {}", .expected.join(", "))]
    MissingArtifacts { dir: PathBuf, expected: Vec<String> },

    #[error("malformed {path}: {message}")]
    Malformed { path: PathBuf, message: String },
}

fn format_config_error(line: Option<usize>, message: &str) -> String {
    match line {
        Some(l) => format!("config line {l}: {message}"),
        None => format!("config: {message}"),
    }
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
