use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error at `{path}`: {msg}")]
    Config { path: String, msg: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn config(path: impl Into<String>, msg: impl Into<String>) -> Self {
        CliError::Config { path: path.into(), msg: msg.into() }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    /// Process exit status: 2 for bad configuration or data, 3 for numerical
    /// failures, 1 for file-system errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } | CliError::Data(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io { .. } => 1,
        }
    }

    /// Classifies a core error raised while building models from the config.
    pub(crate) fn from_core_config(path: &str, err: lfm_core::Error) -> Self {
        if err.is_numerical() {
            CliError::Numerical(err.to_string())
        } else {
            CliError::config(path, err.to_string())
        }
    }

    /// Classifies a core error raised while running inference on data.
    pub(crate) fn from_core_run(err: lfm_core::Error) -> Self {
        match err {
            lfm_core::Error::InvalidInput(msg) => CliError::Data(msg),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::config("a.b", "bad").exit_code(), 2);
        assert_eq!(CliError::Data("x".into()).exit_code(), 2);
        assert_eq!(CliError::Numerical("x".into()).exit_code(), 3);
        let io = CliError::io("/nope", std::io::Error::from(std::io::ErrorKind::NotFound));
        assert_eq!(io.exit_code(), 1);
    }

    #[test]
    fn core_classification() {
        let e = CliError::from_core_run(lfm_core::Error::NumericalFailure("nan".into()));
        assert_eq!(e.exit_code(), 3);
        let e = CliError::from_core_config("slds", lfm_core::Error::InvalidInput("bad".into()));
        assert!(matches!(e, CliError::Config { ref path, .. } if path == "slds"));
    }
}
