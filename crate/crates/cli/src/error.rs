use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Invalid flags or inputs.
    #[error("{0}")]
    Usage(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Core(#[from] plastigen::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }

    pub fn exit_code(&self) -> ExitCode {
        use plastigen::Error as E;
        match self {
            CliError::Usage(_) => ExitCode::from(2),
            CliError::Io { .. } => ExitCode::from(1),
            CliError::Core(E::Io(_) | E::Json(_) | E::Csv(_) | E::Format(_)) => ExitCode::from(1),
            CliError::Core(_) => ExitCode::from(2),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
