use std::fmt;

use attractor_lab::error::Error as CoreError;

/// Failure classes of a CLI invocation, one per exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad manifest, flags or inputs. Exit 1.
    Validation(String),
    /// A solver aborted. Exit 2.
    Solver(String),
    /// Tracking or section check failed. Exit 3.
    Verification(String),
    /// Reading or writing artifacts failed. Exit 1.
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) | CliError::Io(_) => 1,
            CliError::Solver(_) => 2,
            CliError::Verification(_) => 3,
        }
    }

    pub fn field(field: &str, msg: impl fmt::Display) -> Self {
        CliError::Validation(format!("{field}: {msg}"))
    }

    /// Wrap a core error raised while handling `context`.
    pub fn core(context: &str, err: CoreError) -> Self {
        let msg = format!("{context}: {err}");
        match err {
            CoreError::Diverged { .. } | CoreError::NonlinearityEval { .. } => CliError::Solver(msg),
            CoreError::Io(_) => CliError::Io(msg),
            _ => CliError::Validation(msg),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "validation error: {m}"),
            CliError::Solver(m) => write!(f, "solver failure: {m}"),
            CliError::Verification(m) => write!(f, "verification failed: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
