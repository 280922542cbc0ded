use std::fmt;
use std::io;
use std::path::{Path, PathBuf};

/// Failure classes of a command, each with its own exit status.
#[derive(Debug)]
pub enum CliError {
    /// Bad or inconsistent input: unknown keys, unparsable values, invalid
    /// grids, unreadable files.
    Config(String),
    /// A simulation or fit broke down.
    Numerical(String),
    Io { path: PathBuf, source: io::Error },
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn io(path: &Path, source: io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io { .. } => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
            CliError::Io { path, source } => write!(f, "{}: {source}", path.display()),
        }
    }
}

impl std::error::Error for CliError {}

/// Core errors split by cause: argument and configuration problems are the
/// user's to fix, the rest are numerical.
impl From<spinmem_core::Error> for CliError {
    fn from(e: spinmem_core::Error) -> Self {
        use spinmem_core::Error as E;
        match e {
            E::InvalidArgument { .. } | E::Config(_) => CliError::Config(e.to_string()),
            E::Unstable { .. } | E::NoConvergence { .. } | E::CalibrationFailed { .. } => {
                CliError::Numerical(e.to_string())
            }
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Config(format!("csv: {e}"))
    }
}

pub type CliResult<T> = Result<T, CliError>;
