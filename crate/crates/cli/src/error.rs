use std::fmt;
use std::path::Path;

use apcd::ApcdError;

pub const EXIT_OTHER: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_VALIDATION: u8 = 3;
pub const EXIT_CAPACITY: u8 = 4;
pub const EXIT_DIVERGENCE: u8 = 5;

#[derive(Debug)]
pub enum CliError {
    Core(ApcdError),
    Io(String, std::io::Error),
    Usage(String),
    Validation(String),
    Other(String),
    /// Already reported on stdout; carries the exit code.
    Reported(u8),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(ApcdError::Schedule(_)) | CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Core(ApcdError::Capacity { .. }) => EXIT_CAPACITY,
            CliError::Core(ApcdError::Divergence { .. }) => EXIT_DIVERGENCE,
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Reported(code) => *code,
            _ => EXIT_OTHER,
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io(path.display().to_string(), e)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(path, e) => write!(f, "{path}: {e}"),
            CliError::Usage(m) => write!(f, "usage: {m}"),
            CliError::Validation(m) => write!(f, "validation failed: {m}"),
            CliError::Other(m) => write!(f, "{m}"),
            CliError::Reported(code) => write!(f, "exit status {code}"),
        }
    }
}

impl From<ApcdError> for CliError {
    fn from(e: ApcdError) -> Self {
        CliError::Core(e)
    }
}

pub fn read_file(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

/// Writes through a temporary sibling and renames, so readers never see a
/// partial file.
pub fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    std::fs::write(&tmp, contents).map_err(|e| CliError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

pub fn create_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}
