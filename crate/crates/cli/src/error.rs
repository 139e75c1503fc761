use std::path::PathBuf;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    /// Bad flags, config keys or values, or parameter combinations.
    pub const CONFIG: i32 = 2;
    /// Missing, unreadable or malformed input files.
    pub const DATA: i32 = 3;
    /// Numerical failure during computation.
    pub const NUMERICAL: i32 = 4;
    /// Another run holds the output directory.
    pub const LOCKED: i32 = 5;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("output directory is locked by {}; remove it if no other run is active", .0.display())]
    Locked(PathBuf),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => exit::CONFIG,
            CliError::Data(_) => exit::DATA,
            CliError::Numerical(_) => exit::NUMERICAL,
            CliError::Locked(_) => exit::LOCKED,
        }
    }
}

impl From<beamcausal::Error> for CliError {
    fn from(e: beamcausal::Error) -> Self {
        use beamcausal::Error as E;
        match e {
            E::InvalidArgument(_) => CliError::Config(e.to_string()),
            E::Numerical(_) => CliError::Numerical(e.to_string()),
            E::Parse { .. } | E::Schema { .. } | E::Io(_) => CliError::Data(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
