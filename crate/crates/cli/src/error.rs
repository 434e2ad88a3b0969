use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("cannot read {}: {source}", path.display())]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot write {}: {source}", path.display())]
    Write { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Failed(String),
    #[error(transparent)]
    Core(#[from] kernex::Error),
}

impl CliError {
    /// 2 for bad input or configuration, 1 for failures while running.
    pub fn exit_code(&self) -> u8 {
        use kernex::Error as E;
        match self {
            CliError::Config(_) | CliError::Read { .. } => 2,
            CliError::Write { .. } | CliError::Failed(_) => 1,
            CliError::Core(e) => match e {
                E::DimensionMismatch { .. }
                | E::InvalidSample(_)
                | E::InvalidDistribution(_)
                | E::InvalidParameter(_)
                | E::TooFewObservations { .. }
                | E::IncompatiblePolicy { .. }
                | E::EmptyKernelFamily
                | E::WindowOutOfRange { .. }
                | E::Config(_) => 2,
                E::Degenerate(_) | E::EnumerationCap { .. } | E::NotCertified { .. } | E::InsufficientRows { .. } => 1,
            },
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
