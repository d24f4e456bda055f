use avrc_core::AvrcError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("spec error: {0}")]
    Spec(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("solver did not converge: {0}")]
    NonConvergence(String),
    #[error("resource cap: {0}")]
    ResourceCap(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Core(AvrcError),
}

impl From<AvrcError> for CliError {
    fn from(e: AvrcError) -> Self {
        match e {
            AvrcError::ResourceCap(m) => CliError::ResourceCap(m),
            AvrcError::LinearProgram(m) => CliError::NonConvergence(m),
            AvrcError::InvalidChannel(m) | AvrcError::InvalidDistribution(m) => CliError::Spec(m),
            other => CliError::Core(other),
        }
    }
}

impl CliError {
    /// 0 success, 2 spec or usage error, 3 solver non-convergence, 4 resource cap.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Spec(_) | CliError::Usage(_) | CliError::Io(_) | CliError::Core(_) => 2,
            CliError::NonConvergence(_) => 3,
            CliError::ResourceCap(_) => 4,
        }
    }
}
