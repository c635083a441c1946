use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// Process exit code: 1 for configuration problems, 2 otherwise.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Numerical(_) | CliError::Io(_) => 2,
        }
    }
}

impl From<incompref::Error> for CliError {
    fn from(e: incompref::Error) -> Self {
        use incompref::Error as E;
        match e {
            E::InvalidInput(_) | E::DimensionMismatch(..) | E::EmptySet(_) => CliError::Config(e.to_string()),
            E::Bracket(_) | E::Numerical(_) => CliError::Numerical(e.to_string()),
        }
    }
}
