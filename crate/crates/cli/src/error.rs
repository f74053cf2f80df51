use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("{context}: {source}")]
    Core {
        context: String,
        #[source]
        source: slowlight::Error,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn core(context: impl Into<String>, source: slowlight::Error) -> Self {
        CliError::Core {
            context: context.into(),
            source,
        }
    }

    /// Process exit status: 2 configuration, 3 refused or invalid
    /// parameters, 4 numerical failure, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        use slowlight::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Core { source, .. } => match source {
                E::Parse(_) => 2,
                E::NumericalFailure { .. } => 4,
                E::Io(_) => 1,
                _ => 3,
            },
            CliError::Io(_) => 1,
        }
    }
}

/// Attaches scenario context to core errors.
pub trait Context<T> {
    fn context(self, what: impl FnOnce() -> String) -> Result<T, CliError>;
}

impl<T> Context<T> for slowlight::Result<T> {
    fn context(self, what: impl FnOnce() -> String) -> Result<T, CliError> {
        self.map_err(|e| CliError::core(what(), e))
    }
}
