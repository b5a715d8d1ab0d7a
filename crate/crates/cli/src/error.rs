use deepesn::Error;

/// Failure of a subcommand, mapped to a process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{module}: {source}")]
    Numerical {
        module: &'static str,
        #[source]
        source: Error,
    },
    #[error("model file: {0}")]
    Model(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Model(_) => 2,
            Self::Numerical { .. } => 3,
            Self::Io(_) => 1,
        }
    }

    /// Wraps a library error raised in `module`. Configuration problems keep
    /// their usage exit code; everything else is a numerical failure.
    pub fn from_core(module: &'static str, e: Error) -> Self {
        match e.root() {
            Error::Config(_) | Error::Dimension { .. } => Self::Config(format!("{module}: {e}")),
            _ => Self::Numerical { module, source: e },
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e.to_string())
    }
}

/// Tags library results with the module they came from.
pub trait Tag<T> {
    fn tag(self, module: &'static str) -> Result<T, CliError>;
}

impl<T> Tag<T> for deepesn::Result<T> {
    fn tag(self, module: &'static str) -> Result<T, CliError> {
        self.map_err(|e| CliError::from_core(module, e))
    }
}
