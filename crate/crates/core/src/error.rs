use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Failure classes shared by every module of the crate.
#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    /// Shapes of vectors or matrices do not line up.
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    /// Input data is unusable (empty, non-finite, misaligned).
    #[error("invalid data: {0}")]
    Data(String),
    /// A configuration value is out of its allowed range.
    #[error("invalid configuration: {0}")]
    Config(String),
    /// A numerical procedure failed or produced non-finite values.
    #[error("numerical failure: {0}")]
    Numerical(String),
    /// Lyapunov accumulation blew up at a given trajectory step.
    #[error("non-finite growth at step {step}")]
    NonFiniteGrowth { step: usize },
    /// A metric is undefined for the given data (e.g. NRMSE of a constant target).
    #[error("undefined metric: {0}")]
    Undefined(String),
    #[error("layer {layer}: {source}")]
    Layer {
        layer: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn in_layer(self, layer: usize) -> Self {
        Error::Layer {
            layer,
            source: Box::new(self),
        }
    }

    /// The innermost error, with any layer tags stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::Layer { source, .. } => source.root(),
            other => other,
        }
    }
}

pub(crate) fn check_dim(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { context, expected, got })
    }
}
