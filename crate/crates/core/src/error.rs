use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

/// Errors raised by the core algorithms.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Shapes or configuration values that cannot work together.
    Config(String),
    /// A value became NaN or infinite.
    NonFinite { context: String },
    /// `backward` was called without a matching forward cache.
    MissingCache,
    /// A group with no parameters was handed to an importance metric.
    EmptyGroup,
    /// A component range covers no layers.
    EmptyComponent(String),
    /// A component has no layer reading from another component or the data.
    BoundaryLayerMissing(String),
    /// A removal would leave a layer with zero output units.
    DegenerateLayer { layer: usize },
    /// Group ids, gradients, or lambdas don't line up.
    Mismatch(String),
    /// No pruning plan can satisfy the requested sparsity.
    Infeasible(String),
    /// Training produced a non-finite loss.
    Diverged { epoch: usize, iteration: usize, loss: f64 },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Config(msg) => write!(f, "configuration error: {msg}"),
            Error::NonFinite { context } => write!(f, "non-finite value in {context}"),
            Error::MissingCache => f.write_str("backward called without a matching forward cache"),
            Error::EmptyGroup => f.write_str("empty parameter group"),
            Error::EmptyComponent(name) => write!(f, "component `{name}` has no layers"),
            Error::BoundaryLayerMissing(name) => {
                write!(f, "component `{name}` has no input from the data or another component")
            }
            Error::DegenerateLayer { layer } => {
                write!(f, "removal would leave layer {layer} without output units")
            }
            Error::Mismatch(msg) => write!(f, "mismatch: {msg}"),
            Error::Infeasible(msg) => write!(f, "infeasible pruning target: {msg}"),
            Error::Diverged { epoch, iteration, loss } => {
                write!(f, "loss became {loss} at epoch {epoch}, iteration {iteration}")
            }
        }
    }
}

impl core::error::Error for Error {}
