use thiserror::Error;

/// Errors raised by the abstraction toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A vector argument left its box along a specific axis.
    #[error("{what} component {axis} = {value} outside [{lower}, {upper}]")]
    OutOfBox {
        what: &'static str,
        axis: usize,
        value: f64,
        lower: f64,
        upper: f64,
    },

    /// A comparison function or certificate does not have the required class.
    #[error("invalid certificate: {0}")]
    InvalidCertificate(String),

    /// A caller-supplied parameter is inconsistent.
    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// The coupling maps internal outputs outside the internal input sets.
    #[error("interconnection is not well-posed: coordinate {coordinate} overshoots by {overshoot:e}")]
    Interconnection { coordinate: usize, overshoot: f64 },

    #[error("quantization error: {0}")]
    Quantization(String),

    /// An enumeration exceeded its configured cap.
    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("unsupported dynamics: {0}")]
    UnsupportedDynamics(String),

    /// A state/input/internal-input triple without successors.
    #[error("blocking triple: state {state}, input {input}, internal {internal}")]
    Blocking {
        state: usize,
        input: usize,
        internal: usize,
    },

    #[error("structural error: {0}")]
    Structure(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Composition refused because a compositionality condition failed.
    #[error("composition refused: condition {0} failed")]
    ConditionFailed(&'static str),

    #[error("numerical error: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
