use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid Hamiltonian: {0}")]
    InvalidSpec(String),

    #[error("Hamiltonian outside the admissible class: {0}")]
    OutsideClass(String),

    #[error("grid under-resolves epsilon = {epsilon}: axis {axis} needs at least {required} cells, has {actual}")]
    UnderResolved {
        epsilon: f64,
        axis: usize,
        required: usize,
        actual: usize,
    },

    #[error("{what} = {value} lies outside [{min}, {max}]")]
    OutOfRange {
        what: String,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("marching diverged at step {step} (t = {time})")]
    Divergence { step: usize, time: f64 },

    #[error("no convergence after {iterations} iterations (last residual {last:.3e})")]
    NonConvergence {
        iterations: usize,
        last: f64,
        history: Vec<f64>,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerics (as opposed to rejected input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Divergence { .. } | Error::NonConvergence { .. } | Error::OutOfRange { .. }
        )
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn spec(msg: impl Into<String>) -> Self {
        Error::InvalidSpec(msg.into())
    }
}
