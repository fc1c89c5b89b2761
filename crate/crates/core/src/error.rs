use thiserror::Error;

/// Errors produced by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid function length {len} does not match grid node count {m}")]
    LengthMismatch { len: usize, m: usize },

    #[error("non-finite value at node {node}{}", fmt_time(*.t))]
    NonFinite { node: usize, t: Option<f64> },

    #[error("mesh size mismatch: weights built for h = {weights_h}, grid has h = {grid_h}")]
    MeshMismatch { weights_h: f64, grid_h: f64 },

    #[error("solution blew up: sup norm {norm:e} exceeds guard {guard:e}{}", fmt_time(*.t))]
    BlowUp { norm: f64, guard: f64, t: Option<f64> },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("quadrature did not converge: `{quantity}` changed by {relative_change:.3e} when halving the step")]
    QuadratureNotConverged {
        quantity: &'static str,
        relative_change: f64,
    },

    #[error("maximum number of steps ({0}) exceeded")]
    MaxStepsExceeded(usize),

    #[error("step size {step:e} underflowed at t = {t}")]
    StepUnderflow { step: f64, t: f64 },

    #[error("grids are not nested: {0}")]
    NotNested(String),

    #[error("degenerate rate: {0}")]
    DegenerateRate(String),

    #[error("nonlinearity parse error: {0}")]
    Parse(String),

    #[error("unknown kernel `{0}`")]
    UnknownKernel(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn fmt_time(t: Option<f64>) -> String {
    match t {
        Some(t) => format!(" at t = {t}"),
        None => String::new(),
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// Attach an integration time to errors raised inside a right-hand side evaluation.
    pub(crate) fn at_time(self, time: f64) -> Self {
        match self {
            Error::NonFinite { node, t: None } => Error::NonFinite {
                node,
                t: Some(time),
            },
            Error::BlowUp {
                norm,
                guard,
                t: None,
            } => Error::BlowUp {
                norm,
                guard,
                t: Some(time),
            },
            other => other,
        }
    }
}
