use thiserror::Error;

use crate::state::{BoxViolation, Violation};

/// Errors produced by the simulator and the experiment drivers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{what}: expected length {expected}, got {actual}")]
    Shape {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("grid needs at least {min} cells, got {n_cells}")]
    GridTooSmall { n_cells: usize, min: usize },

    #[error("invalid physical parameters: {0}")]
    InvalidParams(String),

    #[error("invalid state: {}", join_violations(.0))]
    InvalidState(Vec<Violation>),

    #[error("invalid delta box: {0}")]
    InvalidBox(BoxViolation),

    #[error("invalid step control: {0}")]
    InvalidControl(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value in {field} at index {index} (t = {t}, dt = {dt})")]
    NonFinite {
        field: &'static str,
        index: usize,
        t: f64,
        dt: f64,
    },

    #[error("time step {dt} fell below dt_min {dt_min} at t = {t}")]
    DtUnderflow {
        t: f64,
        dt: f64,
        dt_min: f64,
        index: Option<usize>,
    },

    #[error("positivity breach in {field} at cell {index} (t = {t}, dt = {dt}, value = {value})")]
    PositivityBreach {
        field: &'static str,
        index: usize,
        value: f64,
        t: f64,
        dt: f64,
    },

    #[error("no admissible initial datum after {draws} draws")]
    RejectionExhausted { draws: usize },

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("invalid configuration: {}", .0.join("; "))]
    Config(Vec<String>),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Short machine-readable name, used for the NDJSON error stream.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Shape { .. } => "shape",
            Error::GridTooSmall { .. } => "grid",
            Error::InvalidParams(_) => "params",
            Error::InvalidState(_) => "state",
            Error::InvalidBox(_) => "box",
            Error::InvalidControl(_) => "control",
            Error::InvalidArgument(_) => "argument",
            Error::NonFinite { .. } => "non_finite",
            Error::DtUnderflow { .. } => "dt_underflow",
            Error::PositivityBreach { .. } => "positivity_breach",
            Error::RejectionExhausted { .. } => "rejection_exhausted",
            Error::Fit(_) => "fit",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
        }
    }

    /// True for failures raised while integrating in time.
    pub fn is_runtime(&self) -> bool {
        matches!(
            self,
            Error::NonFinite { .. } | Error::DtUnderflow { .. } | Error::PositivityBreach { .. }
        )
    }

    pub fn time(&self) -> Option<f64> {
        match self {
            Error::NonFinite { t, .. }
            | Error::DtUnderflow { t, .. }
            | Error::PositivityBreach { t, .. } => Some(*t),
            _ => None,
        }
    }

    pub fn index(&self) -> Option<usize> {
        match self {
            Error::NonFinite { index, .. } | Error::PositivityBreach { index, .. } => Some(*index),
            Error::DtUnderflow { index, .. } => *index,
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

pub type Result<T> = std::result::Result<T, Error>;
