use thiserror::Error;

/// Errors raised by the laboratory.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum HrError {
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("shape mismatch: expected {expected} nodes, found {found}")]
    ShapeMismatch { expected: usize, found: usize },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("numerical blow-up at step {step} (t = {time}): monitor `{monitor}` reached {value:e}")]
    BlowUp {
        step: u64,
        time: f64,
        monitor: &'static str,
        value: f64,
    },

    #[error("ensemble member {member}: {source}")]
    Member {
        member: usize,
        #[source]
        source: Box<HrError>,
    },

    #[error("times are not aligned with the step dt = {dt}: {detail}")]
    MisalignedTimes { dt: f64, detail: String },

    #[error("step guard exceeded: {steps} steps requested, limit {limit}")]
    StepLimit { steps: u64, limit: u64 },

    #[error("empty point cloud")]
    EmptyCloud,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("unsupported forcing: {0}")]
    UnboundedForcing(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl HrError {
    /// True for faults of the numerical integration (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        match self {
            HrError::BlowUp { .. } | HrError::StepLimit { .. } => true,
            HrError::Member { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, HrError>;
