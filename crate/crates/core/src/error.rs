use thiserror::Error;

use crate::agents::ControllerKind;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("weight vector has zero norm and no direction")]
    ZeroNorm,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("time {t} s outside trial window [0, {duration}] s")]
    TimeOutOfRange { t: f64, duration: f64 },
    #[error("controller library has no {0:?} controllers")]
    EmptyLibrary(ControllerKind),
    #[error("unknown controller id `{0}`")]
    UnknownController(String),
    #[error("controller `{id}` is {found:?}, slot requires {expected:?}")]
    ControllerKindMismatch {
        id: String,
        expected: ControllerKind,
        found: ControllerKind,
    },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("reference has zero RMS, tracking loss undefined")]
    DegenerateReference,
    #[error("need at least {needed} rows, got {got}")]
    TooFewRows { needed: usize, got: usize },
    #[error("no trajectory passed the switching check after {0} draws")]
    TrajectoryRejected(usize),
    #[error("unknown trajectory id `{0}`")]
    UnknownTrajectory(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
