use std::path::PathBuf;

use thiserror::Error;

use crate::request_model::RequestId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("likelihood is unbounded: {0}")]
    Separation(String),

    #[error("weighted normal equations have no usable direction (zero Hessian)")]
    SingularDesign,

    #[error("destination category {0} has no observations and the penalty is disabled")]
    EmptyCategory(usize),

    #[error("invalid model input: {0}")]
    InvalidModel(String),

    #[error("no fitted model for stop {0}")]
    MissingModel(u32),

    #[error("request {id}: earliest pick-up {e_pick:.3} min lies outside the service window [{lo:.3}, {hi:.3}]")]
    OutOfService {
        id: RequestId,
        e_pick: f64,
        lo: f64,
        hi: f64,
    },

    #[error("unknown stop {0}")]
    UnknownStop(u32),

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("request {0} is already in the event graph")]
    DuplicateRequest(RequestId),

    #[error("request {0} is not in the event graph")]
    UnknownRequest(RequestId),

    #[error("fixed decisions are inconsistent: {0}")]
    InconsistentFixing(String),

    #[error("no completion of the fixed decisions exists: {0}")]
    Infeasible(String),

    #[error("no accepted requests, averages are undefined")]
    EmptyAcceptedSet,

    #[error("no direct connection from stop {origin} to stop {dest}")]
    NoConnection { origin: u32, dest: u32 },

    #[error("invalid timetable: {0}")]
    InvalidTimetable(String),

    #[error("{path}: row {row}: {msg}")]
    Schema {
        path: PathBuf,
        row: usize,
        msg: String,
    },

    #[error("{0}")]
    Input(String),

    #[error("weekday sets differ between reports: {0}")]
    MismatchedDays(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Infeasible(_) | Error::InconsistentFixing(_) => 3,
            _ => 2,
        }
    }
}
