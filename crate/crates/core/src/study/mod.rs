//! Deseasonalized event-time analysis of halt events.

mod average;
mod cumulative;
mod pattern;
mod trajectory;

pub use average::{group_average, GroupAverage};
pub use cumulative::{
    average_cumulative_return, event_returns, reversal_stats, stability_stat,
    CumulativeReturnCurve, ReversalFraction,
};
pub use pattern::{compute_intraday_pattern, deseasonalize, IntradayPattern, MeasureKind};
pub use trajectory::{extract_trajectory, EventTrajectory, TrajectoryWindow};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StudyError {
    #[error("{stock}: fewer than {needed} trading days of history before the halt")]
    InsufficientHistory { stock: String, needed: usize },
    #[error("{stock}: zero or undefined intraday baseline at minute {minute}")]
    ZeroBaseline { stock: String, minute: u16 },
    #[error("zero baseline")]
    ZeroDivisor,
    #[error("{stock}: post-resumption window extends past the end of data")]
    InsufficientPostWindow { stock: String },
    #[error("{stock}: bars missing inside the event window")]
    InsufficientWindow { stock: String },
    #[error("{stock}: event has no trend sign")]
    UnsignedEvent { stock: String },
    #[error("no data for stock {0}")]
    UnknownStock(String),
    #[error("group has no events")]
    EmptyGroup,
    #[error("trajectories disagree on measure or event-time axis")]
    MismatchedTrajectories,
}
