//! Offline gradient-spike analysis.
//!
//! The spike score of a gradient entry is its magnitude divided by the
//! mean magnitude of the same coordinate over the whole recorded trace.
//! [`detect_spikes`] works on a complete [`GradientTrace`]; the online
//! counterpart ([`RunningAbsMean`]) only sees the history so far.

mod export;
mod gss;
mod moments;
mod nullify;
mod trace;

pub use export::{
    read_layout_csv, read_trace_csv, write_events_csv, write_layout_csv, write_stats_csv,
    write_trace_csv,
};
pub use gss::{detect_spikes, gss, segment_stats, SegmentSpikeStats, SpikeEvent};
pub use moments::{simulate_moments, MomentSimConfig, MomentSimResult};
pub use nullify::{nullify_filter, RunningAbsMean};
pub use trace::GradientTrace;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SpikeLabError {
    #[error("coordinate {0} has an all-zero history; its spike score is undefined")]
    UndefinedScore(usize),
    #[error("coordinate {0} is not recorded in the trace")]
    UnknownCoordinate(usize),
    #[error("record has length {got}, trace expects {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("invalid moment simulation config: {0}")]
    InvalidConfig(String),
    #[error("malformed trace csv: {0}")]
    Format(String),
    #[error(transparent)]
    Param(#[from] crate::params::ParamError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
