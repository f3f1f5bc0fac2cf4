//! Regularized test-time objective and its optimizer.

mod config;
mod io;
mod loss;
mod optimize;

pub use config::{TuningConfig, CONFIG_KEYS};
pub use io::{parse_trace, render_trace, write_tune_result, ResultFiles, TRACE_HEADER};
pub use loss::{
    latent_reg, pair_starts, preserve_loss, temporal_distance, temporal_hinge, Evaluation, LossBreakdown, LossGraph, Pipeline,
    TuningProblem,
};
pub(crate) use optimize::BestTracker;
pub use optimize::{transfer, tune, tune_problem, StopReason, TraceRow, TransferReport, TuneResult};
