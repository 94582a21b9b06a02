//! Precursor deliberation: all planning happens before execution, under a
//! deadline or a per-tick delay cost.

mod profile;
mod run;

pub use profile::{BinningConfig, CellId, ProfileCell, ProfileSample, ProfileTable, DEFAULT_N_GRID};
pub use run::{
    gather_profile_statistics, greedy_round, run_precursor, trace_rows, Decision, DeliberationBudget,
    GatherConfig, GatherReport, PrecursorConfig, PrecursorMode, PrecursorRun, TraceEntry,
};
