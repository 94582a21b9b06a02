//! Restricted automata and the envelope alteration toolkit.

mod alter;
mod analysis;
mod restrict;
mod search;
mod strategy;

pub use alter::{extend_path_back, extend_path_to_goal, extend_robustify, prune, Alteration};
pub use analysis::{
    action_fringe, extension_order, falling_out_distribution, fringe, occupancy, FallOutAnalysis, FALL_OUT_SWEEP_CAP,
};
pub use restrict::{
    out_value, restrict, Envelope, EnvelopeValues, Reentry, RestrictedAutomaton, RestrictedSolution,
};
pub use search::{find_path, find_path_to, PathResult};
pub use strategy::{
    apply_strategy, DeliberationStrategy, PlanState, Primitive, StepReport, StrategyContext,
    StrategyOutcome,
};
