//! Dynamic-programming primitives over sparse stochastic automata.

mod automaton;
mod distribution;
mod policy;
mod random;
mod solve;
mod text;

pub use automaton::{
    ActionId, AutomatonBuilder, RewardSpec, StateId, StochasticAutomaton, Transition, Violation,
    ROW_SUM_TOLERANCE,
};
pub use distribution::{
    discounted_step_cost, n_step_distribution, n_step_distribution_with, push_forward,
    undiscounted_step_cost, TransitionDistribution,
};
pub use random::random_automaton;
pub use policy::{Policy, Provenance, SolverConfig, TieBreak, ValueFunction};
pub use solve::{
    policy_evaluate, policy_improve, policy_iteration, policy_iteration_warm, q_value, q_values,
    value_iteration, PiOutcome, PolicyIteration, TickBudget,
};
pub(crate) use solve::evaluate_in_place;
pub use text::AUTOMATON_HEADER;
