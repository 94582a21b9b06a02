//! Anytime planning for goal-directed navigation in sparse stochastic
//! automata: envelope-restricted policy iteration plus precursor and
//! recurrent deliberation scheduling driven by gathered statistics.

pub mod cost;
pub mod envelope;
pub mod error;
pub mod gridworld;
pub mod mdp;
pub mod precursor;
pub mod recurrent;
pub mod stats;

pub use error::{Error, Result};
