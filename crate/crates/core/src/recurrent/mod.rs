//! Recurrent deliberation: strategy rosters, improvement statistics and the
//! planner/executor simulation.

mod eiv;
mod run;
mod table;

pub use eiv::{eiv_sample, fatness, myopic_strategy_value, standard_strategy_roster, STANDARD_ROSTER};
pub use run::*;
pub use table::*;
