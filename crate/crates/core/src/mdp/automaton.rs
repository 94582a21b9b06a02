use std::collections::BTreeSet;
use std::fmt;

use crate::error::{Error, Result};

/// Dense index of a system state.
pub type StateId = usize;
/// Dense index of an action.
pub type ActionId = usize;

/// Tolerance on transition-row sums.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub to: StateId,
    pub prob: f64,
}

/// A finite stochastic automaton with sparse transitions.
///
/// Rows are stored in compressed form, one row per `(state, action)` pair.
/// An empty row means the action is not available in that state.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticAutomaton {
    num_states: usize,
    num_actions: usize,
    offsets: Vec<usize>,
    entries: Vec<Transition>,
    goals: Vec<StateId>,
    is_goal: Vec<bool>,
}

/// A single invariant violation reported by [`StochasticAutomaton::validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    RowSum {
        state: StateId,
        action: ActionId,
        sum: f64,
    },
    NegativeMass {
        state: StateId,
        action: ActionId,
        successor: StateId,
        prob: f64,
    },
    DanglingSuccessor {
        state: StateId,
        action: ActionId,
        successor: StateId,
    },
    DuplicateSuccessor {
        state: StateId,
        action: ActionId,
        successor: StateId,
    },
    DanglingGoal {
        state: StateId,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::RowSum { state, action, sum } => {
                write!(f, "row (state {state}, action {action}) sums to {sum}")
            }
            Violation::NegativeMass {
                state,
                action,
                successor,
                prob,
            } => write!(
                f,
                "row (state {state}, action {action}) has negative mass {prob} on successor {successor}"
            ),
            Violation::DanglingSuccessor {
                state,
                action,
                successor,
            } => write!(
                f,
                "row (state {state}, action {action}) names successor {successor} outside the state space"
            ),
            Violation::DuplicateSuccessor {
                state,
                action,
                successor,
            } => write!(
                f,
                "row (state {state}, action {action}) lists successor {successor} more than once"
            ),
            Violation::DanglingGoal { state } => {
                write!(f, "goal {state} is outside the state space")
            }
        }
    }
}

impl StochasticAutomaton {
    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    #[inline]
    pub fn row(&self, state: StateId, action: ActionId) -> &[Transition] {
        let r = state * self.num_actions + action;
        &self.entries[self.offsets[r]..self.offsets[r + 1]]
    }

    pub fn has_action(&self, state: StateId, action: ActionId) -> bool {
        !self.row(state, action).is_empty()
    }

    /// Actions with a non-empty row in `state`, in increasing id order.
    pub fn actions(&self, state: StateId) -> impl Iterator<Item = ActionId> + '_ {
        (0..self.num_actions).filter(move |&a| self.has_action(state, a))
    }

    pub fn goals(&self) -> &[StateId] {
        &self.goals
    }

    #[inline]
    pub fn is_goal(&self, state: StateId) -> bool {
        self.is_goal.get(state).copied().unwrap_or(false)
    }

    pub fn num_transitions(&self) -> usize {
        self.entries.len()
    }

    pub fn check_state(&self, state: StateId) -> Result<()> {
        if state < self.num_states {
            Ok(())
        } else {
            Err(Error::StateOutOfRange {
                state,
                len: self.num_states,
            })
        }
    }

    /// Report every violated structural invariant. An empty list means the
    /// automaton is well formed.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for state in 0..self.num_states {
            for action in 0..self.num_actions {
                let row = self.row(state, action);
                if row.is_empty() {
                    continue;
                }
                let mut seen = BTreeSet::new();
                let mut sum = 0.0;
                for t in row {
                    if t.to >= self.num_states {
                        out.push(Violation::DanglingSuccessor {
                            state,
                            action,
                            successor: t.to,
                        });
                    }
                    if !seen.insert(t.to) {
                        out.push(Violation::DuplicateSuccessor {
                            state,
                            action,
                            successor: t.to,
                        });
                    }
                    if t.prob < 0.0 || t.prob.is_nan() {
                        out.push(Violation::NegativeMass {
                            state,
                            action,
                            successor: t.to,
                            prob: t.prob,
                        });
                    }
                    sum += t.prob;
                }
                if (sum - 1.0).abs() > ROW_SUM_TOLERANCE || sum.is_nan() {
                    out.push(Violation::RowSum { state, action, sum });
                }
            }
        }
        for &g in &self.goals {
            if g >= self.num_states {
                out.push(Violation::DanglingGoal { state: g });
            }
        }
        out
    }

    /// Copy of this automaton in which every goal state self-transitions
    /// with probability 1 under every action.
    pub fn with_absorbing_goals(&self) -> StochasticAutomaton {
        let mut b = AutomatonBuilder::new(self.num_states, self.num_actions);
        for s in 0..self.num_states {
            for a in 0..self.num_actions {
                if self.is_goal(s) {
                    b.set_row(s, a, vec![(s, 1.0)]);
                } else {
                    b.set_row(s, a, self.row(s, a).iter().map(|t| (t.to, t.prob)).collect());
                }
            }
        }
        for &g in &self.goals {
            b.add_goal(g);
        }
        b.build()
    }

    /// Copy of this automaton with a different goal set; transitions unchanged.
    pub fn with_goals(&self, goals: impl IntoIterator<Item = StateId>) -> StochasticAutomaton {
        let mut out = self.clone();
        out.is_goal = vec![false; self.num_states];
        let set: BTreeSet<StateId> = goals.into_iter().collect();
        out.goals = set.into_iter().collect();
        for &g in &out.goals {
            if g < self.num_states {
                out.is_goal[g] = true;
            }
        }
        out
    }
}

/// Row-at-a-time builder for [`StochasticAutomaton`].
#[derive(Debug, Clone)]
pub struct AutomatonBuilder {
    num_states: usize,
    num_actions: usize,
    rows: Vec<Vec<Transition>>,
    goals: BTreeSet<StateId>,
}

impl AutomatonBuilder {
    pub fn new(num_states: usize, num_actions: usize) -> Self {
        Self {
            num_states,
            num_actions,
            rows: vec![Vec::new(); num_states * num_actions],
            goals: BTreeSet::new(),
        }
    }

    /// Replace the row for `(state, action)`. Panics if `state` or `action`
    /// is outside the declared dimensions; successor indices are not checked.
    pub fn set_row(&mut self, state: StateId, action: ActionId, row: Vec<(StateId, f64)>) -> &mut Self {
        assert!(state < self.num_states && action < self.num_actions);
        self.rows[state * self.num_actions + action] = row
            .into_iter()
            .map(|(to, prob)| Transition { to, prob })
            .collect();
        self
    }

    pub fn add_goal(&mut self, state: StateId) -> &mut Self {
        self.goals.insert(state);
        self
    }

    /// Build without validation; call [`StochasticAutomaton::validate`] to
    /// obtain diagnostics.
    pub fn build(self) -> StochasticAutomaton {
        let mut offsets = Vec::with_capacity(self.rows.len() + 1);
        let mut entries = Vec::with_capacity(self.rows.iter().map(Vec::len).sum());
        offsets.push(0);
        for row in self.rows {
            entries.extend(row);
            offsets.push(entries.len());
        }
        let mut is_goal = vec![false; self.num_states];
        for &g in &self.goals {
            if g < self.num_states {
                is_goal[g] = true;
            }
        }
        StochasticAutomaton {
            num_states: self.num_states,
            num_actions: self.num_actions,
            offsets,
            entries,
            goals: self.goals.into_iter().collect(),
            is_goal,
        }
    }

    /// Build and reject any automaton with invariant violations.
    pub fn build_checked(self) -> Result<StochasticAutomaton> {
        let a = self.build();
        let v = a.validate();
        if v.is_empty() {
            Ok(a)
        } else {
            Err(Error::InvalidAutomaton(v))
        }
    }
}

/// Per-state reward for goals of achievement: 0 on goals, -1 elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardSpec {
    rewards: Vec<f64>,
}

impl RewardSpec {
    pub fn goal_of_achievement(automaton: &StochasticAutomaton) -> Self {
        Self::from_goals(automaton.num_states(), automaton.goals().iter().copied())
    }

    pub fn from_goals(num_states: usize, goals: impl IntoIterator<Item = StateId>) -> Self {
        let mut rewards = vec![-1.0; num_states];
        for g in goals {
            if g < num_states {
                rewards[g] = 0.0;
            }
        }
        Self { rewards }
    }

    #[inline]
    pub fn reward(&self, state: StateId) -> f64 {
        self.rewards[state]
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.rewards
    }
}
