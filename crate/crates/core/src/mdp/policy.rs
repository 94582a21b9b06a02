use std::collections::BTreeMap;

use crate::error::{Error, Result};

use super::{ActionId, StateId};

/// A partial policy completed by a reflex action.
///
/// States in the declared domain use their mapped action; every other state
/// of the system automaton uses `reflex`, so the policy is always total.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Policy {
    actions: BTreeMap<StateId, ActionId>,
    reflex: ActionId,
}

impl Policy {
    pub fn new(actions: BTreeMap<StateId, ActionId>, reflex: ActionId) -> Self {
        Self { actions, reflex }
    }

    /// The policy that applies `reflex` everywhere.
    pub fn reflex_only(reflex: ActionId) -> Self {
        Self {
            actions: BTreeMap::new(),
            reflex,
        }
    }

    /// A policy whose domain is every state `0..actions.len()`.
    pub fn total(actions: &[ActionId], reflex: ActionId) -> Self {
        Self {
            actions: actions.iter().copied().enumerate().collect(),
            reflex,
        }
    }

    #[inline]
    pub fn action(&self, state: StateId) -> ActionId {
        self.actions.get(&state).copied().unwrap_or(self.reflex)
    }

    pub fn reflex(&self) -> ActionId {
        self.reflex
    }

    pub fn in_domain(&self, state: StateId) -> bool {
        self.actions.contains_key(&state)
    }

    pub fn domain(&self) -> impl Iterator<Item = StateId> + '_ {
        self.actions.keys().copied()
    }

    pub fn domain_len(&self) -> usize {
        self.actions.len()
    }

    pub fn mapped(&self) -> &BTreeMap<StateId, ActionId> {
        &self.actions
    }

    pub fn set(&mut self, state: StateId, action: ActionId) {
        self.actions.insert(state, action);
    }

    pub fn unset(&mut self, state: StateId) {
        self.actions.remove(&state);
    }

    /// Resolve the action of every state `0..num_states`.
    pub fn to_dense(&self, num_states: usize) -> Vec<ActionId> {
        let mut out = vec![self.reflex; num_states];
        for (&s, &a) in self.actions.range(..num_states) {
            out[s] = a;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    /// Computed on the full system automaton.
    ExactFull,
    /// Computed on a restricted automaton (lower bound when OUT is a sink).
    RestrictedEstimate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunction {
    pub values: Vec<f64>,
    pub provenance: Provenance,
}

impl ValueFunction {
    pub fn new(values: Vec<f64>, provenance: Provenance) -> Self {
        Self { values, provenance }
    }

    #[inline]
    pub fn get(&self, state: StateId) -> f64 {
        self.values[state]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Largest absolute difference against another value vector.
    pub fn sup_distance(&self, other: &[f64]) -> f64 {
        self.values
            .iter()
            .zip(other)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TieBreak {
    LowestActionId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Discount factor in `[0, 1)`.
    pub gamma: f64,
    /// Sup-norm Bellman residual at which an iterate is accepted.
    pub eval_tolerance: f64,
    pub max_eval_sweeps: usize,
    /// Cap on policy-iteration rounds; hitting it returns `converged = false`.
    pub max_rounds: usize,
    pub tie_break: TieBreak,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            gamma: 0.95,
            eval_tolerance: 1e-9,
            max_eval_sweeps: 1_000_000,
            max_rounds: 100_000,
            tie_break: TieBreak::LowestActionId,
        }
    }
}

impl SolverConfig {
    pub fn with_gamma(gamma: f64) -> Self {
        Self {
            gamma,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::InvalidConfig(format!(
                "gamma must lie in [0, 1), got {}",
                self.gamma
            )));
        }
        if !(self.eval_tolerance > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "eval_tolerance must be positive, got {}",
                self.eval_tolerance
            )));
        }
        if self.max_eval_sweeps == 0 || self.max_rounds == 0 {
            return Err(Error::InvalidConfig("sweep and round caps must be positive".into()));
        }
        Ok(())
    }

    /// `-1 / (1 - gamma)`, the value of never reaching a goal.
    pub fn floor_value(&self) -> f64 {
        -1.0 / (1.0 - self.gamma)
    }
}
