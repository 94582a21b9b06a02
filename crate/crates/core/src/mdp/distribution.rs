use std::collections::BTreeMap;

use crate::error::{Error, Result};

use super::{ActionId, Policy, StateId, StochasticAutomaton};

/// Occupancy after a fixed number of steps under a fixed policy.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionDistribution {
    pub mass: BTreeMap<StateId, f64>,
    pub horizon: usize,
}

impl TransitionDistribution {
    pub fn point(state: StateId) -> Self {
        Self {
            mass: BTreeMap::from([(state, 1.0)]),
            horizon: 0,
        }
    }

    pub fn get(&self, state: StateId) -> f64 {
        self.mass.get(&state).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.mass.values().sum()
    }
}

/// One step of sparse push-forward. States for which `absorbing` holds keep
/// their mass.
pub fn push_forward(
    automaton: &StochasticAutomaton,
    mass: &BTreeMap<StateId, f64>,
    action_of: impl Fn(StateId) -> ActionId,
    absorbing: impl Fn(StateId) -> bool,
) -> Result<BTreeMap<StateId, f64>> {
    let mut next = BTreeMap::new();
    for (&s, &m) in mass {
        if m == 0.0 {
            continue;
        }
        if absorbing(s) {
            *next.entry(s).or_insert(0.0) += m;
            continue;
        }
        let a = action_of(s);
        let row = automaton.row(s, a);
        if row.is_empty() {
            return Err(Error::ActionUnavailable { state: s, action: a });
        }
        for t in row {
            *next.entry(t.to).or_insert(0.0) += m * t.prob;
        }
    }
    Ok(next)
}

/// Exact `n`-step state distribution from `start` following `policy`.
pub fn n_step_distribution(
    automaton: &StochasticAutomaton,
    policy: &Policy,
    start: StateId,
    n: usize,
) -> Result<TransitionDistribution> {
    n_step_distribution_with(automaton, |s| policy.action(s), start, n, |_| false)
}

/// As [`n_step_distribution`] with an explicit action rule and absorbing set.
pub fn n_step_distribution_with(
    automaton: &StochasticAutomaton,
    action_of: impl Fn(StateId) -> ActionId,
    start: StateId,
    n: usize,
    absorbing: impl Fn(StateId) -> bool,
) -> Result<TransitionDistribution> {
    automaton.check_state(start)?;
    let mut mass = BTreeMap::from([(start, 1.0)]);
    for _ in 0..n {
        mass = push_forward(automaton, &mass, &action_of, &absorbing)?;
    }
    Ok(TransitionDistribution { mass, horizon: n })
}

/// `-sum_{i<k} gamma^i = -(1 - gamma^k) / (1 - gamma)`.
pub fn discounted_step_cost(k: i64, gamma: f64) -> Result<f64> {
    if k < 0 {
        return Err(Error::InvalidArgument(format!("step count must be non-negative, got {k}")));
    }
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidArgument(format!("gamma must lie in [0, 1), got {gamma}")));
    }
    if k == 0 {
        return Ok(0.0);
    }
    let k = i32::try_from(k).unwrap_or(i32::MAX);
    Ok(-(1.0 - gamma.powi(k)) / (1.0 - gamma))
}

/// The `gamma -> 1` limit of [`discounted_step_cost`], i.e. `-k`.
pub fn undiscounted_step_cost(k: i64) -> Result<f64> {
    if k < 0 {
        return Err(Error::InvalidArgument(format!("step count must be non-negative, got {k}")));
    }
    Ok(-(k as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::AutomatonBuilder;

    fn chain(n: usize, p: f64) -> StochasticAutomaton {
        let mut b = AutomatonBuilder::new(n, 1);
        for s in 0..n {
            if s + 1 < n {
                if p < 1.0 {
                    b.set_row(s, 0, vec![(s, 1.0 - p), (s + 1, p)]);
                } else {
                    b.set_row(s, 0, vec![(s + 1, 1.0)]);
                }
            } else {
                b.set_row(s, 0, vec![(s, 1.0)]);
            }
        }
        b.build()
    }

    #[test]
    fn zero_steps_is_point_mass() {
        let a = chain(4, 0.8);
        let d = n_step_distribution(&a, &Policy::reflex_only(0), 1, 0).unwrap();
        assert_eq!(d, TransitionDistribution::point(1));
    }

    #[test]
    fn deterministic_chain_advances_three() {
        let a = chain(5, 1.0);
        let d = n_step_distribution(&a, &Policy::reflex_only(0), 0, 3).unwrap();
        assert_eq!(d.get(3), 1.0);
        assert_eq!(d.horizon, 3);
    }

    #[test]
    fn two_steps_match_outcome_enumeration() {
        let a = chain(5, 0.8);
        let d = n_step_distribution(&a, &Policy::reflex_only(0), 0, 2).unwrap();
        // Enumerate the four outcome sequences (advance/stay)^2.
        let mut oracle = BTreeMap::new();
        for first in [true, false] {
            for second in [true, false] {
                let pr = if first { 0.8 } else { 0.2 } * if second { 0.8 } else { 0.2 };
                let pos = first as usize + second as usize;
                *oracle.entry(pos).or_insert(0.0) += pr;
            }
        }
        assert!((oracle[&2] - 0.64f64).abs() < 1e-15);
        assert!((oracle[&1] - 0.32f64).abs() < 1e-15);
        assert!((oracle[&0] - 0.04f64).abs() < 1e-15);
        for (s, m) in oracle {
            assert!((d.get(s) - m).abs() < 1e-12);
        }
        assert!((d.total() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn step_cost_closed_form() {
        assert_eq!(discounted_step_cost(0, 0.9).unwrap(), 0.0);
        assert!((discounted_step_cost(1, 0.9).unwrap() + 1.0).abs() < 1e-12);
        assert!((discounted_step_cost(3, 0.9).unwrap() + 2.71).abs() < 1e-12);
        assert!(discounted_step_cost(-1, 0.9).is_err());
        assert!(discounted_step_cost(2, 1.0).is_err());
        assert_eq!(undiscounted_step_cost(7).unwrap(), -7.0);
    }
}
