//! Envelope alteration operators. Each returns a new envelope and leaves its
//! input untouched.

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::mdp::{Policy, StateId, StochasticAutomaton};

use super::analysis::{falling_out_distribution, occupancy};
use super::search::{find_path, find_path_to};
use super::{Envelope, EnvelopeValues};

#[derive(Debug, Clone, PartialEq)]
pub struct Alteration {
    pub envelope: Envelope,
    pub added: Vec<StateId>,
    pub removed: Vec<StateId>,
    /// Fewer states were available than requested.
    pub saturated: bool,
}

impl Alteration {
    fn unchanged(envelope: &Envelope, saturated: bool) -> Self {
        Self {
            envelope: envelope.clone(),
            added: Vec::new(),
            removed: Vec::new(),
            saturated,
        }
    }

    pub fn changed(&self) -> usize {
        self.added.len() + self.removed.len()
    }
}

/// Add the `n` most likely falling-out states from `start`.
pub fn extend_robustify(
    automaton: &StochasticAutomaton,
    envelope: &Envelope,
    policy: &Policy,
    start: StateId,
    n: usize,
    tolerance: f64,
) -> Result<Alteration> {
    if n == 0 {
        return Err(Error::InvalidArgument("robustify needs N >= 1".into()));
    }
    let analysis = falling_out_distribution(automaton, envelope, policy, start, tolerance)?;
    let ranking = analysis.ranking();
    let saturated = ranking.len() < n;
    let mut next = envelope.clone();
    let added = next.extend(ranking.into_iter().take(n).map(|(s, _)| s));
    Ok(Alteration {
        envelope: next,
        added,
        removed: Vec::new(),
        saturated,
    })
}

/// Among members valued below `current`, remove the `n` with the smallest
/// discounted occupancy from `current` (ties by state id). `current`, goal
/// states and `protected` states are never removed.
#[allow(clippy::too_many_arguments)]
pub fn prune(
    automaton: &StochasticAutomaton,
    envelope: &Envelope,
    policy: &Policy,
    values: &EnvelopeValues,
    current: StateId,
    n: usize,
    protected: &[StateId],
    gamma: f64,
    tolerance: f64,
) -> Result<Alteration> {
    if !envelope.contains(current) {
        return Err(Error::OutsideEnvelope { state: current });
    }
    let keep: HashSet<StateId> = protected.iter().copied().chain([current]).collect();
    let threshold = values.get(current);
    let occ = occupancy(automaton, envelope, policy, current, gamma, tolerance)?;
    let mut candidates: Vec<(f64, StateId)> = envelope
        .iter()
        .zip(occ)
        .filter(|&(x, _)| !keep.contains(&x) && !automaton.is_goal(x) && values.get(x) < threshold)
        .map(|(x, o)| (o, x))
        .collect();
    if n == 0 || candidates.is_empty() {
        return Ok(Alteration::unchanged(envelope, candidates.len() < n));
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let saturated = candidates.len() < n;
    let removed: Vec<StateId> = candidates.into_iter().take(n).map(|(_, x)| x).collect();
    let mut next = envelope.clone();
    next.remove_all(&removed);
    Ok(Alteration {
        envelope: next,
        added: Vec::new(),
        removed,
        saturated,
    })
}

/// Add a most-reliable path from the most likely falling-out state to a goal.
pub fn extend_path_to_goal(
    automaton: &StochasticAutomaton,
    envelope: &Envelope,
    policy: &Policy,
    start: StateId,
    tolerance: f64,
) -> Result<Alteration> {
    let analysis = falling_out_distribution(automaton, envelope, policy, start, tolerance)?;
    let Some(exit) = analysis.most_likely() else {
        return Ok(Alteration::unchanged(envelope, true));
    };
    let path = find_path(automaton, exit)?;
    let mut next = envelope.clone();
    let added = next.extend(path.states);
    Ok(Alteration {
        envelope: next,
        added,
        removed: Vec::new(),
        saturated: false,
    })
}

/// Add a most-reliable path from the most likely falling-out state back
/// into the envelope.
pub fn extend_path_back(
    automaton: &StochasticAutomaton,
    envelope: &Envelope,
    policy: &Policy,
    start: StateId,
    tolerance: f64,
) -> Result<Alteration> {
    let analysis = falling_out_distribution(automaton, envelope, policy, start, tolerance)?;
    let Some(exit) = analysis.most_likely() else {
        return Ok(Alteration::unchanged(envelope, true));
    };
    let path = match find_path_to(automaton, exit, |s| envelope.contains(s)) {
        Ok(p) => p,
        Err(Error::Unreachable { .. }) => return Ok(Alteration::unchanged(envelope, true)),
        Err(e) => return Err(e),
    };
    let mut next = envelope.clone();
    let added = next.extend(path.states);
    Ok(Alteration {
        envelope: next,
        added,
        removed: Vec::new(),
        saturated: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::AutomatonBuilder;
    use std::collections::HashMap;

    fn star() -> StochasticAutomaton {
        // 0 exits to 1 (0.6) or 2 (0.4); everything else self-loops.
        let mut b = AutomatonBuilder::new(4, 1);
        b.set_row(0, 0, vec![(1, 0.6), (2, 0.4)]);
        for s in 1..4 {
            b.set_row(s, 0, vec![(s, 1.0)]);
        }
        b.build()
    }

    fn values(pairs: &[(StateId, f64)]) -> EnvelopeValues {
        let map: HashMap<StateId, f64> = pairs.iter().copied().collect();
        EnvelopeValues::from_map(map, -20.0)
    }

    #[test]
    fn robustify_with_empty_fringe_is_a_no_op() {
        let a = star();
        let e = Envelope::from_states([0, 1, 2]);
        let r = extend_robustify(&a, &e, &Policy::reflex_only(0), 0, 3, 1e-12).unwrap();
        assert_eq!(r.envelope, e);
        assert!(r.added.is_empty());
        assert!(r.saturated);
    }

    #[test]
    fn robustify_saturates_on_small_fringe() {
        let a = star();
        let e = Envelope::from_states([0]);
        let r = extend_robustify(&a, &e, &Policy::reflex_only(0), 0, 10, 1e-12).unwrap();
        assert_eq!(r.added, vec![1, 2]);
        assert!(r.saturated);
        assert_eq!(r.envelope.members(), &[0, 1, 2]);
    }

    #[test]
    fn robustify_rejects_zero() {
        let a = star();
        assert!(extend_robustify(&a, &Envelope::from_states([0]), &Policy::reflex_only(0), 0, 0, 1e-9).is_err());
    }

    #[test]
    fn prune_keeps_everything_when_nothing_is_worse() {
        let a = star();
        let e = Envelope::from_states([0, 1, 2]);
        let v = values(&[(0, -5.0), (1, -4.0), (2, -5.0)]);
        let r = prune(&a, &e, &Policy::reflex_only(0), &v, 0, 2, &[], 0.9, 1e-12).unwrap();
        assert_eq!(r.envelope, e);
    }

    #[test]
    fn prune_removes_the_unreachable_worse_state() {
        let a = star();
        let e = Envelope::from_states([0, 1, 3]);
        let v = values(&[(0, -5.0), (1, -4.0), (3, -9.0)]);
        let r = prune(&a, &e, &Policy::reflex_only(0), &v, 0, 1, &[], 0.9, 1e-12).unwrap();
        assert_eq!(r.removed, vec![3]);
        assert_eq!(r.envelope.members(), &[0, 1]);
    }

    #[test]
    fn prune_never_touches_protected_or_goal_states() {
        let mut b = AutomatonBuilder::new(4, 1);
        for s in 0..4 {
            b.set_row(s, 0, vec![(s, 1.0)]);
        }
        b.add_goal(2);
        let a = b.build();
        let e = Envelope::from_states([0, 1, 2, 3]);
        let v = values(&[(0, -1.0), (1, -9.0), (2, -9.0), (3, -9.0)]);
        let r = prune(&a, &e, &Policy::reflex_only(0), &v, 0, 4, &[3], 0.9, 1e-12).unwrap();
        assert_eq!(r.removed, vec![1]);
    }
}
