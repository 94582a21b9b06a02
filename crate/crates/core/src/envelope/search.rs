use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::mdp::{ActionId, StateId, StochasticAutomaton};

/// A most-reliable trajectory found by [`find_path`].
#[derive(Debug, Clone, PartialEq)]
pub struct PathResult {
    /// Visited states, start first, target last.
    pub states: Vec<StateId>,
    /// Action taken on each edge (`states.len() - 1` entries).
    pub actions: Vec<ActionId>,
    /// Product of the per-edge success probabilities.
    pub probability: f64,
    /// Nodes settled by the search.
    pub expanded: usize,
}

#[derive(PartialEq)]
struct Frontier {
    cost: f64,
    state: StateId,
}

impl Eq for Frontier {}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on (cost, state).
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.state.cmp(&self.state))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Path from `start` to a goal of `automaton` maximizing the product of
/// per-edge best-action probabilities.
pub fn find_path(automaton: &StochasticAutomaton, start: StateId) -> Result<PathResult> {
    find_path_to(automaton, start, |s| automaton.is_goal(s))
}

/// Least `-ln p` path from `start` to the first settled state satisfying
/// `is_target`. Each edge `x -> y` weighs `-ln max_a p(x, a, y)`; equal-cost
/// frontier entries pop in state-id order and equal relaxations keep the
/// first predecessor, so the result is deterministic.
pub fn find_path_to(
    automaton: &StochasticAutomaton,
    start: StateId,
    is_target: impl Fn(StateId) -> bool,
) -> Result<PathResult> {
    automaton.check_state(start)?;
    let n = automaton.num_states();
    let mut dist = vec![f64::INFINITY; n];
    let mut pred: Vec<Option<(StateId, ActionId)>> = vec![None; n];
    let mut settled = vec![false; n];
    let mut heap = BinaryHeap::new();
    dist[start] = 0.0;
    heap.push(Frontier { cost: 0.0, state: start });
    let mut expanded = 0;
    while let Some(Frontier { cost, state: x }) = heap.pop() {
        if settled[x] {
            continue;
        }
        settled[x] = true;
        expanded += 1;
        if is_target(x) {
            let mut states = vec![x];
            let mut actions = Vec::new();
            let mut cur = x;
            while let Some((p, a)) = pred[cur] {
                states.push(p);
                actions.push(a);
                cur = p;
            }
            states.reverse();
            actions.reverse();
            return Ok(PathResult {
                states,
                actions,
                probability: (-cost).exp(),
                expanded,
            });
        }
        for a in 0..automaton.num_actions() {
            for t in automaton.row(x, a) {
                if t.to == x || t.prob <= 0.0 || settled[t.to] {
                    continue;
                }
                let c = cost - t.prob.ln();
                if c < dist[t.to] {
                    dist[t.to] = c;
                    pred[t.to] = Some((x, a));
                    heap.push(Frontier { cost: c, state: t.to });
                }
            }
        }
    }
    Err(Error::Unreachable { start })
}
