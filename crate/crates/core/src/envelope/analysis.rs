//! Fringe, first-exit and occupancy analyses of a policy on an envelope.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::mdp::{Policy, StateId, StochasticAutomaton};

use super::Envelope;

/// Sweep cap for the first-exit push-forward.
pub const FALL_OUT_SWEEP_CAP: usize = 10_000;

/// States outside the envelope reachable in one step under the policy.
pub fn fringe(automaton: &StochasticAutomaton, envelope: &Envelope, policy: &Policy) -> BTreeSet<StateId> {
    let mut out = BTreeSet::new();
    for x in envelope.iter() {
        for t in automaton.row(x, policy.action(x)) {
            if t.prob > 0.0 && !envelope.contains(t.to) {
                out.insert(t.to);
            }
        }
    }
    out
}

/// States outside the envelope reachable in one step under any action.
pub fn action_fringe(automaton: &StochasticAutomaton, envelope: &Envelope) -> BTreeSet<StateId> {
    let mut out = BTreeSet::new();
    for x in envelope.iter() {
        for a in 0..automaton.num_actions() {
            for t in automaton.row(x, a) {
                if t.prob > 0.0 && !envelope.contains(t.to) {
                    out.insert(t.to);
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct FallOutAnalysis {
    pub fringe: BTreeSet<StateId>,
    /// Probability that each fringe state is the first one entered on
    /// leaving the envelope.
    pub first_exit: BTreeMap<StateId, f64>,
    /// Mass that stays in the envelope: absorbed at goals, trapped, or still
    /// transient when iteration stopped.
    pub residual: f64,
    pub sweeps: usize,
}

impl FallOutAnalysis {
    /// Fringe states by decreasing first-exit probability, ties by id.
    pub fn ranking(&self) -> Vec<(StateId, f64)> {
        let mut v: Vec<(StateId, f64)> = self
            .fringe
            .iter()
            .map(|&s| (s, self.first_exit.get(&s).copied().unwrap_or(0.0)))
            .collect();
        v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        v
    }

    /// The most likely falling-out state, if any mass leaves.
    pub fn most_likely(&self) -> Option<StateId> {
        self.ranking().first().filter(|(_, p)| *p > 0.0).map(|&(s, _)| s)
    }
}

enum Target {
    Member(usize),
    Exit(StateId),
}

/// Policy successor lists in local coordinates.
fn local_rows(
    automaton: &StochasticAutomaton,
    envelope: &Envelope,
    policy: &Policy,
) -> Vec<Vec<(Target, f64)>> {
    let index = envelope.index();
    envelope
        .iter()
        .map(|x| {
            automaton
                .row(x, policy.action(x))
                .iter()
                .filter(|t| t.prob > 0.0)
                .map(|t| match index.get(&t.to) {
                    Some(&j) => (Target::Member(j), t.prob),
                    None => (Target::Exit(t.to), t.prob),
                })
                .collect()
        })
        .collect()
}

/// First-exit distribution from `start` under `policy`.
///
/// Fringe and goal states absorb. Members from which no exit and no goal is
/// reachable along policy edges are settled into the residual immediately,
/// so the transient mass decays geometrically and the loop stops once it is
/// below `tolerance` (or at [`FALL_OUT_SWEEP_CAP`]).
pub fn falling_out_distribution(
    automaton: &StochasticAutomaton,
    envelope: &Envelope,
    policy: &Policy,
    start: StateId,
    tolerance: f64,
) -> Result<FallOutAnalysis> {
    let index = envelope.index();
    let Some(&s0) = index.get(&start) else {
        return Err(Error::OutsideEnvelope { state: start });
    };
    let rows = local_rows(automaton, envelope, policy);
    let m = rows.len();
    let members = envelope.members();
    let goal: Vec<bool> = members.iter().map(|&x| automaton.is_goal(x)).collect();

    // Members that can reach an exit or a goal along policy edges.
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); m];
    let mut live = vec![false; m];
    let mut queue = Vec::new();
    for i in 0..m {
        for (t, _) in &rows[i] {
            match *t {
                Target::Member(j) => preds[j].push(i),
                Target::Exit(_) => {
                    if !live[i] {
                        live[i] = true;
                        queue.push(i);
                    }
                }
            }
        }
        if goal[i] && !live[i] {
            live[i] = true;
            queue.push(i);
        }
    }
    while let Some(j) = queue.pop() {
        for &i in &preds[j] {
            if !live[i] {
                live[i] = true;
                queue.push(i);
            }
        }
    }

    let fringe = fringe(automaton, envelope, policy);
    let mut first_exit: BTreeMap<StateId, f64> = fringe.iter().map(|&s| (s, 0.0)).collect();
    let mut settled = 0.0;
    let mut mass = vec![0.0; m];
    let mut transient;
    if goal[s0] || !live[s0] {
        settled = 1.0;
        transient = 0.0;
    } else {
        mass[s0] = 1.0;
        transient = 1.0;
    }
    let mut sweeps = 0;
    let mut next = vec![0.0; m];
    while transient >= tolerance && sweeps < FALL_OUT_SWEEP_CAP {
        next.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..m {
            let w = mass[i];
            if w == 0.0 {
                continue;
            }
            for (t, p) in &rows[i] {
                let f = w * p;
                match *t {
                    Target::Exit(y) => *first_exit.get_mut(&y).expect("fringe member") += f,
                    Target::Member(j) => {
                        if goal[j] || !live[j] {
                            settled += f;
                        } else {
                            next[j] += f;
                        }
                    }
                }
            }
        }
        std::mem::swap(&mut mass, &mut next);
        transient = mass.iter().sum();
        sweeps += 1;
    }
    Ok(FallOutAnalysis {
        fringe,
        first_exit,
        residual: settled + transient,
        sweeps,
    })
}

/// Candidate states for growing the envelope: the falling-out ranking from
/// `start`, followed by the remaining action-fringe states in id order.
pub fn extension_order(
    automaton: &StochasticAutomaton,
    envelope: &Envelope,
    policy: &Policy,
    start: StateId,
    tolerance: f64,
) -> Result<Vec<StateId>> {
    let analysis = falling_out_distribution(automaton, envelope, policy, start, tolerance)?;
    let mut order: Vec<StateId> = analysis.ranking().into_iter().map(|(s, _)| s).collect();
    let listed: BTreeSet<StateId> = order.iter().copied().collect();
    order.extend(action_fringe(automaton, envelope).into_iter().filter(|s| !listed.contains(s)));
    Ok(order)
}

/// Discounted expected visit mass `sum_t gamma^t P(X_t = x)` of every
/// member, starting at `start` and following `policy`; mass that leaves the
/// envelope is dropped. Returned in envelope order.
pub fn occupancy(
    automaton: &StochasticAutomaton,
    envelope: &Envelope,
    policy: &Policy,
    start: StateId,
    gamma: f64,
    tolerance: f64,
) -> Result<Vec<f64>> {
    let index = envelope.index();
    let Some(&s0) = index.get(&start) else {
        return Err(Error::OutsideEnvelope { state: start });
    };
    let rows = local_rows(automaton, envelope, policy);
    let m = rows.len();
    let mut occ = vec![0.0; m];
    let mut mass = vec![0.0; m];
    let mut next = vec![0.0; m];
    mass[s0] = 1.0;
    let mut discount = 1.0;
    let mut remaining = 1.0;
    // The tail after step t is at most gamma^t * remaining / (1 - gamma).
    while discount * remaining > tolerance * (1.0 - gamma) {
        for i in 0..m {
            occ[i] += discount * mass[i];
        }
        next.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..m {
            let w = mass[i];
            if w == 0.0 {
                continue;
            }
            for (t, p) in &rows[i] {
                if let Target::Member(j) = *t {
                    next[j] += w * p;
                }
            }
        }
        std::mem::swap(&mut mass, &mut next);
        remaining = mass.iter().sum();
        discount *= gamma;
        if gamma == 0.0 {
            break;
        }
    }
    Ok(occ)
}
