//! Strategy-value estimates: the myopic two-phase look-ahead and the
//! per-invocation improvement sample.

use std::collections::BTreeMap;

use crate::envelope::{DeliberationStrategy, Envelope};
use crate::error::{Error, Result};
use crate::mdp::{push_forward, Policy, RewardSpec, StateId, StochasticAutomaton};

/// Push `mass` forward `steps` times under `policy` with goals absorbing,
/// accumulating `sum_i d gamma^i E[r(X_i)]` into `acc`, where `d` is the
/// starting discount.
fn discounted_walk(
    automaton: &StochasticAutomaton,
    reward: &RewardSpec,
    policy: &Policy,
    mut mass: BTreeMap<StateId, f64>,
    steps: usize,
    gamma: f64,
    mut discount: f64,
    acc: &mut f64,
) -> Result<(BTreeMap<StateId, f64>, f64)> {
    for _ in 0..steps {
        *acc += discount * mass.iter().map(|(&s, &m)| m * reward.reward(s)).sum::<f64>();
        mass = push_forward(automaton, &mass, |s| policy.action(s), |s| automaton.is_goal(s))?;
        discount *= gamma;
    }
    Ok((mass, discount))
}

/// `E[v(X)]` over `mass`, with goal states worth zero.
fn terminal(automaton: &StochasticAutomaton, mass: &BTreeMap<StateId, f64>, v: impl Fn(StateId) -> f64) -> f64 {
    mass.iter()
        .filter(|(&s, _)| !automaton.is_goal(s))
        .map(|(&s, &m)| m * v(s))
        .sum()
}

fn check(automaton: &StochasticAutomaton, reward: &RewardSpec, x: StateId, gamma: f64) -> Result<()> {
    automaton.check_state(x)?;
    if reward.len() != automaton.num_states() {
        return Err(Error::InvalidArgument("reward size mismatch".into()));
    }
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidArgument(format!("gamma must lie in [0, 1), got {gamma}")));
    }
    Ok(())
}

/// Expected discounted value of executing `current` for `n` steps while the
/// strategy runs, then `improved` for `n` more steps, then continuing with
/// value `v_star`:
///
/// `sum_{i<2n} gamma^i E[r(X_i)] + gamma^(2n) E[v_star(X_2n)]`
///
/// with goal states absorbing and worth zero. Off goals every reward is −1, so the first
/// term is the usual `-sum_{i<2n} gamma^i` until a goal is reached.
#[allow(clippy::too_many_arguments)]
pub fn myopic_strategy_value(
    automaton: &StochasticAutomaton,
    reward: &RewardSpec,
    current: &Policy,
    improved: &Policy,
    x: StateId,
    n: usize,
    gamma: f64,
    v_star: impl Fn(StateId) -> f64,
) -> Result<f64> {
    check(automaton, reward, x, gamma)?;
    if n == 0 {
        return Err(Error::InvalidArgument("look-ahead needs n >= 1".into()));
    }
    let mut acc = 0.0;
    let start = BTreeMap::from([(x, 1.0)]);
    let (mid, d) = discounted_walk(automaton, reward, current, start, n, gamma, 1.0, &mut acc)?;
    let (end, d) = discounted_walk(automaton, reward, improved, mid, n, gamma, d, &mut acc)?;
    Ok(acc + d * terminal(automaton, &end, v_star))
}

/// Improvement credited to a strategy that ran for `k` execution steps:
///
/// `[sum_{i<k} gamma^i E[r(X_i)] + gamma^k E[v_improved(X_k)]] - v_current(x)`
///
/// where `X` follows `current` from `x` with goals absorbing and worth zero.
#[allow(clippy::too_many_arguments)]
pub fn eiv_sample(
    automaton: &StochasticAutomaton,
    reward: &RewardSpec,
    current: &Policy,
    x: StateId,
    k: usize,
    gamma: f64,
    v_current: impl Fn(StateId) -> f64,
    v_improved: impl Fn(StateId) -> f64,
) -> Result<f64> {
    check(automaton, reward, x, gamma)?;
    let mut acc = 0.0;
    let (end, d) = discounted_walk(automaton, reward, current, BTreeMap::from([(x, 1.0)]), k, gamma, 1.0, &mut acc)?;
    Ok(acc + d * terminal(automaton, &end, v_improved) - v_current(x))
}

/// Envelope size over fringe size, the denominator clamped at 1.
pub fn fatness(envelope: &Envelope, fringe_len: usize) -> f64 {
    envelope.len() as f64 / fringe_len.max(1) as f64
}

/// Labels of the 24 built-in strategies.
pub const STANDARD_ROSTER: [&str; 24] = [
    "FP R[10] O",
    "FP R[20] O",
    "FP R[50] O",
    "FP R[100] O",
    "FP P[10] O",
    "FP P[20] O",
    "FP P[50] O",
    "FP P[100] O",
    "FP P[20] R[50] O",
    "FP P[10] R[20] O",
    "FP P[50] R[100] O",
    "FP P[100] R[50] O",
    "FP R[100] P[50] O",
    "FP R[20] P[10] O",
    "FP R[50] P[20] O",
    "FP R[100] P[100] O",
    "FP R[50] O P[50] O",
    "FP R[10] O P[10] O",
    "FP R[20] O P[20] O",
    "FP R[100] O P[100] O",
    "FP O",
    "FP R[10] O R[10] O",
    "FP R[20] O R[50] O",
    "FP P[50] O R[50] O",
];

pub fn standard_strategy_roster() -> Vec<DeliberationStrategy> {
    STANDARD_ROSTER
        .iter()
        .map(|l| l.parse().expect("built-in strategy labels are valid"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::AutomatonBuilder;
    use std::collections::HashSet;

    fn chain() -> (StochasticAutomaton, RewardSpec) {
        let mut b = AutomatonBuilder::new(6, 1);
        for s in 0..6 {
            b.set_row(s, 0, vec![((s + 1).min(5), 1.0)]);
        }
        b.add_goal(5);
        let a = b.build().with_absorbing_goals();
        let r = RewardSpec::goal_of_achievement(&a);
        (a, r)
    }

    #[test]
    fn goal_start_is_worth_zero() {
        let (a, r) = chain();
        let p = Policy::reflex_only(0);
        let v = myopic_strategy_value(&a, &r, &p, &p, 5, 3, 0.9, |_| -10.0).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn one_step_chain() {
        let (a, r) = chain();
        let p = Policy::reflex_only(0);
        let v = myopic_strategy_value(&a, &r, &p, &p, 0, 1, 0.9, |_| -10.0).unwrap();
        assert!((v - (-10.0)).abs() < 1e-12);
    }

    #[test]
    fn eiv_identity_and_arithmetic() {
        let (a, r) = chain();
        let p = Policy::reflex_only(0);
        let v = |s: StateId| -(s as f64);
        assert_eq!(eiv_sample(&a, &r, &p, 2, 0, 0.9, v, v).unwrap(), 0.0);
        let s = eiv_sample(&a, &r, &p, 0, 1, 0.9, |_| -6.0, |s| if s == 1 { -5.0 } else { 0.0 }).unwrap();
        assert!((s - 0.5).abs() < 1e-12);
    }

    #[test]
    fn fatness_examples() {
        let e = Envelope::from_states(0..10);
        assert_eq!(fatness(&e, 5), 2.0);
        assert_eq!(fatness(&e, 0), 10.0);
    }

    #[test]
    fn roster_is_valid_and_distinct() {
        let r = standard_strategy_roster();
        assert_eq!(r.len(), 24);
        let labels: HashSet<String> = r.iter().map(|s| s.label()).collect();
        assert_eq!(labels.len(), 24);
        for quoted in ["FP R[10] O", "FP P[20] O", "FP P[20] R[50] O", "FP R[100] P[50] O", "FP R[50] O P[50] O"] {
            assert!(labels.contains(quoted));
        }
    }
}
