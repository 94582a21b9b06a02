//! Policy evaluation, greedy improvement, interruptible policy iteration and
//! value iteration over a [`StochasticAutomaton`].
//!
//! Evaluation and value iteration are Gauss-Seidel sweeps in increasing state
//! order with the self-transition term solved in place. An iterate is accepted
//! once its sup-norm Bellman residual is at most `eval_tolerance * (1 - gamma)`,
//! which bounds its distance to the true fixed point by `eval_tolerance`.

use crate::error::{Error, Result};

use super::{
    ActionId, Policy, Provenance, RewardSpec, SolverConfig, StateId, StochasticAutomaton,
    ValueFunction,
};

/// Deliberation allowance for interruptible solvers, in ticks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TickBudget {
    Unbounded,
    Ticks(u64),
}

impl TickBudget {
    pub fn fits(&self, spent: u64, cost: u64) -> bool {
        match *self {
            TickBudget::Unbounded => true,
            TickBudget::Ticks(b) => spent.saturating_add(cost) <= b,
        }
    }

    pub fn remaining(&self, spent: u64) -> Option<u64> {
        match *self {
            TickBudget::Unbounded => None,
            TickBudget::Ticks(b) => Some(b.saturating_sub(spent)),
        }
    }
}

/// `r(s) + gamma * sum_y p(s, a, y) V(y)`.
#[inline]
pub fn q_value(
    automaton: &StochasticAutomaton,
    reward: &RewardSpec,
    values: &[f64],
    state: StateId,
    action: ActionId,
    gamma: f64,
) -> f64 {
    let cont: f64 = automaton
        .row(state, action)
        .iter()
        .map(|t| t.prob * values[t.to])
        .sum();
    reward.reward(state) + gamma * cont
}

fn check_dims(automaton: &StochasticAutomaton, reward: &RewardSpec) -> Result<()> {
    if reward.len() != automaton.num_states() {
        return Err(Error::InvalidArgument(format!(
            "reward covers {} states, automaton has {}",
            reward.len(),
            automaton.num_states()
        )));
    }
    Ok(())
}

fn check_policy(automaton: &StochasticAutomaton, actions: &[ActionId]) -> Result<()> {
    for (s, &a) in actions.iter().enumerate() {
        if a >= automaton.num_actions() || !automaton.has_action(s, a) {
            return Err(Error::ActionUnavailable { state: s, action: a });
        }
    }
    Ok(())
}

fn acceptance_threshold(config: &SolverConfig) -> f64 {
    config.eval_tolerance * (1.0 - config.gamma)
}

fn evaluation_residual(
    automaton: &StochasticAutomaton,
    reward: &RewardSpec,
    actions: &[ActionId],
    values: &[f64],
    gamma: f64,
) -> f64 {
    (0..automaton.num_states())
        .map(|s| (q_value(automaton, reward, values, s, actions[s], gamma) - values[s]).abs())
        .fold(0.0, f64::max)
}

/// Evaluate a dense policy in place, starting from the current contents of
/// `values`. Returns the number of sweeps performed.
pub(crate) fn evaluate_in_place(
    automaton: &StochasticAutomaton,
    reward: &RewardSpec,
    actions: &[ActionId],
    config: &SolverConfig,
    values: &mut [f64],
) -> Result<usize> {
    let gamma = config.gamma;
    let threshold = acceptance_threshold(config);
    let mut sweeps = 0;
    loop {
        let mut max_delta: f64 = 0.0;
        for s in 0..automaton.num_states() {
            let mut self_p = 0.0;
            let mut rest = 0.0;
            for t in automaton.row(s, actions[s]) {
                if t.to == s {
                    self_p += t.prob;
                } else {
                    rest += t.prob * values[t.to];
                }
            }
            let new = (reward.reward(s) + gamma * rest) / (1.0 - gamma * self_p);
            max_delta = max_delta.max((new - values[s]).abs());
            values[s] = new;
        }
        sweeps += 1;
        if max_delta <= threshold {
            let residual = evaluation_residual(automaton, reward, actions, values, gamma);
            if residual <= threshold {
                return Ok(sweeps);
            }
        }
        if sweeps >= config.max_eval_sweeps {
            let residual = evaluation_residual(automaton, reward, actions, values, gamma);
            return Err(Error::NotConverged {
                sweeps,
                residual,
                last: values.to_vec(),
            });
        }
    }
}

/// Value of `policy` (completed by its reflex) on every state.
pub fn policy_evaluate(
    automaton: &StochasticAutomaton,
    reward: &RewardSpec,
    policy: &Policy,
    config: &SolverConfig,
) -> Result<ValueFunction> {
    config.validate()?;
    check_dims(automaton, reward)?;
    let actions = policy.to_dense(automaton.num_states());
    check_policy(automaton, &actions)?;
    let mut values = vec![0.0; automaton.num_states()];
    evaluate_in_place(automaton, reward, &actions, config, &mut values)?;
    Ok(ValueFunction::new(values, Provenance::ExactFull))
}

fn greedy_action(
    automaton: &StochasticAutomaton,
    reward: &RewardSpec,
    values: &[f64],
    state: StateId,
    gamma: f64,
) -> Result<(ActionId, f64)> {
    let mut best: Option<(ActionId, f64)> = None;
    for a in automaton.actions(state) {
        let q = q_value(automaton, reward, values, state, a, gamma);
        // Strict comparison keeps the lowest action id on ties.
        if best.map_or(true, |(_, bq)| q > bq) {
            best = Some((a, q));
        }
    }
    best.ok_or(Error::NoActions { state })
}

/// Greedy policy with respect to `values`; ties go to the lowest action id.
pub fn policy_improve(
    automaton: &StochasticAutomaton,
    reward: &RewardSpec,
    values: &ValueFunction,
    config: &SolverConfig,
) -> Result<Policy> {
    config.validate()?;
    check_dims(automaton, reward)?;
    if values.len() != automaton.num_states() {
        return Err(Error::InvalidArgument("value function size mismatch".into()));
    }
    let mut actions = Vec::with_capacity(automaton.num_states());
    for s in 0..automaton.num_states() {
        actions.push(greedy_action(automaton, reward, &values.values, s, config.gamma)?.0);
    }
    Ok(Policy::total(&actions, 0))
}

/// Step-at-a-time policy iteration.
///
/// The initial policy is evaluated on construction. Each [`round`] performs
/// one improvement followed by one evaluation. An action is replaced only
/// when the greedy action beats it by more than `2 * eval_tolerance`, which
/// exceeds the evaluation error on a Q-gap and so rules out cycling.
///
/// [`round`]: PolicyIteration::round
pub struct PolicyIteration<'a> {
    automaton: &'a StochasticAutomaton,
    reward: &'a RewardSpec,
    config: &'a SolverConfig,
    actions: Vec<ActionId>,
    values: Vec<f64>,
    rounds: usize,
    converged: bool,
}

impl<'a> PolicyIteration<'a> {
    pub fn new(
        automaton: &'a StochasticAutomaton,
        reward: &'a RewardSpec,
        initial: Vec<ActionId>,
        warm_values: Option<Vec<f64>>,
        config: &'a SolverConfig,
    ) -> Result<Self> {
        config.validate()?;
        check_dims(automaton, reward)?;
        if initial.len() != automaton.num_states() {
            return Err(Error::InvalidArgument("initial policy size mismatch".into()));
        }
        check_policy(automaton, &initial)?;
        let mut values = match warm_values {
            Some(v) if v.len() == automaton.num_states() => v,
            Some(_) => return Err(Error::InvalidArgument("warm start size mismatch".into())),
            None => vec![0.0; automaton.num_states()],
        };
        evaluate_in_place(automaton, reward, &initial, config, &mut values)?;
        Ok(Self {
            automaton,
            reward,
            config,
            actions: initial,
            values,
            rounds: 0,
            converged: false,
        })
    }

    /// One improvement + evaluation round. Returns whether any action changed;
    /// a round that changes nothing marks the iteration converged.
    pub fn round(&mut self) -> Result<bool> {
        let gamma = self.config.gamma;
        let margin = 2.0 * self.config.eval_tolerance;
        let mut changed = false;
        for s in 0..self.automaton.num_states() {
            let (best, best_q) = greedy_action(self.automaton, self.reward, &self.values, s, gamma)?;
            let current = self.actions[s];
            if best != current {
                let current_q = q_value(self.automaton, self.reward, &self.values, s, current, gamma);
                if best_q > current_q + margin {
                    self.actions[s] = best;
                    changed = true;
                }
            }
        }
        self.rounds += 1;
        if changed {
            evaluate_in_place(self.automaton, self.reward, &self.actions, self.config, &mut self.values)?;
        } else {
            self.converged = true;
        }
        Ok(changed)
    }

    pub fn actions(&self) -> &[ActionId] {
        &self.actions
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn rounds(&self) -> usize {
        self.rounds
    }

    pub fn converged(&self) -> bool {
        self.converged
    }

    pub fn into_parts(self) -> (Vec<ActionId>, Vec<f64>) {
        (self.actions, self.values)
    }
}

#[derive(Debug, Clone)]
pub struct PiOutcome {
    pub policy: Policy,
    pub values: ValueFunction,
    pub rounds: usize,
    pub converged: bool,
    /// Ticks charged: `rounds * round_cost`.
    pub ticks: u64,
}

/// Policy iteration from `initial`, charging `round_cost` ticks per round.
///
/// A round that does not fit in `budget` is not started; the last complete
/// pair is returned. With an unbounded budget it runs until an improvement
/// step changes no action (or `max_rounds`).
pub fn policy_iteration(
    automaton: &StochasticAutomaton,
    reward: &RewardSpec,
    initial: &Policy,
    config: &SolverConfig,
    budget: TickBudget,
    round_cost: u64,
) -> Result<PiOutcome> {
    policy_iteration_warm(automaton, reward, initial, None, config, budget, round_cost)
}

pub fn policy_iteration_warm(
    automaton: &StochasticAutomaton,
    reward: &RewardSpec,
    initial: &Policy,
    warm_values: Option<Vec<f64>>,
    config: &SolverConfig,
    budget: TickBudget,
    round_cost: u64,
) -> Result<PiOutcome> {
    let round_cost = round_cost.max(1);
    let dense = initial.to_dense(automaton.num_states());
    let mut it = PolicyIteration::new(automaton, reward, dense, warm_values, config)?;
    let mut ticks = 0u64;
    while !it.converged() && it.rounds() < config.max_rounds && budget.fits(ticks, round_cost) {
        ticks += round_cost;
        it.round()?;
    }
    let rounds = it.rounds();
    let converged = it.converged();
    let (actions, values) = it.into_parts();
    Ok(PiOutcome {
        policy: Policy::total(&actions, initial.reflex()),
        values: ValueFunction::new(values, Provenance::ExactFull),
        rounds,
        converged,
        ticks,
    })
}

/// Bellman-optimal values by Gauss-Seidel value iteration.
pub fn value_iteration(
    automaton: &StochasticAutomaton,
    reward: &RewardSpec,
    config: &SolverConfig,
) -> Result<ValueFunction> {
    config.validate()?;
    check_dims(automaton, reward)?;
    let n = automaton.num_states();
    for s in 0..n {
        if automaton.actions(s).next().is_none() {
            return Err(Error::NoActions { state: s });
        }
    }
    let gamma = config.gamma;
    let threshold = acceptance_threshold(config);
    let mut values = vec![0.0; n];
    let mut sweeps = 0;
    loop {
        let mut max_delta: f64 = 0.0;
        for s in 0..n {
            let mut best = f64::NEG_INFINITY;
            for a in automaton.actions(s) {
                let mut self_p = 0.0;
                let mut rest = 0.0;
                for t in automaton.row(s, a) {
                    if t.to == s {
                        self_p += t.prob;
                    } else {
                        rest += t.prob * values[t.to];
                    }
                }
                let v = (reward.reward(s) + gamma * rest) / (1.0 - gamma * self_p);
                best = best.max(v);
            }
            max_delta = max_delta.max((best - values[s]).abs());
            values[s] = best;
        }
        sweeps += 1;
        let residual = || {
            (0..n)
                .map(|s| {
                    let best = automaton
                        .actions(s)
                        .map(|a| q_value(automaton, reward, &values, s, a, gamma))
                        .fold(f64::NEG_INFINITY, f64::max);
                    (best - values[s]).abs()
                })
                .fold(0.0, f64::max)
        };
        if max_delta <= threshold && residual() <= threshold {
            return Ok(ValueFunction::new(values, Provenance::ExactFull));
        }
        if sweeps >= config.max_eval_sweeps {
            let residual = residual();
            return Err(Error::NotConverged {
                sweeps,
                residual,
                last: values,
            });
        }
    }
}

/// All available `(action, Q)` pairs of `state`, in action order.
pub fn q_values(
    automaton: &StochasticAutomaton,
    reward: &RewardSpec,
    values: &[f64],
    state: StateId,
    gamma: f64,
) -> Vec<(ActionId, f64)> {
    automaton
        .actions(state)
        .map(|a| (a, q_value(automaton, reward, values, state, a, gamma)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::AutomatonBuilder;

    fn single_loop() -> StochasticAutomaton {
        let mut b = AutomatonBuilder::new(1, 1);
        b.set_row(0, 0, vec![(0, 1.0)]);
        b.build()
    }

    /// States 0 -> 1 -> 2, advancing with 0.8 and staying with 0.2; 2 is an
    /// absorbing goal.
    fn chain() -> StochasticAutomaton {
        let mut b = AutomatonBuilder::new(3, 1);
        b.set_row(0, 0, vec![(0, 0.2), (1, 0.8)]);
        b.set_row(1, 0, vec![(1, 0.2), (2, 0.8)]);
        b.set_row(2, 0, vec![(2, 1.0)]);
        b.add_goal(2);
        b.build()
    }

    /// Plain Jacobi successive approximation on a fixed dense policy.
    fn dense_oracle(a: &StochasticAutomaton, r: &RewardSpec, pol: &[ActionId], gamma: f64) -> Vec<f64> {
        let n = a.num_states();
        let mut p = vec![vec![0.0; n]; n];
        for s in 0..n {
            for t in a.row(s, pol[s]) {
                p[s][t.to] += t.prob;
            }
        }
        let mut v = vec![0.0; n];
        loop {
            let next: Vec<f64> = (0..n)
                .map(|s| r.reward(s) + gamma * (0..n).map(|y| p[s][y] * v[y]).sum::<f64>())
                .collect();
            let d = next.iter().zip(&v).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            v = next;
            if d < 1e-12 {
                return v;
            }
        }
    }

    #[test]
    fn self_loop_value_is_geometric_series() {
        let a = single_loop();
        let r = RewardSpec::goal_of_achievement(&a);
        let v = policy_evaluate(&a, &r, &Policy::reflex_only(0), &SolverConfig::default()).unwrap();
        assert!((v.get(0) + 20.0).abs() < 1e-9);
    }

    #[test]
    fn absorbing_goal_has_zero_value() {
        let a = chain();
        let r = RewardSpec::goal_of_achievement(&a);
        let v = policy_evaluate(&a, &r, &Policy::reflex_only(0), &SolverConfig::default()).unwrap();
        assert_eq!(v.get(2), 0.0);
    }

    #[test]
    fn chain_matches_dense_oracle() {
        let a = chain();
        let r = RewardSpec::goal_of_achievement(&a);
        let cfg = SolverConfig::with_gamma(0.9);
        let v = policy_evaluate(&a, &r, &Policy::reflex_only(0), &cfg).unwrap();
        let oracle = dense_oracle(&a, &r, &[0, 0, 0], 0.9);
        assert!(v.sup_distance(&oracle) <= cfg.eval_tolerance);
    }

    #[test]
    fn evaluation_reports_non_convergence_with_last_iterate() {
        let a = single_loop();
        let r = RewardSpec::goal_of_achievement(&a);
        let mut b = AutomatonBuilder::new(2, 1);
        b.set_row(0, 0, vec![(1, 1.0)]);
        b.set_row(1, 0, vec![(0, 1.0)]);
        let swap = b.build();
        let rs = RewardSpec::goal_of_achievement(&swap);
        let cfg = SolverConfig {
            max_eval_sweeps: 3,
            ..SolverConfig::default()
        };
        match policy_evaluate(&swap, &rs, &Policy::reflex_only(0), &cfg) {
            Err(Error::NotConverged { sweeps, last, residual }) => {
                assert_eq!(sweeps, 3);
                assert_eq!(last.len(), 2);
                assert!(residual > 0.0);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
        // A self loop is solved exactly in one sweep.
        assert!(policy_evaluate(&a, &r, &Policy::reflex_only(0), &cfg).is_ok());
    }

    #[test]
    fn unavailable_action_is_rejected() {
        let mut b = AutomatonBuilder::new(1, 2);
        b.set_row(0, 0, vec![(0, 1.0)]);
        let a = b.build();
        let r = RewardSpec::goal_of_achievement(&a);
        let err = policy_evaluate(&a, &r, &Policy::reflex_only(1), &SolverConfig::default());
        assert!(matches!(err, Err(Error::ActionUnavailable { state: 0, action: 1 })));
    }

    #[test]
    fn uniform_values_pick_lowest_action() {
        let mut b = AutomatonBuilder::new(3, 3);
        for s in 0..3 {
            for a in 0..3 {
                b.set_row(s, a, vec![((s + a) % 3, 1.0)]);
            }
        }
        let a = b.build();
        let r = RewardSpec::goal_of_achievement(&a);
        let v = ValueFunction::new(vec![-4.0; 3], Provenance::ExactFull);
        let p = policy_improve(&a, &r, &v, &SolverConfig::default()).unwrap();
        assert_eq!(p.to_dense(3), vec![0, 0, 0]);
    }

    #[test]
    fn goal_leading_action_dominates() {
        let mut b = AutomatonBuilder::new(2, 2);
        b.set_row(0, 0, vec![(0, 1.0)]);
        b.set_row(0, 1, vec![(1, 1.0)]);
        b.set_row(1, 0, vec![(1, 1.0)]);
        b.set_row(1, 1, vec![(1, 1.0)]);
        b.add_goal(1);
        let a = b.build();
        let r = RewardSpec::goal_of_achievement(&a);
        let v = policy_evaluate(&a, &r, &Policy::reflex_only(0), &SolverConfig::default()).unwrap();
        let p = policy_improve(&a, &r, &v, &SolverConfig::default()).unwrap();
        assert_eq!(p.action(0), 1);
    }

    #[test]
    fn improve_reports_state_without_actions() {
        let mut b = AutomatonBuilder::new(2, 1);
        b.set_row(0, 0, vec![(0, 1.0)]);
        let a = b.build();
        let r = RewardSpec::goal_of_achievement(&a);
        let v = ValueFunction::new(vec![0.0; 2], Provenance::ExactFull);
        assert!(matches!(
            policy_improve(&a, &r, &v, &SolverConfig::default()),
            Err(Error::NoActions { state: 1 })
        ));
    }

    #[test]
    fn zero_budget_returns_initial_policy_evaluated() {
        let a = chain();
        let r = RewardSpec::goal_of_achievement(&a);
        let cfg = SolverConfig::default();
        let init = Policy::reflex_only(0);
        let out = policy_iteration(&a, &r, &init, &cfg, TickBudget::Ticks(0), 27).unwrap();
        assert_eq!(out.rounds, 0);
        assert_eq!(out.ticks, 0);
        assert!(!out.converged);
        assert_eq!(out.policy.to_dense(3), init.to_dense(3));
        let direct = policy_evaluate(&a, &r, &init, &cfg).unwrap();
        assert!(out.values.sup_distance(&direct.values) < 1e-12);
    }

    #[test]
    fn optimal_initial_policy_converges_in_one_round() {
        let a = chain();
        let r = RewardSpec::goal_of_achievement(&a);
        let out = policy_iteration(
            &a,
            &r,
            &Policy::reflex_only(0),
            &SolverConfig::default(),
            TickBudget::Unbounded,
            27,
        )
        .unwrap();
        assert!(out.converged);
        assert_eq!(out.rounds, 1);
        assert_eq!(out.ticks, 27);
    }

    #[test]
    fn all_goal_states_have_zero_optimal_value() {
        let mut b = AutomatonBuilder::new(3, 1);
        for s in 0..3 {
            b.set_row(s, 0, vec![((s + 1) % 3, 1.0)]);
            b.add_goal(s);
        }
        let a = b.build();
        let r = RewardSpec::goal_of_achievement(&a);
        let v = value_iteration(&a, &r, &SolverConfig::default()).unwrap();
        assert!(v.values.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn unreachable_goal_gives_floor_value() {
        let mut b = AutomatonBuilder::new(3, 2);
        for s in 0..3 {
            b.set_row(s, 0, vec![((s + 1) % 3, 1.0)]);
            b.set_row(s, 1, vec![(s, 0.5), ((s + 2) % 3, 0.5)]);
        }
        let a = b.build();
        let r = RewardSpec::goal_of_achievement(&a);
        let cfg = SolverConfig::with_gamma(0.9);
        let v = value_iteration(&a, &r, &cfg).unwrap();
        for x in v.values {
            assert!((x + 10.0).abs() <= cfg.eval_tolerance);
        }
    }

    #[test]
    fn budget_accounting() {
        assert!(TickBudget::Unbounded.fits(u64::MAX - 1, 5));
        assert!(TickBudget::Ticks(10).fits(5, 5));
        assert!(!TickBudget::Ticks(10).fits(6, 5));
        assert_eq!(TickBudget::Ticks(10).remaining(4), Some(6));
        assert_eq!(TickBudget::Ticks(10).remaining(40), Some(0));
    }
}
