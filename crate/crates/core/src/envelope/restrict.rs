use std::collections::{BTreeMap, HashMap, HashSet};

use crate::cost::CostModel;
use crate::error::{Error, Result};
use crate::mdp::{
    policy_iteration_warm, AutomatonBuilder, Policy, Provenance, RewardSpec, SolverConfig, StateId,
    StochasticAutomaton, TickBudget, ValueFunction,
};

/// Ordered set of system states over which policies are optimized.
///
/// Iteration follows insertion order so that every derived structure is
/// deterministic.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Envelope {
    members: Vec<StateId>,
    set: HashSet<StateId>,
}

impl Envelope {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_states(states: impl IntoIterator<Item = StateId>) -> Self {
        let mut e = Self::new();
        e.extend(states);
        e
    }

    /// Returns `true` if the state was not already a member.
    pub fn insert(&mut self, state: StateId) -> bool {
        if self.set.insert(state) {
            self.members.push(state);
            true
        } else {
            false
        }
    }

    /// Insert every state, returning those that were new.
    pub fn extend(&mut self, states: impl IntoIterator<Item = StateId>) -> Vec<StateId> {
        states.into_iter().filter(|&s| self.insert(s)).collect()
    }

    pub fn remove_all(&mut self, states: &[StateId]) {
        let drop: HashSet<StateId> = states.iter().copied().collect();
        self.members.retain(|s| !drop.contains(s));
        self.set.retain(|s| !drop.contains(s));
    }

    #[inline]
    pub fn contains(&self, state: StateId) -> bool {
        self.set.contains(&state)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn members(&self) -> &[StateId] {
        &self.members
    }

    pub fn iter(&self) -> impl Iterator<Item = StateId> + '_ {
        self.members.iter().copied()
    }

    /// Map from member to its position in insertion order.
    pub fn index(&self) -> HashMap<StateId, usize> {
        self.members.iter().enumerate().map(|(i, &s)| (s, i)).collect()
    }
}

/// How fall-back-in mass from OUT is spread over the envelope.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Reentry {
    #[default]
    Uniform,
    /// Explicit weights over envelope members; must sum to 1.
    Weights(BTreeMap<StateId, f64>),
}

/// Value of the absorbing OUT state, `-1 / (1 - gamma)`.
pub fn out_value(gamma: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidArgument(format!("gamma must lie in [0, 1), got {gamma}")));
    }
    Ok(-1.0 / (1.0 - gamma))
}

/// Restricted value estimates keyed by system state. States outside the
/// envelope take the value of OUT.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeValues {
    values: HashMap<StateId, f64>,
    out: f64,
}

impl EnvelopeValues {
    pub fn empty(out: f64) -> Self {
        Self {
            values: HashMap::new(),
            out,
        }
    }

    pub fn from_map(values: HashMap<StateId, f64>, out: f64) -> Self {
        Self { values, out }
    }

    #[inline]
    pub fn get(&self, state: StateId) -> f64 {
        self.values.get(&state).copied().unwrap_or(self.out)
    }

    pub fn contains(&self, state: StateId) -> bool {
        self.values.contains_key(&state)
    }

    pub fn out(&self) -> f64 {
        self.out
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// The system automaton projected onto an envelope plus the OUT pseudo-state.
///
/// Local state `i < |E|` is the `i`-th envelope member; local state `|E|` is
/// OUT. For a member `x` and action `a`, in-envelope successors keep their
/// system probabilities and OUT receives `1 - sum` of them. OUT is a sink
/// when `p_back = 0`; otherwise every action from OUT re-enters the envelope
/// with total mass `p_back`.
#[derive(Debug, Clone)]
pub struct RestrictedAutomaton {
    members: Vec<StateId>,
    index: HashMap<StateId, usize>,
    p_back: f64,
    model: StochasticAutomaton,
    reward: RewardSpec,
}

#[derive(Debug, Clone)]
pub struct RestrictedSolution {
    /// Actions on the envelope members, reflex elsewhere.
    pub policy: Policy,
    /// Local values; the last entry is OUT.
    pub values: ValueFunction,
    pub estimates: EnvelopeValues,
    pub rounds: usize,
    pub converged: bool,
    pub ticks: u64,
}

/// Build the restricted automaton for `envelope`.
pub fn restrict(
    automaton: &StochasticAutomaton,
    envelope: &Envelope,
    p_back: f64,
    reentry: &Reentry,
) -> Result<RestrictedAutomaton> {
    if envelope.is_empty() {
        return Err(Error::EmptyEnvelope);
    }
    if !(0.0..1.0).contains(&p_back) {
        return Err(Error::InvalidArgument(format!("p_back must lie in [0, 1), got {p_back}")));
    }
    for s in envelope.iter() {
        automaton.check_state(s)?;
    }
    let members = envelope.members().to_vec();
    let index = envelope.index();
    let m = members.len();
    let out = m;
    let num_actions = automaton.num_actions();

    let reentry_row: Vec<(StateId, f64)> = if p_back > 0.0 {
        match reentry {
            Reentry::Uniform => {
                let w = p_back / m as f64;
                (0..m).map(|i| (i, w)).collect()
            }
            Reentry::Weights(weights) => {
                let mut total = 0.0;
                let mut row = Vec::new();
                for (&s, &w) in weights {
                    let Some(&i) = index.get(&s) else {
                        return Err(Error::InvalidArgument(format!(
                            "reentry weight on non-member state {s}"
                        )));
                    };
                    if w < 0.0 {
                        return Err(Error::InvalidArgument("negative reentry weight".into()));
                    }
                    total += w;
                    if w > 0.0 {
                        row.push((i, p_back * w));
                    }
                }
                if (total - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidArgument(format!(
                        "reentry weights sum to {total}, expected 1"
                    )));
                }
                row.sort_unstable_by_key(|&(i, _)| i);
                row
            }
        }
    } else {
        Vec::new()
    };

    let mut b = AutomatonBuilder::new(m + 1, num_actions);
    for (i, &x) in members.iter().enumerate() {
        for a in 0..num_actions {
            let sys = automaton.row(x, a);
            if sys.is_empty() {
                continue;
            }
            let mut row = Vec::with_capacity(sys.len() + 1);
            let mut inside = 0.0;
            let mut leaves = false;
            for t in sys {
                match index.get(&t.to) {
                    Some(&j) => {
                        row.push((j, t.prob));
                        inside += t.prob;
                    }
                    None => leaves |= t.prob > 0.0,
                }
            }
            // OUT gets one minus the in-envelope mass, and only when some
            // successor actually lies outside.
            if leaves {
                row.push((out, (1.0 - inside).max(0.0)));
            }
            b.set_row(i, a, row);
        }
        if automaton.is_goal(x) {
            b.add_goal(i);
        }
    }
    for a in 0..num_actions {
        let mut row = reentry_row.clone();
        row.push((out, 1.0 - p_back));
        b.set_row(out, a, row);
    }
    let model = b.build();
    let reward = RewardSpec::goal_of_achievement(&model);
    Ok(RestrictedAutomaton {
        members,
        index,
        p_back,
        model,
        reward,
    })
}

impl RestrictedAutomaton {
    /// The local automaton over envelope members and OUT.
    pub fn model(&self) -> &StochasticAutomaton {
        &self.model
    }

    pub fn reward(&self) -> &RewardSpec {
        &self.reward
    }

    pub fn members(&self) -> &[StateId] {
        &self.members
    }

    /// Envelope size (OUT excluded).
    pub fn size(&self) -> usize {
        self.members.len()
    }

    pub fn out_id(&self) -> usize {
        self.members.len()
    }

    pub fn p_back(&self) -> f64 {
        self.p_back
    }

    pub fn local(&self, state: StateId) -> Option<usize> {
        self.index.get(&state).copied()
    }

    /// Local id of `state`, or OUT when it is not a member.
    pub fn local_or_out(&self, state: StateId) -> usize {
        self.local(state).unwrap_or(self.out_id())
    }

    /// System state of a local id; `None` for OUT.
    pub fn global(&self, local: usize) -> Option<StateId> {
        self.members.get(local).copied()
    }

    /// Local dense policy: member actions from `policy`, OUT uses the reflex.
    pub fn local_policy(&self, policy: &Policy) -> Vec<usize> {
        let mut v: Vec<usize> = self.members.iter().map(|&x| policy.action(x)).collect();
        v.push(policy.reflex());
        v
    }

    /// System-level policy with the given local actions on the members.
    pub fn globalize(&self, local_actions: &[usize], reflex: usize) -> Policy {
        Policy::new(
            self.members
                .iter()
                .zip(local_actions)
                .map(|(&x, &a)| (x, a))
                .collect(),
            reflex,
        )
    }

    pub fn estimates(&self, local_values: &[f64]) -> EnvelopeValues {
        EnvelopeValues {
            values: self
                .members
                .iter()
                .zip(local_values)
                .map(|(&x, &v)| (x, v))
                .collect(),
            out: local_values[self.out_id()],
        }
    }

    /// Policy generation on this restricted automaton, starting from
    /// `initial` (restricted to the envelope) and optionally warm-started
    /// from previous estimates. Each round costs `cost.pg_round(|E|)`.
    pub fn solve(
        &self,
        initial: &Policy,
        warm: Option<&EnvelopeValues>,
        config: &SolverConfig,
        budget: TickBudget,
        cost: &CostModel,
    ) -> Result<RestrictedSolution> {
        let local_initial = Policy::total(&self.local_policy(initial), initial.reflex());
        let warm_values = warm.map(|w| {
            let mut v: Vec<f64> = self.members.iter().map(|&x| w.get(x)).collect();
            v.push(w.out());
            v
        });
        let out = policy_iteration_warm(
            &self.model,
            &self.reward,
            &local_initial,
            warm_values,
            config,
            budget,
            cost.pg_round(self.size()),
        )?;
        let local_actions = out.policy.to_dense(self.model.num_states());
        let estimates = self.estimates(&out.values.values);
        Ok(RestrictedSolution {
            policy: self.globalize(&local_actions[..self.size()], initial.reflex()),
            values: ValueFunction::new(out.values.values, Provenance::RestrictedEstimate),
            estimates,
            rounds: out.rounds,
            converged: out.converged,
            ticks: out.ticks,
        })
    }

    /// Value of a fixed policy on this restricted automaton.
    pub fn evaluate(&self, policy: &Policy, config: &SolverConfig) -> Result<EnvelopeValues> {
        let local = self.local_policy(policy);
        let mut values = vec![0.0; self.model.num_states()];
        crate::mdp::evaluate_in_place(&self.model, &self.reward, &local, config, &mut values)?;
        Ok(self.estimates(&values))
    }
}
