//! The weakly coupled planner/executor simulation.
//!
//! The executor steps the automaton under the last policy it received,
//! falling back to the reflex outside that policy's envelope. The planner
//! runs deliberation strategies (or full-space policy iteration) and, at
//! exchange points, ships its latest finished policy and observes the
//! executor's state. Deliberation ticks convert to execution steps at a
//! fixed rate.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cost::CostModel;
use crate::envelope::{
    apply_strategy, fringe, DeliberationStrategy, Envelope, PlanState, Reentry, StrategyContext,
    StrategyOutcome,
};
use crate::error::{Error, Result};
use crate::gridworld::{manhattan_distance, GridMap, Task, STAY};
use crate::mdp::{ActionId, Policy, PolicyIteration, RewardSpec, SolverConfig, StateId, StochasticAutomaton};

use super::eiv::{eiv_sample, fatness};
use super::table::{EivSample, EivTable, Features};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CouplingMode {
    /// Exchange once every `n` deliberation ticks.
    FixedTicks(u64),
    /// Exchange whenever a strategy finishes.
    StrategyPaced,
    /// Deliberate only when the executor is outside the envelope.
    OnFallout,
}

impl fmt::Display for CouplingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CouplingMode::FixedTicks(n) => write!(f, "fixed-ticks:{n}"),
            CouplingMode::StrategyPaced => f.write_str("strategy-paced"),
            CouplingMode::OnFallout => f.write_str("on-fallout"),
        }
    }
}

impl FromStr for CouplingMode {
    type Err = Error;

    /// `strategy-paced`, `on-fallout` or `fixed-ticks:<n>`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "strategy-paced" => Ok(CouplingMode::StrategyPaced),
            "on-fallout" => Ok(CouplingMode::OnFallout),
            _ => {
                let n = s
                    .strip_prefix("fixed-ticks:")
                    .and_then(|n| n.parse::<u64>().ok())
                    .ok_or_else(|| Error::InvalidArgument(format!("unknown coupling {s:?}")))?;
                Ok(CouplingMode::FixedTicks(n))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingConfig {
    pub mode: CouplingMode,
    /// Execution steps per deliberation tick.
    pub steps_per_tick: f64,
    pub step_cap: usize,
    /// Planner invocations allowed per run.
    pub invocation_cap: usize,
}

impl Default for CouplingConfig {
    fn default() -> Self {
        Self {
            mode: CouplingMode::StrategyPaced,
            steps_per_tick: 1e-4,
            step_cap: 100_000,
            invocation_cap: 100_000,
        }
    }
}

impl CouplingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.mode == CouplingMode::FixedTicks(0) {
            return Err(Error::InvalidConfig("fixed-ticks interval must be at least 1".into()));
        }
        if !(self.steps_per_tick > 0.0 && self.steps_per_tick.is_finite()) {
            return Err(Error::InvalidConfig("steps per tick must be positive".into()));
        }
        Ok(())
    }

    /// Execution steps elapsed while `ticks` of deliberation run.
    pub fn steps_for(&self, ticks: u64) -> usize {
        (ticks as f64 * self.steps_per_tick).ceil() as usize
    }

    /// Execution steps completed by deliberation tick `t`.
    fn steps_by(&self, t: u64) -> usize {
        (t as f64 * self.steps_per_tick).floor() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentConfig {
    pub solver: SolverConfig,
    pub cost: CostModel,
    pub p_back: f64,
    pub tolerance: f64,
    pub reflex: ActionId,
    pub coupling: CouplingConfig,
}

impl Default for RecurrentConfig {
    fn default() -> Self {
        Self {
            solver: SolverConfig::default(),
            cost: CostModel::default(),
            p_back: 0.05,
            tolerance: 1e-9,
            reflex: STAY,
            coupling: CouplingConfig::default(),
        }
    }
}

impl RecurrentConfig {
    pub fn validate(&self) -> Result<()> {
        self.solver.validate()?;
        self.cost.validate()?;
        self.coupling.validate()?;
        if !(0.0..1.0).contains(&self.p_back) {
            return Err(Error::InvalidConfig(format!("p_back must lie in [0, 1), got {}", self.p_back)));
        }
        Ok(())
    }
}

/// A navigation problem with per-state distance to the goal.
#[derive(Debug, Clone)]
pub struct RecurrentProblem {
    pub automaton: StochasticAutomaton,
    pub reward: RewardSpec,
    pub start: StateId,
    pub distance: Vec<f64>,
}

impl RecurrentProblem {
    pub fn from_task(task: Task, map: &GridMap) -> Result<Self> {
        let distance = (0..map.num_states())
            .map(|s| map.decode(s).map(|r| manhattan_distance(r.location, task.goal_location) as f64))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            automaton: task.automaton,
            reward: task.reward,
            start: task.start,
            distance,
        })
    }
}

pub enum Scheduler<'a> {
    /// Table-driven choice; uniform over the roster when the table has no data.
    Lookup(&'a EivTable),
    /// Full-space policy iteration, shipping after every round.
    Iter,
    /// Full-space policy iteration, shipping once converged.
    Whole,
    Fixed(DeliberationStrategy),
    /// Uniform random choice, as used for gathering statistics.
    Uniform(&'a [DeliberationStrategy]),
}

impl Scheduler<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            Scheduler::Lookup(_) => "LOOKUP",
            Scheduler::Iter => "ITER",
            Scheduler::Whole => "WHOLE",
            Scheduler::Fixed(_) => "FIXED",
            Scheduler::Uniform(_) => "UNIFORM",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepRecord {
    pub step: usize,
    pub state: StateId,
    pub action: ActionId,
    pub reflexive: bool,
    pub policy_id: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Invocation {
    pub label: String,
    /// Roster index, for strategy schedulers.
    pub strategy: Option<usize>,
    /// Executor step count when the invocation started.
    pub start_step: usize,
    /// State the planner worked from.
    pub state: StateId,
    pub ticks: u64,
    /// Execution steps elapsed while it ran.
    pub steps: usize,
    pub size_before: usize,
    pub size_after: usize,
    pub value_before: f64,
    pub value_after: f64,
    pub features: Features,
    /// Improvement sample, when the elapsed interval is well defined.
    pub delta_v: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Exchange {
    pub tick: u64,
    pub step: usize,
    pub observed: StateId,
    /// Policy the executor holds after the exchange.
    pub policy_id: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunOutcome {
    Goal,
    /// Step or invocation cap reached.
    Capped,
    /// The planner found no path to a goal from the observed state.
    Stuck,
}

#[derive(Debug, Clone)]
pub struct RunTrace {
    pub scheduler: &'static str,
    pub steps: Vec<StepRecord>,
    pub invocations: Vec<Invocation>,
    pub exchanges: Vec<Exchange>,
    pub outcome: RunOutcome,
    pub final_state: StateId,
    pub policies_shipped: usize,
    /// Policy the executor held at the end, completed by the reflex.
    pub final_policy: Policy,
}

impl RunTrace {
    pub fn steps_taken(&self) -> usize {
        self.steps.len()
    }

    pub fn steps_to_goal(&self) -> Option<usize> {
        (self.outcome == RunOutcome::Goal).then_some(self.steps.len())
    }

    pub fn steps_csv(&self) -> String {
        let mut s = String::from("step,state,action,reflexive,policy\n");
        for r in &self.steps {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                r.step, r.state, r.action, r.reflexive as u8, r.policy_id
            ));
        }
        s
    }

    pub fn invocations_csv(&self) -> String {
        let mut s = String::from(
            "start_step,state,strategy,ticks,steps,size_before,size_after,value_before,value_after,delta_v\n",
        );
        for i in &self.invocations {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{:?},{:?},{}\n",
                i.start_step,
                i.state,
                i.label,
                i.ticks,
                i.steps,
                i.size_before,
                i.size_after,
                i.value_before,
                i.value_after,
                i.delta_v.map_or(String::new(), |v| format!("{v:?}"))
            ));
        }
        s
    }
}

struct Executor<'a> {
    automaton: &'a StochasticAutomaton,
    rng: ChaCha8Rng,
    state: StateId,
    policy: Policy,
    in_envelope: Vec<bool>,
    policy_id: usize,
    steps: Vec<StepRecord>,
    cap: usize,
}

impl<'a> Executor<'a> {
    fn new(automaton: &'a StochasticAutomaton, start: StateId, reflex: ActionId, seed: u64, cap: usize) -> Self {
        Self {
            automaton,
            rng: ChaCha8Rng::seed_from_u64(seed),
            state: start,
            policy: Policy::reflex_only(reflex),
            in_envelope: vec![false; automaton.num_states()],
            policy_id: 0,
            steps: Vec::new(),
            cap,
        }
    }

    fn at_goal(&self) -> bool {
        self.automaton.is_goal(self.state)
    }

    fn done(&self) -> bool {
        self.at_goal() || self.steps.len() >= self.cap
    }

    fn step(&mut self) {
        let s = self.state;
        let inside = self.in_envelope[s];
        let action = self.policy.action(s);
        self.steps.push(StepRecord {
            step: self.steps.len(),
            state: s,
            action,
            reflexive: !inside,
            policy_id: self.policy_id,
        });
        let u: f64 = self.rng.gen();
        let row = self.automaton.row(s, action);
        let mut acc = 0.0;
        let mut next = row.last().map_or(s, |t| t.to);
        for t in row {
            acc += t.prob;
            if u < acc {
                next = t.to;
                break;
            }
        }
        self.state = next;
    }

    /// Step up to `n` times; returns the number taken.
    fn advance(&mut self, n: usize) -> usize {
        let mut taken = 0;
        while taken < n && !self.done() {
            self.step();
            taken += 1;
        }
        taken
    }

    /// Install `policy` restricted to `envelope`; the reflex covers the rest.
    fn receive(&mut self, policy: &Policy, envelope: &Envelope) {
        self.in_envelope.iter_mut().for_each(|b| *b = false);
        let mut p = Policy::reflex_only(policy.reflex());
        for x in envelope.iter() {
            self.in_envelope[x] = true;
            if policy.in_domain(x) {
                p.set(x, policy.action(x));
            }
        }
        self.policy = p;
        self.policy_id += 1;
    }

    fn receive_total(&mut self, actions: &[ActionId], reflex: ActionId) {
        self.in_envelope.iter_mut().for_each(|b| *b = true);
        self.policy = Policy::total(actions, reflex);
        self.policy_id += 1;
    }
}

struct Planner<'a> {
    problem: &'a RecurrentProblem,
    config: &'a RecurrentConfig,
    ctx: StrategyContext<'a>,
    rng: ChaCha8Rng,
    plan: PlanState,
}

struct Deliberation {
    outcome: StrategyOutcome,
    label: String,
    strategy: Option<usize>,
    features: Features,
    value_before: f64,
}

impl<'a> Planner<'a> {
    fn features(&self, x: StateId) -> Features {
        let e = &self.plan.envelope;
        let fringe_len = fringe(self.ctx.automaton, e, &self.plan.policy).len();
        Features {
            envelope_size: e.len() as f64,
            value: self.plan.values.get(x),
            fatness: fatness(e, fringe_len),
            distance: self.problem.distance[x],
        }
    }

    fn deliberate(&mut self, scheduler: &Scheduler<'_>, x: StateId) -> Result<Deliberation> {
        let features = self.features(x);
        let (strategy, index) = match scheduler {
            Scheduler::Lookup(table) => {
                let roster = table.roster();
                if roster.is_empty() {
                    return Err(Error::InvalidArgument("EIV table has an empty roster".into()));
                }
                let i = match table.lookup_best(&features) {
                    Some(i) => i,
                    None => self.rng.gen_range(0..roster.len()),
                };
                (roster[i].clone(), Some(i))
            }
            Scheduler::Uniform(roster) => {
                if roster.is_empty() {
                    return Err(Error::InvalidArgument("empty strategy roster".into()));
                }
                let i = self.rng.gen_range(0..roster.len());
                (roster[i].clone(), Some(i))
            }
            Scheduler::Fixed(s) => (s.clone(), None),
            Scheduler::Iter | Scheduler::Whole => unreachable!("full-space schedulers do not use strategies"),
        };
        let outcome = apply_strategy(&strategy, &self.ctx, &self.plan, x)?;
        Ok(Deliberation {
            outcome,
            label: strategy.label(),
            strategy: index,
            features,
            value_before: self.plan.values.get(x),
        })
    }

    /// Improvement sample for a strategy during which the executor took `k`
    /// steps from `x` under `held`.
    fn eiv(&self, held: &Policy, x: StateId, k: usize, d: &Deliberation) -> Result<f64> {
        let old = &self.plan.values;
        let new = &d.outcome.state.values;
        eiv_sample(
            &self.problem.automaton,
            &self.problem.reward,
            held,
            x,
            k,
            self.config.solver.gamma,
            |s| old.get(s),
            |s| new.get(s),
        )
    }

    fn invocation(&self, d: &Deliberation, x: StateId, start_step: usize, steps: usize, delta_v: Option<f64>) -> Invocation {
        Invocation {
            label: d.label.clone(),
            strategy: d.strategy,
            start_step,
            state: x,
            ticks: d.outcome.ticks,
            steps,
            size_before: self.plan.envelope.len(),
            size_after: d.outcome.state.envelope.len(),
            value_before: d.value_before,
            value_after: d.outcome.state.values.get(x),
            features: d.features,
            delta_v,
        }
    }
}

/// Simulate one run from `problem.start` until a goal, the step cap or the
/// invocation cap. Executor randomness depends on `seed` alone, so runs with
/// matched seeds see the same draws until their policies diverge.
pub fn run_recurrent(
    problem: &RecurrentProblem,
    scheduler: &Scheduler<'_>,
    config: &RecurrentConfig,
    seed: u64,
) -> Result<RunTrace> {
    config.validate()?;
    let a = &problem.automaton;
    a.check_state(problem.start)?;
    if problem.distance.len() != a.num_states() || problem.reward.len() != a.num_states() {
        return Err(Error::InvalidArgument("problem tables do not match the automaton".into()));
    }
    let cc = &config.coupling;
    let mut exec = Executor::new(a, problem.start, config.reflex, seed, cc.step_cap);
    let mut invocations = Vec::new();
    let mut exchanges = Vec::new();
    let mut outcome = None;

    if matches!(scheduler, Scheduler::Iter | Scheduler::Whole) {
        run_full_space(problem, scheduler, config, &mut exec, &mut invocations, &mut exchanges)?;
    } else {
        let mut planner_rng = ChaCha8Rng::seed_from_u64(seed);
        planner_rng.set_stream(1);
        let mut planner = Planner {
            problem,
            config,
            ctx: StrategyContext {
                automaton: a,
                solver: &config.solver,
                cost: &config.cost,
                p_back: config.p_back,
                reentry: Reentry::Uniform,
                tolerance: config.tolerance,
                protected: vec![problem.start],
            },
            rng: planner_rng,
            plan: PlanState::initial(config.reflex, config.solver.gamma),
        };
        let mut clock = 0u64;
        // FIXED-TICKS bookkeeping: the next exchange tick and the latest
        // finished plan not yet shipped.
        let mut next_exchange = match cc.mode {
            CouplingMode::FixedTicks(n) => n,
            _ => 0,
        };
        let mut observed = problem.start;
        let mut pending: Option<PlanState> = None;
        while !exec.done() {
            if invocations.len() >= cc.invocation_cap {
                outcome = Some(RunOutcome::Capped);
                break;
            }
            let x = match cc.mode {
                CouplingMode::OnFallout => {
                    if exec.in_envelope[exec.state] {
                        exec.step();
                        continue;
                    }
                    exec.state
                }
                CouplingMode::StrategyPaced => exec.state,
                CouplingMode::FixedTicks(_) => observed,
            };
            let d = match planner.deliberate(scheduler, x) {
                Ok(d) => d,
                Err(Error::Unreachable { .. }) => {
                    outcome = Some(RunOutcome::Stuck);
                    break;
                }
                Err(e) => return Err(e),
            };
            let start_step = exec.steps.len();
            let held = exec.policy.clone();
            let finish = clock.saturating_add(d.outcome.ticks);
            match cc.mode {
                CouplingMode::StrategyPaced | CouplingMode::OnFallout => {
                    let k = exec.advance(cc.steps_for(d.outcome.ticks).max(1));
                    let dv = planner.eiv(&held, x, k, &d)?;
                    invocations.push(planner.invocation(&d, x, start_step, k, Some(dv)));
                    let st = &d.outcome.state;
                    exec.receive(&st.policy, &st.envelope);
                    exchanges.push(Exchange {
                        tick: finish,
                        step: exec.steps.len(),
                        observed: exec.state,
                        policy_id: exec.policy_id,
                    });
                }
                CouplingMode::FixedTicks(n) => {
                    invocations.push(planner.invocation(&d, x, start_step, cc.steps_by(finish) - cc.steps_by(clock), None));
                    let mut exchange = |e: u64, ship: Option<&PlanState>, exec: &mut Executor<'_>| {
                        let target = cc.steps_by(e);
                        exec.advance(target.saturating_sub(exec.steps.len()));
                        if let Some(st) = ship {
                            exec.receive(&st.policy, &st.envelope);
                        }
                        exchanges.push(Exchange {
                            tick: e,
                            step: exec.steps.len(),
                            observed: exec.state,
                            policy_id: exec.policy_id,
                        });
                        exec.state
                    };
                    while next_exchange < finish && !exec.done() {
                        observed = exchange(next_exchange, pending.take().as_ref(), &mut exec);
                        next_exchange += n;
                    }
                    pending = Some(d.outcome.state.clone());
                    if next_exchange == finish && !exec.done() {
                        observed = exchange(next_exchange, pending.take().as_ref(), &mut exec);
                        next_exchange += n;
                    }
                }
            }
            clock = finish;
            planner.plan = d.outcome.state;
        }
    }
    let outcome = outcome.unwrap_or(if exec.at_goal() { RunOutcome::Goal } else { RunOutcome::Capped });
    Ok(RunTrace {
        scheduler: scheduler.name(),
        final_state: exec.state,
        policies_shipped: exec.policy_id,
        final_policy: exec.policy,
        steps: exec.steps,
        invocations,
        exchanges,
        outcome,
    })
}

fn run_full_space(
    problem: &RecurrentProblem,
    scheduler: &Scheduler<'_>,
    config: &RecurrentConfig,
    exec: &mut Executor<'_>,
    invocations: &mut Vec<Invocation>,
    exchanges: &mut Vec<Exchange>,
) -> Result<()> {
    let a = &problem.automaton;
    let n = a.num_states();
    let round_cost = config.cost.pg_round(n);
    let round_steps = config.coupling.steps_for(round_cost).max(1);
    let mut it = PolicyIteration::new(a, &problem.reward, vec![config.reflex; n], None, &config.solver)?;
    let mut rounds: Vec<(Vec<ActionId>, Vec<f64>)> = Vec::new();
    let mut prev_values = it.values().to_vec();
    while !it.converged() && it.rounds() < config.solver.max_rounds {
        it.round()?;
        rounds.push((it.actions().to_vec(), it.values().to_vec()));
    }
    let iter = matches!(scheduler, Scheduler::Iter);
    let features = Features {
        envelope_size: n as f64,
        value: 0.0,
        fatness: n as f64,
        distance: 0.0,
    };
    let ships: Vec<usize> = if iter {
        (1..=rounds.len()).collect()
    } else {
        vec![rounds.len()]
    };
    let mut tick = 0u64;
    let mut last_round = 0;
    for r in ships {
        let due = r * round_steps;
        let start_step = exec.steps.len();
        let x = exec.state;
        exec.advance(due.saturating_sub(start_step));
        if exec.done() {
            break;
        }
        let (actions, values) = &rounds[r - 1];
        let elapsed_rounds = (r - last_round) as u64;
        tick += elapsed_rounds * round_cost;
        invocations.push(Invocation {
            label: if iter { "PI".into() } else { format!("PI x{}", rounds.len()) },
            strategy: None,
            start_step,
            state: x,
            ticks: elapsed_rounds * round_cost,
            steps: exec.steps.len() - start_step,
            size_before: if last_round == 0 { 0 } else { n },
            size_after: n,
            value_before: prev_values[x],
            value_after: values[x],
            features: Features { value: prev_values[x], distance: problem.distance[x], ..features },
            delta_v: None,
        });
        exec.receive_total(actions, config.reflex);
        exchanges.push(Exchange {
            tick,
            step: exec.steps.len(),
            observed: exec.state,
            policy_id: exec.policy_id,
        });
        prev_values = values.clone();
        last_round = r;
    }
    exec.advance(usize::MAX);
    Ok(())
}

/// Samples from runs with uniformly random strategy choice.
#[derive(Debug, Clone, Default)]
pub struct EivGatherReport {
    pub samples: Vec<EivSample>,
    pub runs: usize,
    pub capped: usize,
    pub stuck: usize,
}

/// Run `runs` uniformly scheduled simulations and collect one sample per
/// strategy invocation that let the executor take at least one step.
pub fn gather_eiv_statistics(
    mut next_problem: impl FnMut(&mut ChaCha8Rng) -> Result<RecurrentProblem>,
    roster: &[DeliberationStrategy],
    runs: usize,
    seed: u64,
    config: &RecurrentConfig,
) -> Result<EivGatherReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = EivGatherReport::default();
    for _ in 0..runs {
        let problem = next_problem(&mut rng)?;
        let run_seed: u64 = rng.gen();
        let trace = run_recurrent(&problem, &Scheduler::Uniform(roster), config, run_seed)?;
        report.runs += 1;
        match trace.outcome {
            RunOutcome::Capped => report.capped += 1,
            RunOutcome::Stuck => report.stuck += 1,
            RunOutcome::Goal => {}
        }
        for inv in &trace.invocations {
            if let (Some(strategy), Some(delta_v)) = (inv.strategy, inv.delta_v) {
                if inv.steps > 0 {
                    report.samples.push(EivSample {
                        features: inv.features,
                        strategy,
                        steps: inv.steps,
                        ticks: inv.ticks,
                        delta_v,
                    });
                }
            }
        }
    }
    Ok(report)
}
