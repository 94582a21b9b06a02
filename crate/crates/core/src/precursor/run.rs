//! Deadline-bounded planning: the greedy ratio scheduler, the full-space
//! baselines and profile-statistics gathering.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cost::CostModel;
use crate::envelope::{extension_order, find_path, restrict, Envelope, EnvelopeValues, Reentry};
use crate::error::{Error, Result};
use crate::gridworld::{Task, STAY};
use crate::mdp::{
    policy_evaluate, ActionId, Policy, PolicyIteration, RewardSpec, SolverConfig, StateId,
    StochasticAutomaton, TickBudget,
};

use super::profile::{ProfileSample, ProfileTable, DEFAULT_N_GRID};

#[derive(Debug, Clone, PartialEq)]
pub struct PrecursorConfig {
    pub solver: SolverConfig,
    pub cost: CostModel,
    pub n_grid: Vec<usize>,
    /// Stopping tolerance of the fall-out push-forward.
    pub tolerance: f64,
    pub reflex: ActionId,
}

impl Default for PrecursorConfig {
    fn default() -> Self {
        Self {
            solver: SolverConfig::default(),
            cost: CostModel::default(),
            n_grid: DEFAULT_N_GRID.to_vec(),
            tolerance: 1e-9,
            reflex: STAY,
        }
    }
}

impl PrecursorConfig {
    pub fn validate(&self) -> Result<()> {
        self.solver.validate()?;
        self.cost.validate()?;
        if self.n_grid.is_empty() || self.n_grid.contains(&0) {
            return Err(Error::InvalidConfig("n grid must be non-empty and positive".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidConfig("tolerance must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Add(usize),
    Stop,
}

/// Pick the extension size with the best expected improvement per tick
/// among options whose expected cost fits in `remaining`.
///
/// Without a delay cost it stops when nothing fits or the best option's
/// expected improvement is not positive; with `delay_cost_rate` it stops
/// when that improvement does not pay for its expected cost.
pub fn greedy_round(
    table: &ProfileTable,
    size: usize,
    value: f64,
    remaining: Option<u64>,
    delay_cost_rate: Option<f64>,
) -> Decision {
    if remaining == Some(0) {
        return Decision::Stop;
    }
    let (_, curve) = table.lookup(size, value);
    let mut best: Option<(usize, f64, f64, f64)> = None;
    for (n, c) in curve {
        if remaining.is_some_and(|r| c.mean_cost > r as f64) {
            continue;
        }
        let ratio = c.mean_dv / c.mean_cost.max(1.0);
        if best.map_or(true, |b| ratio > b.1) {
            best = Some((n, ratio, c.mean_dv, c.mean_cost));
        }
    }
    let Some((n, _, dv, cost)) = best else {
        return Decision::Stop;
    };
    let worth = match delay_cost_rate {
        Some(rate) => dv - rate * cost > 0.0,
        None => dv > 0.0,
    };
    if worth {
        Decision::Add(n)
    } else {
        Decision::Stop
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PrecursorMode {
    Greedy,
    InflexibleFull,
    FlexibleFull,
}

impl PrecursorMode {
    pub const ALL: [PrecursorMode; 3] = [
        PrecursorMode::Greedy,
        PrecursorMode::InflexibleFull,
        PrecursorMode::FlexibleFull,
    ];
}

impl fmt::Display for PrecursorMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PrecursorMode::Greedy => "GREEDY",
            PrecursorMode::InflexibleFull => "INFLEXIBLE-FULL",
            PrecursorMode::FlexibleFull => "FLEXIBLE-FULL",
        })
    }
}

impl FromStr for PrecursorMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "GREEDY" => Ok(PrecursorMode::Greedy),
            "INFLEXIBLE-FULL" => Ok(PrecursorMode::InflexibleFull),
            "FLEXIBLE-FULL" => Ok(PrecursorMode::FlexibleFull),
            _ => Err(Error::InvalidArgument(format!("unknown precursor mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DeliberationBudget {
    /// Deadline in ticks; `None` means no deadline.
    pub total_ticks: Option<u64>,
    /// Value lost per deliberation tick, for planning without a deadline.
    pub delay_cost_rate: Option<f64>,
}

impl DeliberationBudget {
    pub fn deadline(ticks: u64) -> Self {
        Self {
            total_ticks: Some(ticks),
            delay_cost_rate: None,
        }
    }

    pub fn unbounded() -> Self {
        Self::default()
    }

    fn tick_budget(&self, spent: u64) -> TickBudget {
        match self.total_ticks {
            Some(t) => TickBudget::Ticks(t.saturating_sub(spent)),
            None => TickBudget::Unbounded,
        }
    }

    fn fits(&self, spent: u64, cost: u64) -> bool {
        self.total_ticks.map_or(true, |t| spent.saturating_add(cost) <= t)
    }
}

/// A yield point: the policy held from `tick` on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry {
    pub tick: u64,
    /// Exact full-automaton value of the held policy at the start state.
    pub value: f64,
    /// The planner's own estimate at the start state.
    pub estimate: f64,
    pub mode: PrecursorMode,
    pub round: usize,
}

#[derive(Debug, Clone)]
pub struct PrecursorRun {
    pub mode: PrecursorMode,
    /// Complete policy: explicit on the planned states, reflex elsewhere.
    pub policy: Policy,
    pub trace: Vec<TraceEntry>,
    pub ticks: u64,
    pub envelope_size: usize,
}

impl PrecursorRun {
    pub fn final_value(&self) -> f64 {
        self.trace.last().map_or(f64::NAN, |e| e.value)
    }

    /// The entry in force when interrupted at `tick`.
    pub fn held_at(&self, tick: u64) -> &TraceEntry {
        let i = self.trace.partition_point(|e| e.tick <= tick);
        &self.trace[i.saturating_sub(1)]
    }

    pub fn trace_csv(&self) -> String {
        let mut s = String::from("tick,value,mode,round\n");
        s.push_str(&trace_rows(&self.trace));
        s
    }
}

/// Trace rows without a header.
pub fn trace_rows(trace: &[TraceEntry]) -> String {
    trace
        .iter()
        .map(|e| format!("{},{:?},{},{}\n", e.tick, e.value, e.mode, e.round))
        .collect()
}

fn exact_value(
    automaton: &StochasticAutomaton,
    reward: &RewardSpec,
    policy: &Policy,
    start: StateId,
    config: &SolverConfig,
) -> Result<f64> {
    Ok(policy_evaluate(automaton, reward, policy, config)?.get(start))
}

/// Plan from `start` within `budget`.
pub fn run_precursor(
    automaton: &StochasticAutomaton,
    reward: &RewardSpec,
    start: StateId,
    mode: PrecursorMode,
    budget: &DeliberationBudget,
    table: Option<&ProfileTable>,
    config: &PrecursorConfig,
) -> Result<PrecursorRun> {
    config.validate()?;
    automaton.check_state(start)?;
    match mode {
        PrecursorMode::Greedy => {
            let table = table.ok_or_else(|| Error::InvalidArgument("GREEDY needs a profile table".into()))?;
            run_greedy(automaton, reward, start, budget, table, config)
        }
        PrecursorMode::InflexibleFull | PrecursorMode::FlexibleFull => {
            run_full(automaton, reward, start, mode, budget, config)
        }
    }
}

fn run_greedy(
    automaton: &StochasticAutomaton,
    reward: &RewardSpec,
    start: StateId,
    budget: &DeliberationBudget,
    table: &ProfileTable,
    config: &PrecursorConfig,
) -> Result<PrecursorRun> {
    let mode = PrecursorMode::Greedy;
    let solver = &config.solver;
    let reflex = Policy::reflex_only(config.reflex);
    let floor = solver.floor_value();
    let reflex_value = exact_value(automaton, reward, &reflex, start, solver)?;
    let mut trace = vec![TraceEntry {
        tick: 0,
        value: reflex_value,
        estimate: floor,
        mode,
        round: 0,
    }];
    let path = find_path(automaton, start)?;
    let fp_cost = config.cost.find_path(path.expanded);
    let mut run = PrecursorRun {
        mode,
        policy: reflex.clone(),
        trace: Vec::new(),
        ticks: 0,
        envelope_size: 0,
    };
    if !budget.fits(0, fp_cost) {
        run.trace = trace;
        return Ok(run);
    }
    let mut spent = fp_cost;
    let mut policy = reflex;
    for (&x, &a) in path.states.iter().zip(&path.actions) {
        policy.set(x, a);
    }
    let mut envelope = Envelope::from_states(path.states);
    let mut values: Option<EnvelopeValues> = None;
    let mut round = 0;
    let mut unbounded_tail = false;
    loop {
        if round > 0 {
            let order = extension_order(automaton, &envelope, &policy, start, config.tolerance)?;
            if order.is_empty() {
                break;
            }
            let remaining = budget.total_ticks.map(|t| t.saturating_sub(spent));
            let estimate = values.as_ref().map_or(floor, |v| v.get(start));
            let unbounded = budget.total_ticks.is_none() && budget.delay_cost_rate.is_none();
            let n = match greedy_round(table, envelope.len(), estimate, remaining, budget.delay_cost_rate) {
                Decision::Add(n) if !unbounded_tail => n,
                _ if unbounded => {
                    // Without a deadline, keep growing until the envelope is closed.
                    unbounded_tail = true;
                    config.n_grid.iter().copied().max().unwrap_or(1)
                }
                _ => break,
            };
            let add = n.min(order.len());
            let ea = config.cost.alteration(envelope.len(), add);
            if !budget.fits(spent, ea) {
                break;
            }
            spent += ea;
            envelope.extend(order.into_iter().take(add));
        }
        let r = restrict(automaton, &envelope, 0.0, &Reentry::Uniform)?;
        let sol = r.solve(&policy, values.as_ref(), solver, budget.tick_budget(spent), &config.cost)?;
        spent += sol.ticks;
        policy = sol.policy;
        values = Some(sol.estimates);
        round += 1;
        trace.push(TraceEntry {
            tick: spent,
            value: exact_value(automaton, reward, &policy, start, solver)?,
            estimate: values.as_ref().map_or(floor, |v| v.get(start)),
            mode,
            round,
        });
        if !sol.converged {
            break;
        }
    }
    run.policy = policy;
    run.trace = trace;
    run.ticks = spent;
    run.envelope_size = envelope.len();
    Ok(run)
}

fn run_full(
    automaton: &StochasticAutomaton,
    reward: &RewardSpec,
    start: StateId,
    mode: PrecursorMode,
    budget: &DeliberationBudget,
    config: &PrecursorConfig,
) -> Result<PrecursorRun> {
    let solver = &config.solver;
    let n = automaton.num_states();
    let round_cost = config.cost.pg_round(n);
    let mut it = PolicyIteration::new(automaton, reward, vec![config.reflex; n], None, solver)?;
    let reflex_value = it.values()[start];
    let mut trace = vec![TraceEntry {
        tick: 0,
        value: reflex_value,
        estimate: reflex_value,
        mode,
        round: 0,
    }];
    let mut spent = 0u64;
    while !it.converged() && it.rounds() < solver.max_rounds && budget.fits(spent, round_cost) {
        it.round()?;
        spent += round_cost;
        if mode == PrecursorMode::FlexibleFull {
            let v = it.values()[start];
            trace.push(TraceEntry {
                tick: spent,
                value: v,
                estimate: v,
                mode,
                round: it.rounds(),
            });
        }
    }
    let finished = it.converged();
    let rounds = it.rounds();
    let (actions, values) = it.into_parts();
    let policy = if mode == PrecursorMode::FlexibleFull || finished {
        Policy::total(&actions, config.reflex)
    } else {
        Policy::reflex_only(config.reflex)
    };
    if mode == PrecursorMode::InflexibleFull && finished {
        trace.push(TraceEntry {
            tick: spent,
            value: values[start],
            estimate: values[start],
            mode,
            round: rounds,
        });
    }
    Ok(PrecursorRun {
        mode,
        policy,
        trace,
        ticks: spent,
        envelope_size: if finished || mode == PrecursorMode::FlexibleFull { n } else { 0 },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GatherConfig {
    pub precursor: PrecursorConfig,
    /// A task stops contributing once its envelope reaches this size.
    pub max_envelope: usize,
}

impl Default for GatherConfig {
    fn default() -> Self {
        Self {
            precursor: PrecursorConfig::default(),
            max_envelope: 300,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct GatherReport {
    pub samples: Vec<ProfileSample>,
    pub tasks: usize,
    /// Tasks whose goal was unreachable from the start.
    pub skipped: usize,
}

/// Collect at least `budget` profile samples, finishing the last round.
///
/// Each task starts from a find-path envelope optimized to completion. Every
/// round ranks candidate states once, then for every `n` in the grid adds the
/// first `n` of them (fewer if fewer exist), re-optimizes, and records the
/// start-state improvement and the ticks charged. The task continues from one
/// of those extensions picked at random, until its envelope is closed or
/// reaches `max_envelope`.
pub fn gather_profile_statistics(
    mut next_task: impl FnMut(&mut ChaCha8Rng) -> Result<Task>,
    budget: usize,
    seed: u64,
    config: &GatherConfig,
) -> Result<GatherReport> {
    let pc = &config.precursor;
    pc.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GatherReport::default();
    // A task that yields no samples twice in a row signals a degenerate domain.
    let mut barren = 0;
    while report.samples.len() < budget {
        let task = next_task(&mut rng)?;
        report.tasks += 1;
        let before = report.samples.len();
        match gather_task(&task, budget - report.samples.len(), &mut rng, config, &mut report.samples) {
            Err(Error::Unreachable { .. }) => report.skipped += 1,
            other => other?,
        }
        if report.samples.len() == before {
            barren += 1;
            if barren > 1000 {
                return Err(Error::InvalidArgument("tasks produce no samples; envelopes close immediately".into()));
            }
        } else {
            barren = 0;
        }
    }
    Ok(report)
}

fn gather_task(
    task: &Task,
    want: usize,
    rng: &mut ChaCha8Rng,
    config: &GatherConfig,
    out: &mut Vec<ProfileSample>,
) -> Result<()> {
    let pc = &config.precursor;
    let (a, start) = (&task.automaton, task.start);
    let path = find_path(a, start)?;
    let mut policy = Policy::reflex_only(pc.reflex);
    for (&x, &act) in path.states.iter().zip(&path.actions) {
        policy.set(x, act);
    }
    let mut envelope = Envelope::from_states(path.states);
    let r = restrict(a, &envelope, 0.0, &Reentry::Uniform)?;
    let sol = r.solve(&policy, None, &pc.solver, TickBudget::Unbounded, &pc.cost)?;
    policy = sol.policy;
    let mut values = sol.estimates;
    let mut taken = 0;
    while taken < want && envelope.len() < config.max_envelope {
        let order = extension_order(a, &envelope, &policy, start, pc.tolerance)?;
        if order.is_empty() {
            break;
        }
        let v0 = values.get(start);
        let mut options = Vec::with_capacity(pc.n_grid.len());
        for &n in &pc.n_grid {
            let add = n.min(order.len());
            let mut env = envelope.clone();
            env.extend(order[..add].iter().copied());
            let r = restrict(a, &env, 0.0, &Reentry::Uniform)?;
            let sol = r.solve(&policy, Some(&values), &pc.solver, TickBudget::Unbounded, &pc.cost)?;
            let ticks = pc.cost.alteration(envelope.len(), add).saturating_add(sol.ticks);
            out.push(ProfileSample {
                size_before: envelope.len(),
                value_before: v0,
                n,
                delta_v: sol.estimates.get(start) - v0,
                ticks,
            });
            taken += 1;
            options.push((env, sol));
        }
        let (env, sol) = options.swap_remove(rng.gen_range(0..options.len()));
        envelope = env;
        policy = sol.policy;
        values = sol.estimates;
    }
    Ok(())
}
