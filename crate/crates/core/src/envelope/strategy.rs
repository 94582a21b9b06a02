//! Deliberation strategies: fixed sequences of envelope-alteration and
//! policy-generation primitives, written as labels like `"FP R[50] O P[50] O"`.

use std::fmt;
use std::str::FromStr;

use crate::cost::CostModel;
use crate::error::{Error, Result};
use crate::mdp::{Policy, SolverConfig, StateId, StochasticAutomaton, TickBudget};

use super::alter::{extend_path_back, extend_path_to_goal, extend_robustify, prune};
use super::search::find_path;
use super::{restrict, Envelope, EnvelopeValues, Reentry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Primitive {
    /// `FP`: if the current state is outside the envelope, add a most
    /// reliable path from it to a goal, following the path's actions.
    FindPath,
    /// `R[N]`: add the N most likely falling-out states.
    Robustify(usize),
    /// `P[N]`: remove N low-occupancy states valued below the current state.
    Prune(usize),
    /// `O`: policy iteration to completion on the restricted automaton.
    Optimize,
    /// `XG`: add a path from the most likely falling-out state to a goal.
    ExtendPathToGoal,
    /// `XB`: add a path from the most likely falling-out state back into
    /// the envelope.
    ExtendPathBack,
}

impl fmt::Display for Primitive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Primitive::FindPath => f.write_str("FP"),
            Primitive::Robustify(n) => write!(f, "R[{n}]"),
            Primitive::Prune(n) => write!(f, "P[{n}]"),
            Primitive::Optimize => f.write_str("O"),
            Primitive::ExtendPathToGoal => f.write_str("XG"),
            Primitive::ExtendPathBack => f.write_str("XB"),
        }
    }
}

impl FromStr for Primitive {
    type Err = Error;

    fn from_str(tok: &str) -> Result<Self> {
        let bracketed = |prefix: &str| -> Option<Result<usize>> {
            let inner = tok.strip_prefix(prefix)?.strip_suffix(']')?;
            if inner.is_empty() || !inner.bytes().all(|b| b.is_ascii_digit()) {
                return Some(Err(Error::InvalidArgument(format!("bad count in token {tok:?}"))));
            }
            Some(
                inner
                    .parse::<usize>()
                    .map_err(|e| Error::InvalidArgument(format!("bad count in token {tok:?}: {e}")))
                    .and_then(|n| {
                        if n == 0 {
                            Err(Error::InvalidArgument(format!("count must be positive in {tok:?}")))
                        } else {
                            Ok(n)
                        }
                    }),
            )
        };
        match tok {
            "FP" => Ok(Primitive::FindPath),
            "O" => Ok(Primitive::Optimize),
            "XG" => Ok(Primitive::ExtendPathToGoal),
            "XB" => Ok(Primitive::ExtendPathBack),
            _ => {
                if let Some(n) = bracketed("R[") {
                    return n.map(Primitive::Robustify);
                }
                if let Some(n) = bracketed("P[") {
                    return n.map(Primitive::Prune);
                }
                Err(Error::InvalidArgument(format!("unknown strategy token {tok:?}")))
            }
        }
    }
}

/// A strategy starts with `FP` and ends with `O`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DeliberationStrategy {
    steps: Vec<Primitive>,
}

impl DeliberationStrategy {
    pub fn new(steps: Vec<Primitive>) -> Result<Self> {
        if steps.first() != Some(&Primitive::FindPath) {
            return Err(Error::InvalidArgument("strategy must begin with FP".into()));
        }
        if steps.last() != Some(&Primitive::Optimize) {
            return Err(Error::InvalidArgument("strategy must end with O".into()));
        }
        Ok(Self { steps })
    }

    pub fn steps(&self) -> &[Primitive] {
        &self.steps
    }

    pub fn label(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for DeliberationStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, p) in self.steps.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{p}")?;
        }
        Ok(())
    }
}

impl FromStr for DeliberationStrategy {
    type Err = Error;

    /// Tokens separated by exactly one space.
    fn from_str(label: &str) -> Result<Self> {
        let steps = label
            .split(' ')
            .map(|tok| {
                if tok.is_empty() {
                    Err(Error::InvalidArgument(format!(
                        "strategy {label:?} must use single spaces between tokens"
                    )))
                } else {
                    tok.parse()
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(steps)
    }
}

/// The planner's working state between strategy invocations.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanState {
    pub envelope: Envelope,
    /// Domain is the envelope; states added since the last `O` use the reflex.
    pub policy: Policy,
    /// Restricted estimates from the latest `O`.
    pub values: EnvelopeValues,
}

impl PlanState {
    pub fn initial(reflex: usize, gamma: f64) -> Self {
        Self {
            envelope: Envelope::new(),
            policy: Policy::reflex_only(reflex),
            values: EnvelopeValues::empty(-1.0 / (1.0 - gamma)),
        }
    }

    /// Estimated value of `state` under the current policy.
    pub fn estimate(&self, state: StateId) -> f64 {
        self.values.get(state)
    }
}

/// Fixed inputs to strategy execution.
#[derive(Debug, Clone)]
pub struct StrategyContext<'a> {
    pub automaton: &'a StochasticAutomaton,
    pub solver: &'a SolverConfig,
    pub cost: &'a CostModel,
    pub p_back: f64,
    pub reentry: Reentry,
    /// Tolerance for fall-out and occupancy push-forwards.
    pub tolerance: f64,
    /// States prune must keep (the start of the active run).
    pub protected: Vec<StateId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub primitive: Primitive,
    pub ticks: u64,
    pub added: usize,
    pub removed: usize,
}

#[derive(Debug, Clone)]
pub struct StrategyOutcome {
    pub state: PlanState,
    pub ticks: u64,
    pub steps: Vec<StepReport>,
}

/// Run every primitive of `strategy` in order from `current`, charging
/// ticks per the cost model.
pub fn apply_strategy(
    strategy: &DeliberationStrategy,
    ctx: &StrategyContext<'_>,
    state: &PlanState,
    current: StateId,
) -> Result<StrategyOutcome> {
    ctx.automaton.check_state(current)?;
    let mut st = state.clone();
    let mut steps = Vec::with_capacity(strategy.steps().len());
    let mut total = 0u64;
    for &prim in strategy.steps() {
        let before = st.envelope.len();
        let (ticks, added, removed) = match prim {
            Primitive::FindPath => {
                if st.envelope.contains(current) {
                    (0, 0, 0)
                } else {
                    let path = find_path(ctx.automaton, current)?;
                    for (&x, &a) in path.states.iter().zip(&path.actions) {
                        if !st.policy.in_domain(x) {
                            st.policy.set(x, a);
                        }
                    }
                    let added = st.envelope.extend(path.states);
                    (ctx.cost.find_path(path.expanded), added.len(), 0)
                }
            }
            Primitive::Robustify(n) => {
                let alt = extend_robustify(ctx.automaton, &st.envelope, &st.policy, current, n, ctx.tolerance)?;
                let changed = alt.changed();
                st.envelope = alt.envelope;
                (ctx.cost.alteration(before, changed), changed, 0)
            }
            Primitive::Prune(n) => {
                let mut ticks = 0;
                if !st.envelope.iter().all(|x| st.values.contains(x)) {
                    let r = restrict(ctx.automaton, &st.envelope, ctx.p_back, &ctx.reentry)?;
                    st.values = r.evaluate(&st.policy, ctx.solver)?;
                    ticks += ctx.cost.alteration(before, 0);
                }
                let alt = prune(
                    ctx.automaton,
                    &st.envelope,
                    &st.policy,
                    &st.values,
                    current,
                    n,
                    &ctx.protected,
                    ctx.solver.gamma,
                    ctx.tolerance,
                )?;
                for &x in &alt.removed {
                    st.policy.unset(x);
                }
                let removed = alt.removed.len();
                st.envelope = alt.envelope;
                (ticks + ctx.cost.alteration(before, removed), 0, removed)
            }
            Primitive::ExtendPathToGoal | Primitive::ExtendPathBack => {
                let alt = if prim == Primitive::ExtendPathToGoal {
                    extend_path_to_goal(ctx.automaton, &st.envelope, &st.policy, current, ctx.tolerance)?
                } else {
                    extend_path_back(ctx.automaton, &st.envelope, &st.policy, current, ctx.tolerance)?
                };
                let changed = alt.changed();
                st.envelope = alt.envelope;
                (ctx.cost.alteration(before, changed), changed, 0)
            }
            Primitive::Optimize => {
                let r = restrict(ctx.automaton, &st.envelope, ctx.p_back, &ctx.reentry)?;
                let sol = r.solve(&st.policy, Some(&st.values), ctx.solver, TickBudget::Unbounded, ctx.cost)?;
                st.policy = sol.policy;
                st.values = sol.estimates;
                (sol.ticks, 0, 0)
            }
        };
        total = total.saturating_add(ticks);
        steps.push(StepReport {
            primitive: prim,
            ticks,
            added,
            removed,
        });
    }
    Ok(StrategyOutcome {
        state: st,
        ticks: total,
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_round_trip() {
        for label in [
            "FP R[10] O",
            "FP P[20] O",
            "FP P[20] R[50] O",
            "FP R[100] P[50] O",
            "FP R[50] O P[50] O",
            "FP XG XB O",
        ] {
            let s: DeliberationStrategy = label.parse().unwrap();
            assert_eq!(s.label(), label);
        }
    }

    #[test]
    fn grammar_rejections() {
        for bad in [
            "",
            "FP  O",
            "FP O ",
            "R[10] O",
            "FP R[10]",
            "FP R[0] O",
            "FP R[x] O",
            "FP R[10 O",
            "FP r[10] O",
            "FP R[-1] O",
            "FP 0",
        ] {
            assert!(bad.parse::<DeliberationStrategy>().is_err(), "{bad:?} parsed");
        }
    }
}
