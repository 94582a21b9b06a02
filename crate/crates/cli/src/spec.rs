//! Flat `key = value` experiment specs.

use std::collections::BTreeSet;
use std::path::PathBuf;

use delibsched::gridworld::{FailureModel, Location, RobotState};
use delibsched::precursor::PrecursorMode;
use delibsched::recurrent::CouplingMode;

use crate::Invalid;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GatherKind {
    Precursor,
    Eiv,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SchedulerSpec {
    Lookup,
    Iter,
    Whole,
    Fixed(String),
}

impl SchedulerSpec {
    pub fn name(&self) -> String {
        match self {
            SchedulerSpec::Lookup => "LOOKUP".into(),
            SchedulerSpec::Iter => "ITER".into(),
            SchedulerSpec::Whole => "WHOLE".into(),
            SchedulerSpec::Fixed(label) => format!("FIXED:{label}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spec {
    pub map: Option<PathBuf>,
    pub seed: u64,
    pub gamma: f64,
    pub out: Option<PathBuf>,
    pub table: Option<PathBuf>,
    pub kind: GatherKind,
    pub p_success: f64,
    pub failure: FailureModel,
    pub distance_fraction: f64,
    pub samples: usize,
    pub runs: usize,
    pub max_envelope: usize,
    pub n_grid: Vec<usize>,
    pub size_bins: usize,
    pub value_bins: usize,
    pub min_count: u64,
    pub eiv_bins: usize,
    pub eiv_min_count: u64,
    pub tasks: usize,
    pub start: Option<RobotState>,
    pub goal: Option<Location>,
    pub modes: Vec<PrecursorMode>,
    /// `None` is an unbounded budget.
    pub deadlines: Vec<Option<u64>>,
    pub delay_cost_rate: Option<f64>,
    pub schedulers: Vec<SchedulerSpec>,
    pub coupling: CouplingMode,
    pub steps_per_tick: f64,
    pub step_cap: usize,
    pub invocation_cap: usize,
    pub p_back: f64,
    pub c_pg: u64,
    pub c_fp: u64,
    pub c_alt: u64,
    pub c_add: u64,
    pub max_states: usize,
}

impl Default for Spec {
    fn default() -> Self {
        Self {
            map: None,
            seed: 0,
            gamma: 0.95,
            out: None,
            table: None,
            kind: GatherKind::Precursor,
            p_success: 0.8,
            failure: FailureModel::Stay,
            distance_fraction: 1.0 / 3.0,
            samples: 1000,
            runs: 50,
            max_envelope: 300,
            n_grid: vec![1, 2, 5, 10, 20, 50],
            size_bins: 4,
            value_bins: 4,
            min_count: 5,
            eiv_bins: 3,
            eiv_min_count: 5,
            tasks: 1,
            start: None,
            goal: None,
            modes: PrecursorMode::ALL.to_vec(),
            deadlines: vec![None],
            delay_cost_rate: None,
            schedulers: vec![SchedulerSpec::Lookup, SchedulerSpec::Iter, SchedulerSpec::Whole],
            coupling: CouplingMode::StrategyPaced,
            steps_per_tick: 1e-4,
            step_cap: 100_000,
            invocation_cap: 100_000,
            p_back: 0.05,
            c_pg: 1,
            c_fp: 1,
            c_alt: 10,
            c_add: 1,
            max_states: 20_000,
        }
    }
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, Invalid> {
    v.parse().map_err(|_| Invalid(format!("{key}: cannot parse {v:?}")))
}

fn list<T>(key: &str, v: &str, f: impl Fn(&str) -> Result<T, Invalid>) -> Result<Vec<T>, Invalid> {
    let items: Vec<T> = v.split(',').map(|s| f(s.trim())).collect::<Result<_, _>>()?;
    if items.is_empty() {
        return Err(Invalid(format!("{key}: empty list")));
    }
    Ok(items)
}

fn location(key: &str, v: &str) -> Result<Location, Invalid> {
    let (r, c) = v
        .split_once(',')
        .ok_or_else(|| Invalid(format!("{key}: expected <row>,<col>, got {v:?}")))?;
    Ok((num(key, r.trim())?, num(key, c.trim())?))
}

impl Spec {
    pub fn parse(text: &str) -> Result<Self, Invalid> {
        let mut spec = Spec::default();
        let mut seen = BTreeSet::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Invalid(format!("line {}: expected key = value", i + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(Invalid(format!("line {}: duplicate key {key:?}", i + 1)));
            }
            spec.set(key, value).map_err(|e| Invalid(format!("line {}: {}", i + 1, e.0)))?;
        }
        Ok(spec)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<(), Invalid> {
        match key {
            "map" => self.map = Some(v.into()),
            "seed" => self.seed = num(key, v)?,
            "gamma" => self.gamma = num(key, v)?,
            "out" => self.out = Some(v.into()),
            "table" => self.table = Some(v.into()),
            "kind" => {
                self.kind = match v {
                    "precursor" => GatherKind::Precursor,
                    "eiv" => GatherKind::Eiv,
                    _ => return Err(Invalid(format!("kind: expected precursor or eiv, got {v:?}"))),
                }
            }
            "p_success" => self.p_success = num(key, v)?,
            "failure" => self.failure = v.parse().map_err(|e| Invalid(format!("failure: {e}")))?,
            "distance_fraction" => self.distance_fraction = num(key, v)?,
            "samples" => self.samples = num(key, v)?,
            "runs" => self.runs = num(key, v)?,
            "max_envelope" => self.max_envelope = num(key, v)?,
            "n_grid" => self.n_grid = list(key, v, |s| num(key, s))?,
            "size_bins" => self.size_bins = num(key, v)?,
            "value_bins" => self.value_bins = num(key, v)?,
            "min_count" => self.min_count = num(key, v)?,
            "eiv_bins" => self.eiv_bins = num(key, v)?,
            "eiv_min_count" => self.eiv_min_count = num(key, v)?,
            "tasks" => self.tasks = num(key, v)?,
            "start" => self.start = Some(v.parse().map_err(|e| Invalid(format!("start: {e}")))?),
            "goal" => self.goal = Some(location(key, v)?),
            "modes" => {
                self.modes = list(key, v, |s| s.parse().map_err(|e| Invalid(format!("modes: {e}"))))?
            }
            "deadlines" => {
                self.deadlines = list(key, v, |s| match s {
                    "unbounded" => Ok(None),
                    _ => num(key, s).map(Some),
                })?
            }
            "delay_cost_rate" => self.delay_cost_rate = Some(num(key, v)?),
            "schedulers" => {
                self.schedulers = list(key, v, |s| match s {
                    "LOOKUP" => Ok(SchedulerSpec::Lookup),
                    "ITER" => Ok(SchedulerSpec::Iter),
                    "WHOLE" => Ok(SchedulerSpec::Whole),
                    _ => match s.strip_prefix("FIXED:") {
                        Some(label) => Ok(SchedulerSpec::Fixed(label.to_string())),
                        None => Err(Invalid(format!("schedulers: unknown scheduler {s:?}"))),
                    },
                })?
            }
            "coupling" => self.coupling = v.parse().map_err(|e| Invalid(format!("coupling: {e}")))?,
            "steps_per_tick" => self.steps_per_tick = num(key, v)?,
            "step_cap" => self.step_cap = num(key, v)?,
            "invocation_cap" => self.invocation_cap = num(key, v)?,
            "p_back" => self.p_back = num(key, v)?,
            "c_pg" => self.c_pg = num(key, v)?,
            "c_fp" => self.c_fp = num(key, v)?,
            "c_alt" => self.c_alt = num(key, v)?,
            "c_add" => self.c_add = num(key, v)?,
            "max_states" => self.max_states = num(key, v)?,
            _ => return Err(Invalid(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), Invalid> {
        if self.start.is_some() && self.goal.is_none() {
            return Err(Invalid("start needs a goal".into()));
        }
        if !(self.p_success > 0.0 && self.p_success <= 1.0) {
            return Err(Invalid(format!("p_success must lie in (0, 1], got {}", self.p_success)));
        }
        if !(self.distance_fraction > 0.0) {
            return Err(Invalid("distance_fraction must be positive".into()));
        }
        if self.tasks == 0 {
            return Err(Invalid("tasks must be at least 1".into()));
        }
        if let Some(r) = self.delay_cost_rate {
            if !(r >= 0.0 && r.is_finite()) {
                return Err(Invalid("delay_cost_rate must be finite and non-negative".into()));
            }
        }
        if let Some(map) = &self.map {
            if !map.exists() {
                return Err(Invalid(format!("map file {} does not exist", map.display())));
            }
        }
        if let Some(table) = &self.table {
            if !table.exists() {
                return Err(Invalid(format!("table file {} does not exist", table.display())));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_keys_and_comments() {
        let s = Spec::parse("# demo\nseed = 7\nmodes=GREEDY,FLEXIBLE-FULL\ndeadlines = 100, unbounded\nschedulers = LOOKUP,FIXED:FP R[50] O\ncoupling = fixed-ticks:40\n")
            .unwrap();
        assert_eq!(s.seed, 7);
        assert_eq!(s.modes, vec![PrecursorMode::Greedy, PrecursorMode::FlexibleFull]);
        assert_eq!(s.deadlines, vec![Some(100), None]);
        assert_eq!(s.schedulers[1], SchedulerSpec::Fixed("FP R[50] O".into()));
        assert_eq!(s.coupling, CouplingMode::FixedTicks(40));
    }

    #[test]
    fn rejects_unknown_and_duplicate_keys() {
        assert!(Spec::parse("colour = red\n").unwrap_err().0.contains("unknown key"));
        assert!(Spec::parse("seed = 1\nseed = 2\n").unwrap_err().0.contains("duplicate"));
        assert!(Spec::parse("seed\n").is_err());
        assert!(Spec::parse("seed = x\n").is_err());
    }

    #[test]
    fn start_needs_goal() {
        let s = Spec::parse("start = 1,1,N\n").unwrap();
        assert!(s.validate().is_err());
    }
}
