use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use delibsched::cost::CostModel;
use delibsched::envelope::DeliberationStrategy;
use delibsched::gridworld::{build_automaton_with, GridMap, Task, TaskSampler};
use delibsched::mdp::{q_values, value_iteration, SolverConfig, StochasticAutomaton, AUTOMATON_HEADER};
use delibsched::precursor::{
    gather_profile_statistics, run_precursor, BinningConfig, DeliberationBudget, GatherConfig, PrecursorConfig,
    PrecursorMode, ProfileTable,
};
use delibsched::recurrent::{
    gather_eiv_statistics, run_recurrent, standard_strategy_roster, CouplingConfig, EivBinning, EivTable,
    RecurrentConfig, RecurrentProblem, RunOutcome, Scheduler,
};
use delibsched::stats::Moments;

use crate::spec::{GatherKind, SchedulerSpec, Spec};
use crate::Invalid;

fn require<'a>(v: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    v.as_deref().ok_or_else(|| Invalid(format!("--{what} (or `{what}` in the spec) is required")).into())
}

fn load_map(spec: &Spec) -> Result<GridMap> {
    let path = require(&spec.map, "map")?;
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    GridMap::parse(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn out_dir(spec: &Spec) -> Result<PathBuf> {
    let dir = require(&spec.out, "out")?.to_path_buf();
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn cost(spec: &Spec) -> CostModel {
    CostModel {
        c_pg: spec.c_pg,
        c_fp: spec.c_fp,
        c_alt: spec.c_alt,
        c_add: spec.c_add,
    }
}

fn precursor_config(spec: &Spec) -> PrecursorConfig {
    PrecursorConfig {
        solver: SolverConfig::with_gamma(spec.gamma),
        cost: cost(spec),
        n_grid: spec.n_grid.clone(),
        ..PrecursorConfig::default()
    }
}

fn recurrent_config(spec: &Spec) -> RecurrentConfig {
    RecurrentConfig {
        solver: SolverConfig::with_gamma(spec.gamma),
        cost: cost(spec),
        p_back: spec.p_back,
        coupling: CouplingConfig {
            mode: spec.coupling,
            steps_per_tick: spec.steps_per_tick,
            step_cap: spec.step_cap,
            invocation_cap: spec.invocation_cap,
        },
        ..RecurrentConfig::default()
    }
}

/// The spec's tasks with one run seed each, drawn from `seed`.
fn tasks(spec: &Spec, map: &GridMap, base: &StochasticAutomaton) -> Result<Vec<(Task, u64)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    if let (Some(start), Some(goal)) = (spec.start, spec.goal) {
        return Ok(vec![(Task::new(base, map, start, goal)?, rng.gen())]);
    }
    let sampler = TaskSampler::new(map, spec.distance_fraction)?;
    (0..spec.tasks)
        .map(|_| {
            let (s, g) = sampler.sample(&mut rng);
            Ok((Task::new(base, map, s, g)?, rng.gen()))
        })
        .collect()
}

fn label(task: &Task, map: &GridMap) -> String {
    let start = map.decode(task.start).map(|r| r.to_string()).unwrap_or_default();
    format!("{start}>{},{}", task.goal_location.0, task.goal_location.1)
}

pub fn gather(spec: &Spec) -> Result<String> {
    let map = load_map(spec)?;
    let out = require(&spec.out, "out")?;
    let base = build_automaton_with(&map, spec.p_success, spec.failure)?;
    let sampler = TaskSampler::new(&map, spec.distance_fraction)?;
    let mut summary = String::new();
    match spec.kind {
        GatherKind::Precursor => {
            let config = GatherConfig {
                precursor: precursor_config(spec),
                max_envelope: spec.max_envelope,
            };
            let report = gather_profile_statistics(
                |rng| {
                    let (s, g) = sampler.sample(rng);
                    Task::new(&base, &map, s, g)
                },
                spec.samples,
                spec.seed,
                &config,
            )?;
            let binning = BinningConfig {
                size_bins: spec.size_bins,
                value_bins: spec.value_bins,
                min_count: spec.min_count,
            };
            let table = ProfileTable::build(&report.samples, &binning)?;
            write(out, &table.to_text())?;
            writeln!(
                summary,
                "profile table: {} samples from {} tasks ({} unreachable skipped)",
                report.samples.len(),
                report.tasks,
                report.skipped
            )?;
            let cells = table.populated_cells();
            writeln!(summary, "populated cells: {}", cells.len())?;
            for cell in cells {
                let curve: Vec<String> = table
                    .curve(cell)
                    .iter()
                    .map(|(n, c)| format!("n={n} dv={:.4} var={:.4} count={}", c.mean_dv, c.variance, c.count))
                    .collect();
                writeln!(summary, "cell {:?}: {}", cell, curve.join("; "))?;
            }
        }
        GatherKind::Eiv => {
            let roster = standard_strategy_roster();
            let config = recurrent_config(spec);
            let report = gather_eiv_statistics(
                |rng| {
                    let (s, g) = sampler.sample(rng);
                    RecurrentProblem::from_task(Task::new(&base, &map, s, g)?, &map)
                },
                &roster,
                spec.runs,
                spec.seed,
                &config,
            )?;
            let binning = EivBinning {
                bins: [spec.eiv_bins; 4],
                min_count: spec.eiv_min_count,
            };
            let table = EivTable::build(roster.clone(), &report.samples, &binning)?;
            write(out, &table.to_text())?;
            writeln!(
                summary,
                "eiv table: {} samples from {} runs ({} capped, {} stuck), {} cells",
                report.samples.len(),
                report.runs,
                report.capped,
                report.stuck,
                table.num_cells()
            )?;
            for (i, s) in roster.iter().enumerate() {
                let m: Moments = report.samples.iter().filter(|x| x.strategy == i).map(|x| x.rate()).collect();
                writeln!(
                    summary,
                    "{}: count={} mean={:.6} variance={:.6}",
                    s,
                    m.count(),
                    m.mean(),
                    m.variance()
                )?;
            }
        }
    }
    Ok(summary)
}

pub fn precursor(spec: &Spec) -> Result<String> {
    let table = match &spec.table {
        Some(p) => Some(ProfileTable::parse(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?),
        None if spec.modes.contains(&PrecursorMode::Greedy) => {
            return Err(Invalid("GREEDY needs a profile table (--table)".into()).into())
        }
        None => None,
    };
    let map = load_map(spec)?;
    let dir = out_dir(spec)?;
    let base = build_automaton_with(&map, spec.p_success, spec.failure)?;
    let config = precursor_config(spec);
    let mut rows = String::from("task,start_goal,mode,deadline,final_value,ticks,envelope_size\n");
    let mut means = vec![vec![Moments::default(); spec.modes.len()]; spec.deadlines.len()];
    for (i, (task, _)) in tasks(spec, &map, &base)?.iter().enumerate() {
        for (d, deadline) in spec.deadlines.iter().enumerate() {
            let budget = DeliberationBudget {
                total_ticks: *deadline,
                delay_cost_rate: spec.delay_cost_rate,
            };
            let dl = deadline.map_or("unbounded".to_string(), |t| t.to_string());
            for (m, &mode) in spec.modes.iter().enumerate() {
                let run = run_precursor(&task.automaton, &task.reward, task.start, mode, &budget, table.as_ref(), &config)?;
                write(&dir.join(format!("trace_t{i}_{mode}_{dl}.csv")), &run.trace_csv())?;
                writeln!(
                    rows,
                    "{i},{},{mode},{dl},{:?},{},{}",
                    label(task, &map),
                    run.final_value(),
                    run.ticks,
                    run.envelope_size
                )?;
                means[d][m].push(run.final_value());
            }
        }
    }
    write(&dir.join("summary.csv"), &rows)?;
    let mut summary = String::new();
    for (d, deadline) in spec.deadlines.iter().enumerate() {
        let dl = deadline.map_or("unbounded".to_string(), |t| t.to_string());
        let cols: Vec<String> = spec
            .modes
            .iter()
            .zip(&means[d])
            .map(|(m, v)| format!("{m}={:.6}", v.mean()))
            .collect();
        writeln!(summary, "deadline {dl}: mean final value {}", cols.join(" "))?;
    }
    Ok(summary)
}

pub fn recurrent(spec: &Spec) -> Result<String> {
    let roster_table = match &spec.table {
        Some(p) => Some(EivTable::parse(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?),
        None if spec.schedulers.contains(&SchedulerSpec::Lookup) => {
            return Err(Invalid("LOOKUP needs an EIV table (--table)".into()).into())
        }
        None => None,
    };
    let fixed: Vec<Option<DeliberationStrategy>> = spec
        .schedulers
        .iter()
        .map(|s| match s {
            SchedulerSpec::Fixed(label) => label.parse().map(Some).map_err(|e| Invalid(format!("schedulers: {e}"))),
            _ => Ok(None),
        })
        .collect::<Result<_, _>>()?;
    let map = load_map(spec)?;
    let dir = out_dir(spec)?;
    let base = build_automaton_with(&map, spec.p_success, spec.failure)?;
    let config = recurrent_config(spec);
    let mut runs = String::from("task,start_goal,scheduler,seed,outcome,steps,invocations,policies\n");
    let mut steps: Vec<Vec<f64>> = vec![Vec::new(); spec.schedulers.len()];
    let mut unfinished = vec![(0usize, 0usize); spec.schedulers.len()];
    for (i, (task, seed)) in tasks(spec, &map, &base)?.into_iter().enumerate() {
        let name = label(&task, &map);
        let problem = RecurrentProblem::from_task(task, &map)?;
        for (j, s) in spec.schedulers.iter().enumerate() {
            let scheduler = match s {
                SchedulerSpec::Lookup => Scheduler::Lookup(roster_table.as_ref().expect("checked above")),
                SchedulerSpec::Iter => Scheduler::Iter,
                SchedulerSpec::Whole => Scheduler::Whole,
                SchedulerSpec::Fixed(_) => Scheduler::Fixed(fixed[j].clone().expect("parsed above")),
            };
            let trace = run_recurrent(&problem, &scheduler, &config, seed)?;
            let file = match s {
                SchedulerSpec::Fixed(_) => format!("FIXED{j}"),
                other => other.name(),
            };
            write(&dir.join(format!("t{i}_{file}_steps.csv")), &trace.steps_csv())?;
            write(&dir.join(format!("t{i}_{file}_invocations.csv")), &trace.invocations_csv())?;
            let outcome = match trace.outcome {
                RunOutcome::Goal => {
                    steps[j].push(trace.steps_taken() as f64);
                    "goal"
                }
                RunOutcome::Capped => {
                    unfinished[j].0 += 1;
                    "capped"
                }
                RunOutcome::Stuck => {
                    unfinished[j].1 += 1;
                    "stuck"
                }
            };
            writeln!(
                runs,
                "{i},{name},{},{seed},{outcome},{},{},{}",
                s.name(),
                trace.steps_taken(),
                trace.invocations.len(),
                trace.policies_shipped
            )?;
        }
    }
    write(&dir.join("runs.csv"), &runs)?;
    let mut agg = String::from("scheduler,runs,reached,capped,stuck,mean,median,stddev\n");
    let mut summary = String::new();
    for (j, s) in spec.schedulers.iter().enumerate() {
        let xs = &mut steps[j];
        xs.sort_by(f64::total_cmp);
        let m: Moments = xs.iter().copied().collect();
        let median = match xs.len() {
            0 => f64::NAN,
            n if n % 2 == 1 => xs[n / 2],
            n => (xs[n / 2 - 1] + xs[n / 2]) / 2.0,
        };
        let total = xs.len() + unfinished[j].0 + unfinished[j].1;
        writeln!(
            agg,
            "{},{total},{},{},{},{:?},{:?},{:?}",
            s.name(),
            xs.len(),
            unfinished[j].0,
            unfinished[j].1,
            m.mean(),
            median,
            m.variance().sqrt()
        )?;
        writeln!(
            summary,
            "{}: mean steps {:.2} median {:.1} over {} of {total} runs reaching the goal",
            s.name(),
            m.mean(),
            median,
            xs.len()
        )?;
    }
    write(&dir.join("aggregate.csv"), &agg)?;
    Ok(summary)
}

pub fn oracle(spec: &Spec) -> Result<String> {
    let map = load_map(spec)?;
    let out = require(&spec.out, "out")?;
    let goal = spec.goal.ok_or_else(|| Invalid("oracle needs `goal` in the spec".into()))?;
    if map.num_states() > spec.max_states {
        return Err(Invalid(format!(
            "automaton has {} states, above the cap of {}",
            map.num_states(),
            spec.max_states
        ))
        .into());
    }
    let base = build_automaton_with(&map, spec.p_success, spec.failure)?;
    let (goals, reward) = delibsched::gridworld::goal_reward(&map, goal)?;
    let a = base.with_goals(goals).with_absorbing_goals();
    let solver = SolverConfig::with_gamma(spec.gamma);
    let v = value_iteration(&a, &reward, &solver)?;
    let mut text = String::from("state,value,action\n");
    for s in 0..a.num_states() {
        let mut best = (usize::MAX, f64::NEG_INFINITY);
        for (act, q) in q_values(&a, &reward, &v.values, s, solver.gamma) {
            if q > best.1 {
                best = (act, q);
            }
        }
        writeln!(text, "{s},{:?},{}", v.get(s), best.0)?;
    }
    write(out, &text)?;
    Ok(format!("oracle: {} states written to {}\n", a.num_states(), out.display()))
}

/// Diagnostics for a map, table or automaton file; empty when clean.
pub fn validate(path: &Path) -> Result<(String, Vec<String>)> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let first = text.lines().next().unwrap_or("");
    let mut problems = Vec::new();
    let kind = match first {
        "profile-table v1" => {
            if let Err(e) = ProfileTable::parse(&text) {
                problems.push(e.to_string());
            }
            "profile table"
        }
        "eiv-table v1" => {
            if let Err(e) = EivTable::parse(&text) {
                problems.push(e.to_string());
            }
            "eiv table"
        }
        AUTOMATON_HEADER => {
            match StochasticAutomaton::parse(&text) {
                Ok(a) => problems.extend(a.validate().iter().map(|v| v.to_string())),
                Err(e) => problems.push(e.to_string()),
            }
            "automaton"
        }
        h if h.ends_with(" v1") || h.contains("table") || h.starts_with("automaton") => {
            problems.push(format!("unknown or unsupported header {h:?}"));
            "file"
        }
        _ => {
            if let Err(e) = GridMap::parse(&text) {
                problems.push(e.to_string());
            }
            "map"
        }
    };
    Ok((kind.to_string(), problems))
}
