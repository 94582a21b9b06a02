use delibsched::envelope::DeliberationStrategy;
use delibsched::gridworld::*;
use delibsched::mdp::{n_step_distribution_with, policy_evaluate, policy_iteration, Policy, SolverConfig, TickBudget};
use delibsched::recurrent::*;

fn tiny() -> GridMap {
    GridMap::parse(&std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../maps/tiny.map")).unwrap())
        .unwrap()
}

fn problem(map: &GridMap, p: f64, failure: FailureModel, start: RobotState, goal: Location) -> RecurrentProblem {
    let base = build_automaton_with(map, p, failure).unwrap();
    RecurrentProblem::from_task(Task::new(&base, map, start, goal).unwrap(), map).unwrap()
}

fn at(r: usize, c: usize, o: Orientation) -> RobotState {
    RobotState { location: (r, c), orientation: o }
}

#[test]
fn adjacent_goal_is_reached_in_one_policy_step() {
    let map = tiny();
    let p = problem(&map, 1.0, FailureModel::Stay, at(1, 1, Orientation::E), (1, 2));
    let empty = EivTable::empty(standard_strategy_roster());
    let fixed: DeliberationStrategy = "FP O".parse().unwrap();
    let config = RecurrentConfig::default();
    for sch in [Scheduler::Lookup(&empty), Scheduler::Iter, Scheduler::Whole, Scheduler::Fixed(fixed)] {
        let t = run_recurrent(&p, &sch, &config, 3).unwrap();
        assert_eq!(t.outcome, RunOutcome::Goal, "{}", sch.name());
        let driven: Vec<_> = t.steps.iter().filter(|s| !s.reflexive).collect();
        assert_eq!(driven.len(), 1, "{}", sch.name());
        assert_eq!(driven[0].action, FORWARD);
        assert_eq!(t.steps.last().unwrap(), driven[0]);
        let first_ship = t.exchanges[0].step;
        assert_eq!(t.steps_taken(), first_ship + 1, "{}", sch.name());
    }
}

#[test]
fn uniform_fallback_reaches_goal() {
    let map = GridMap::parse(&std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../maps/office300.map")).unwrap()).unwrap();
    let base = build_automaton_with(&map, 0.8, FailureModel::Scatter).unwrap();
    let sampler = TaskSampler::new(&map, 1.0 / 3.0).unwrap();
    let empty = EivTable::empty(standard_strategy_roster());
    let mut config = RecurrentConfig::default();
    config.coupling.steps_per_tick = 1e-8;
    config.coupling.step_cap = 2000;
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(5);
    let mut reached = 0;
    for seed in 0..100 {
        let (s, g) = sampler.sample(&mut rng);
        let p = RecurrentProblem::from_task(Task::new(&base, &map, s, g).unwrap(), &map).unwrap();
        let t = run_recurrent(&p, &Scheduler::Lookup(&empty), &config, seed).unwrap();
        reached += (t.outcome == RunOutcome::Goal) as usize;
    }
    assert!(reached >= 95, "reached {reached}/100");
}

#[test]
fn identical_seeds_give_identical_traces() {
    let map = tiny();
    let p = problem(&map, 0.7, FailureModel::Scatter, at(1, 1, Orientation::S), (3, 3));
    let roster = standard_strategy_roster();
    let config = RecurrentConfig::default();
    let rep = gather_eiv_statistics(|_| Ok(p.clone()), &roster, 20, 4, &config).unwrap();
    let table = EivTable::build(roster, &rep.samples, &EivBinning::default()).unwrap();
    let a = run_recurrent(&p, &Scheduler::Lookup(&table), &config, 11).unwrap();
    let b = run_recurrent(&p, &Scheduler::Lookup(&table), &config, 11).unwrap();
    assert_eq!(a.steps, b.steps);
    assert_eq!(a.invocations, b.invocations);
    assert_eq!(a.exchanges, b.exchanges);
    assert_eq!(a.steps_csv(), b.steps_csv());
    assert_eq!(a.invocations_csv(), b.invocations_csv());
}

#[test]
fn coupling_soundness() {
    let map = tiny();
    let p = problem(&map, 0.7, FailureModel::Scatter, at(1, 1, Orientation::S), (3, 3));
    let roster = standard_strategy_roster();
    let empty = EivTable::empty(roster.clone());
    for mode in [CouplingMode::StrategyPaced, CouplingMode::OnFallout, CouplingMode::FixedTicks(500)] {
        let mut config = RecurrentConfig::default();
        config.coupling.mode = mode;
        config.coupling.steps_per_tick = 1e-3;
        for seed in 0..20 {
            let t = run_recurrent(&p, &Scheduler::Lookup(&empty), &config, seed).unwrap();
            assert_eq!(t.outcome, RunOutcome::Goal, "{mode} seed {seed}");
            // Policy ids only change at exchange steps.
            let mut held = 0;
            let mut ex = t.exchanges.iter().peekable();
            for s in &t.steps {
                while let Some(e) = ex.peek() {
                    if e.step <= s.step {
                        held = e.policy_id;
                        ex.next();
                    } else {
                        break;
                    }
                }
                assert_eq!(s.policy_id, held, "{mode} seed {seed} step {}", s.step);
            }
            for w in t.exchanges.windows(2) {
                assert!(w[0].step <= w[1].step && w[0].tick <= w[1].tick);
                assert!(w[1].policy_id >= w[0].policy_id);
            }
            // Reflexive steps use the reflex action.
            for s in t.steps.iter().filter(|s| s.reflexive) {
                assert_eq!(s.action, config.reflex);
            }
            // Paced modes hand over at strategy ends.
            if mode != CouplingMode::FixedTicks(500) {
                let mut tick = 0;
                for (inv, e) in t.invocations.iter().zip(&t.exchanges) {
                    tick += inv.ticks;
                    assert_eq!(e.tick, tick);
                }
            }
        }
    }
}

#[test]
fn full_space_baselines_ship_as_specified() {
    let map = tiny();
    let p = problem(&map, 0.7, FailureModel::Scatter, at(1, 1, Orientation::S), (3, 3));
    let mut config = RecurrentConfig::default();
    config.coupling.steps_per_tick = 1e-6;
    let iter = run_recurrent(&p, &Scheduler::Iter, &config, 8).unwrap();
    let whole = run_recurrent(&p, &Scheduler::Whole, &config, 8).unwrap();
    let pi = policy_iteration(
        &p.automaton,
        &p.reward,
        &Policy::reflex_only(STAY),
        &config.solver,
        TickBudget::Unbounded,
        1,
    )
    .unwrap();
    assert_eq!(whole.policies_shipped, 1);
    assert_eq!(iter.policies_shipped, pi.rounds);
    let solver = SolverConfig::default();
    let vi = policy_evaluate(&p.automaton, &p.reward, &iter.final_policy, &solver).unwrap();
    let vw = policy_evaluate(&p.automaton, &p.reward, &whole.final_policy, &solver).unwrap();
    assert!(vi.sup_distance(&vw.values) < 1e-6);
    // Matched seeds: identical executor draws until the first policy arrives.
    let first = iter.exchanges[0].step;
    assert_eq!(iter.steps[..first], whole.steps[..first]);
}

#[test]
fn exchange_states_follow_the_n_step_distribution() {
    let map = tiny();
    let p = problem(&map, 0.6, FailureModel::Scatter, at(1, 1, Orientation::E), (3, 3));
    let mut config = RecurrentConfig::default();
    config.reflex = FORWARD;
    config.coupling.mode = CouplingMode::FixedTicks(1);
    config.coupling.steps_per_tick = 3.0;
    config.coupling.step_cap = 3;
    let fixed: DeliberationStrategy = "FP O".parse().unwrap();
    let runs = 10_000;
    let mut counts = vec![0usize; p.automaton.num_states()];
    for seed in 0..runs {
        let t = run_recurrent(&p, &Scheduler::Fixed(fixed.clone()), &config, seed).unwrap();
        counts[t.exchanges[0].observed] += 1;
    }
    let reflex = Policy::reflex_only(FORWARD);
    let d = n_step_distribution_with(&p.automaton, |s| reflex.action(s), p.start, 3, |s| p.automaton.is_goal(s)).unwrap();
    let n = runs as f64;
    for (s, &c) in counts.iter().enumerate() {
        let q = d.get(s);
        let sigma = (n * q * (1.0 - q)).sqrt();
        assert!((c as f64 - n * q).abs() <= 3.0 * sigma + 1e-9, "state {s}: {c} vs {}", n * q);
    }
}
