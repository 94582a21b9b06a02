use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use delibsched::mdp::{policy_iteration, Policy, SolverConfig, TickBudget};
use delibsched::precursor::ProfileTable;
use delibsched::recurrent::EivTable;

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn map(name: &str) -> String {
    root().join("maps").join(name).display().to_string()
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_delibsched")).args(args).output().unwrap()
}

fn spec(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.display().to_string()
}

fn ok(o: &Output) {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn validate_reports_status_by_file_kind() {
    let dir = tempfile::tempdir().unwrap();
    for m in ["tiny.map", "office166.map", "office300.map"] {
        let o = run(&["validate", &map(m)]);
        assert_eq!(o.status.code(), Some(0), "{m}");
    }
    let truncated = spec(dir.path(), "t.table", "eiv-table v1\nmin_count 5\ncuts size\n");
    let o = run(&["validate", &truncated]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!o.stdout.is_empty());

    let bad = spec(dir.path(), "a.txt", "automaton v1\n2 1\ngoals 1\n0,0,0:0.5,1:0.25\n1,0,1:1.0\n");
    let o = run(&["validate", &bad]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stdout).contains("row (state 0, action 0) sums to 0.75"));

    let ragged = spec(dir.path(), "r.map", "3 2\n...\n..\n");
    assert_eq!(run(&["validate", &ragged]).status.code(), Some(1));
    let missing = dir.path().join("nope.map").display().to_string();
    assert_eq!(run(&["validate", &missing]).status.code(), Some(2));
}

#[test]
fn spec_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let s = spec(dir.path(), "s.spec", "colour = red\n");
    let o = run(&["gather", "--config", &s]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown key"));
    let out = dir.path().join("p").display().to_string();
    let o = run(&["precursor", "--map", &map("tiny.map"), "--out", &out]);
    assert_eq!(o.status.code(), Some(1), "GREEDY without a table");
    let o = run(&["recurrent", "--map", &map("tiny.map"), "--out", &out]);
    assert_eq!(o.status.code(), Some(1), "LOOKUP without a table");
}

#[test]
fn gathered_tables_reload_and_repeat() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for (kind, extra) in [("eiv", "runs = 10\n"), ("precursor", "samples = 300\n")] {
        let s = spec(d, "g.spec", &format!("kind = {kind}\nfailure = scatter\n{extra}"));
        let a = d.join(format!("{kind}_a.table"));
        let b = d.join(format!("{kind}_b.table"));
        for out in [&a, &b] {
            ok(&run(&["gather", "--config", &s, "--map", &map("tiny.map"), "--seed", "3", "--out", &out.display().to_string()]));
        }
        let ta = fs::read_to_string(&a).unwrap();
        assert_eq!(ta, fs::read_to_string(&b).unwrap(), "{kind}");
        match kind {
            "eiv" => assert_eq!(EivTable::parse(&ta).unwrap().to_text(), ta),
            _ => assert_eq!(ProfileTable::parse(&ta).unwrap().to_text(), ta),
        }
        assert_eq!(run(&["validate", &a.display().to_string()]).status.code(), Some(0));
    }
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn precursor_and_recurrent_outputs_are_complete_and_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let profile = d.join("profile.table").display().to_string();
    let s = spec(d, "g.spec", "kind = precursor\nfailure = scatter\nsamples = 600\n");
    ok(&run(&["gather", "--config", &s, "--map", &map("tiny.map"), "--out", &profile]));
    let eiv = d.join("eiv.table").display().to_string();
    let s = spec(d, "e.spec", "kind = eiv\nfailure = scatter\nruns = 10\n");
    ok(&run(&["gather", "--config", &s, "--map", &map("tiny.map"), "--out", &eiv]));

    let p = spec(d, "p.spec", "failure = scatter\ntasks = 2\ndeadlines = 100,unbounded\n");
    let r = spec(d, "r.spec", "failure = scatter\ntasks = 25\nsteps_per_tick = 1e-3\n");
    let mut outputs = Vec::new();
    for rep in 0..2 {
        let po = d.join(format!("prec{rep}"));
        ok(&run(&["precursor", "--config", &p, "--map", &map("tiny.map"), "--table", &profile, "--out", &po.display().to_string()]));
        let ro = d.join(format!("rec{rep}"));
        ok(&run(&["recurrent", "--config", &r, "--map", &map("tiny.map"), "--table", &eiv, "--out", &ro.display().to_string()]));
        outputs.push((files(&po), files(&ro)));
    }
    assert_eq!(outputs[0], outputs[1]);

    let (prec, rec) = &outputs[0];
    // 2 tasks x 2 deadlines x 3 modes, plus the summary.
    assert_eq!(prec.len(), 13);
    for (name, body) in prec.iter().filter(|(n, _)| n.starts_with("trace_")) {
        let text = String::from_utf8_lossy(body);
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("tick,value,mode,round"), "{name}");
        assert!(lines.next().unwrap().starts_with("0,"), "{name}");
    }
    let steps = rec.iter().filter(|(n, _)| n.ends_with("_steps.csv")).count();
    assert_eq!(steps, 75);
    let agg = rec.iter().find(|(n, _)| n == "aggregate.csv").unwrap();
    let agg = String::from_utf8_lossy(&agg.1);
    assert_eq!(agg.lines().count(), 4);
    for (line, name) in agg.lines().skip(1).zip(["LOOKUP", "ITER", "WHOLE"]) {
        assert!(line.starts_with(&format!("{name},25,")), "{line}");
    }
}

#[test]
fn oracle_matches_policy_iteration() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("oracle.csv");
    let s = spec(dir.path(), "o.spec", "goal = 3,3\nfailure = scatter\n");
    ok(&run(&["oracle", "--config", &s, "--map", &map("tiny.map"), "--out", &out.display().to_string()]));
    let text = fs::read_to_string(&out).unwrap();
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 32);

    let m = delibsched::gridworld::GridMap::parse(&fs::read_to_string(map("tiny.map")).unwrap()).unwrap();
    let base = delibsched::gridworld::build_automaton_with(&m, 0.8, delibsched::gridworld::FailureModel::Scatter).unwrap();
    let (goals, reward) = delibsched::gridworld::goal_reward(&m, (3, 3)).unwrap();
    let a = base.with_goals(goals.clone()).with_absorbing_goals();
    let solver = SolverConfig::default();
    let pi = policy_iteration(&a, &reward, &Policy::reflex_only(0), &solver, TickBudget::Unbounded, 1).unwrap();
    for (s, row) in rows.iter().enumerate() {
        let v: f64 = row[1].parse().unwrap();
        assert!((-20.0..=0.0).contains(&v));
        if goals.contains(&s) {
            assert_eq!(v, 0.0);
        }
        assert!((v - pi.values.get(s)).abs() < 1e-6, "state {s}");
    }

    let cap = spec(dir.path(), "c.spec", "goal = 3,3\nmax_states = 10\n");
    let o = run(&["oracle", "--config", &cap, "--map", &map("tiny.map"), "--out", &out.display().to_string()]);
    assert_eq!(o.status.code(), Some(1));
}
