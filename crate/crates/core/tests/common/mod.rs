#![allow(dead_code)]

use std::path::Path;

use delibsched::gridworld::{build_automaton_with, Cell, FailureModel, GridMap, Orientation, RobotState, Task};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn load_map(name: &str) -> GridMap {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../maps").join(name);
    GridMap::parse(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Random walled map with between 2 and `max_locations` locations.
pub fn random_map(seed: u64, max_locations: usize) -> GridMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let w = rng.gen_range(4..=9);
        let h = rng.gen_range(4..=9);
        let mut cells = vec![Cell::Wall; w * h];
        for r in 1..h - 1 {
            for c in 1..w - 1 {
                let u: f64 = rng.gen();
                cells[r * w + c] = if u < 0.05 {
                    Cell::Sink
                } else if u < 0.8 {
                    Cell::Free
                } else {
                    Cell::Wall
                };
            }
        }
        let free = cells.iter().filter(|&&c| c == Cell::Free).count();
        let locations = cells.iter().filter(|&&c| c != Cell::Wall).count();
        if free >= 2 && locations <= max_locations {
            return GridMap::from_cells(w, h, cells).unwrap();
        }
    }
}

/// A task on `map` with a random start and a different random goal.
pub fn random_task(map: &GridMap, seed: u64, p: f64, failure: FailureModel) -> Task {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let free: Vec<_> = map.free_locations().collect();
    let s = rng.gen_range(0..free.len());
    let mut g = rng.gen_range(0..free.len() - 1);
    if g >= s {
        g += 1;
    }
    let start = RobotState {
        location: free[s],
        orientation: Orientation::from_index(rng.gen_range(0..4)),
    };
    let base = build_automaton_with(map, p, failure).unwrap();
    Task::new(&base, map, start, free[g]).unwrap()
}

/// Print one acceptance line and fail the test when `pass` is false.
pub fn report(id: u32, name: &str, pass: bool, detail: &str) {
    println!("ACCEPTANCE {id} {} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {id} ({name}) failed: {detail}");
}
