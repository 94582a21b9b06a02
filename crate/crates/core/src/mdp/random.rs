use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{AutomatonBuilder, StochasticAutomaton};

/// Seeded random automaton with `branching` successors per row and the
/// given number of absorbing goal states (the highest-numbered states).
///
/// Every row puts some mass on a self-loop-free successor list drawn without
/// replacement; probabilities are normalized random weights.
pub fn random_automaton(
    num_states: usize,
    num_actions: usize,
    branching: usize,
    goals: usize,
    seed: u64,
) -> StochasticAutomaton {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = AutomatonBuilder::new(num_states, num_actions);
    let all: Vec<usize> = (0..num_states).collect();
    let first_goal = num_states - goals.min(num_states);
    for s in 0..num_states {
        for a in 0..num_actions {
            if s >= first_goal {
                b.set_row(s, a, vec![(s, 1.0)]);
                continue;
            }
            let k = branching.clamp(1, num_states);
            let mut succ: Vec<usize> = all.choose_multiple(&mut rng, k).copied().collect();
            succ.sort_unstable();
            let weights: Vec<f64> = succ.iter().map(|_| rng.gen_range(0.05..1.0)).collect();
            let total: f64 = weights.iter().sum();
            b.set_row(s, a, succ.into_iter().zip(weights).map(|(y, w)| (y, w / total)).collect());
        }
    }
    for g in first_goal..num_states {
        b.add_goal(g);
    }
    b.build()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_automata_are_valid_and_seeded() {
        let a = random_automaton(30, 3, 4, 2, 7);
        assert!(a.validate().is_empty());
        assert_eq!(a, random_automaton(30, 3, 4, 2, 7));
        assert_ne!(a, random_automaton(30, 3, 4, 2, 8));
        assert_eq!(a.goals(), &[28, 29]);
    }
}
