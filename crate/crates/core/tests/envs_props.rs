//! Reward oracles, golden values and permutation invariance.

use std::f64::consts::PI;

mod common;

use mfbo::envs::{arena_reward, js_divergence, system_reward, EnvironmentSpec};
use mfbo::meanfield::{ActionSet, ContextMeasure, PopulationAssignment};

use common::all_specs;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn naive_arena(pop: &PopulationAssignment, values: &[f64], actions: &ActionSet, sigma: f64) -> f64 {
    let m = pop.len();
    let mut pair = 0.0;
    for i in 0..m {
        for j in i + 1..m {
            let (ci, cj) = (values[pop.context_idx[i]], values[pop.context_idx[j]]);
            let (xi, xj) = (actions.embedding(pop.action_idx[i])[0], actions.embedding(pop.action_idx[j])[0]);
            pair += ci * cj * (xi - xj).cos();
        }
    }
    pair /= (m * (m - 1) / 2) as f64;
    let mut penalty = 0.0;
    for a in 0..actions.len() {
        let p = pop.action_idx.iter().filter(|&&x| x == a).count() as f64 / m as f64;
        penalty += (p + 1.0).ln();
    }
    pair - sigma * penalty
}

#[test]
fn arena_histogram_matches_naive_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let values = [-1.0, 1.0];
    for _ in 0..200 {
        let m = rng.random_range(2..=200);
        let na = rng.random_range(2..=30);
        let step = 2.0 * PI / na as f64;
        let actions = ActionSet::new((0..na).map(|i| vec![step * i as f64]).collect(), None).unwrap();
        let pop = PopulationAssignment {
            context_idx: (0..m).map(|_| rng.random_range(0..2)).collect(),
            action_idx: (0..m).map(|_| rng.random_range(0..na)).collect(),
        };
        let sigma = rng.random_range(0.0..10.0);
        let fast = arena_reward(&pop, &values, &actions, sigma).unwrap();
        let slow = naive_arena(&pop, &values, &actions, sigma);
        assert!((fast - slow).abs() < 1e-9, "m={m}: {fast} vs {slow}");
    }
}

#[test]
fn agent_permutation_changes_no_bit() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for spec in all_specs() {
        let (nc, na) = (spec.num_contexts(), spec.num_actions());
        for _ in 0..1000 {
            let m = rng.random_range(2..=60);
            let pop = PopulationAssignment {
                context_idx: (0..m).map(|_| rng.random_range(0..nc)).collect(),
                action_idx: (0..m).map(|_| rng.random_range(0..na)).collect(),
            };
            let mut order: Vec<usize> = (0..m).collect();
            order.shuffle(&mut rng);
            let permuted = PopulationAssignment {
                context_idx: order.iter().map(|&i| pop.context_idx[i]).collect(),
                action_idx: order.iter().map(|&i| pop.action_idx[i]).collect(),
            };
            let a = system_reward(&spec, &pop).unwrap();
            let b = system_reward(&spec, &permuted).unwrap();
            assert_eq!(a.to_bits(), b.to_bits(), "{:?}", spec.kind);
        }
    }
}

#[test]
fn golden_reward_values() {
    // Swarm, everyone at π/2.
    let actions = ActionSet::new(vec![vec![0.0], vec![PI / 2.0]], None).unwrap();
    let spec = EnvironmentSpec { actions, ..EnvironmentSpec::swarm(50, 2, 10.0, 0.0).unwrap() };
    let pop = PopulationAssignment { context_idx: vec![0; 50], action_idx: vec![1; 50] };
    let expected = 50.0 * (2.0 * PI * PI + 2.0) - 10.0 * 2f64.ln();
    assert!((system_reward(&spec, &pop).unwrap() - expected).abs() < 1e-9);
    assert!((expected - 1080.03).abs() < 5e-3);

    // Arena, one team on one seat.
    let arena = EnvironmentSpec::arena(10, 4, 10.0, 0.0).unwrap();
    let pop = PopulationAssignment { context_idx: vec![1; 10], action_idx: vec![2; 10] };
    assert!((system_reward(&arena, &pop).unwrap() - (1.0 - 10.0 * 2f64.ln())).abs() < 1e-9);

    // Maritime, single port in the agents' own region.
    let actions = ActionSet::new_unchecked_size(vec![vec![0.0]], None).unwrap();
    let single = EnvironmentSpec::maritime(actions, ContextMeasure::single(), vec![1.0], vec![0], 7, 0.0).unwrap();
    let pop = PopulationAssignment { context_idx: vec![0; 7], action_idx: vec![0; 7] };
    assert!((system_reward(&single, &pop).unwrap() - (-0.5)).abs() < 1e-9);

    // Disjoint supports.
    assert!((js_divergence(&[1.0, 0.0], &[0.0, 1.0]) - 2f64.ln()).abs() < 1e-9);
}
