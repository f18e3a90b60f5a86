//! Reference optimisers over the joint action vector of all `M` agents:
//! random search, simulated annealing and a genetic algorithm.
//!
//! Contexts are drawn once at the start of a run and held fixed; the
//! optimisers then control every agent's action directly.

use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::envs::{evaluate_assignment, EnvError, EnvironmentSpec};
use crate::meanfield::{sample_actions, sample_contexts, softmax_rows, Logits, PopulationAssignment};
use crate::runner::record::{RunOutput, Tracker};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BaselineError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("invalid baseline configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, BaselineError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SaConfig {
    pub init_temp: f64,
    pub cooling: f64,
    pub moves_per_iter: usize,
}

impl Default for SaConfig {
    fn default() -> Self {
        Self { init_temp: 1.0, cooling: 0.995, moves_per_iter: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaConfig {
    pub pop_size: usize,
    pub tournament_k: usize,
    pub crossover_rate: f64,
    /// Per-gene mutation probability; `None` means `1 / M`.
    pub mutation_rate: Option<f64>,
    pub elitism: usize,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self { pop_size: 20, tournament_k: 3, crossover_rate: 0.9, mutation_rate: None, elitism: 1 }
    }
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn random_actions<R: Rng + ?Sized>(m: usize, num_actions: usize, rng: &mut R) -> Vec<usize> {
    (0..m).map(|_| rng.random_range(0..num_actions)).collect()
}

/// One random-search proposal: a fresh uniform `[0, 1]^{|A|}` vector per
/// context is pushed through a softmax and every agent samples from its
/// context's row. Returns `(assignment, system_reward, observed_y)`.
pub fn random_search_step<R: Rng + ?Sized>(
    spec: &EnvironmentSpec,
    contexts: &[usize],
    rng: &mut R,
) -> Result<(PopulationAssignment, f64, f64)> {
    let (nc, na) = (spec.num_contexts(), spec.num_actions());
    let rows: Vec<Vec<f64>> = (0..nc).map(|_| (0..na).map(|_| rng.random::<f64>()).collect()).collect();
    let xi = softmax_rows(&Logits::from_rows(&rows));
    let pop = PopulationAssignment { context_idx: contexts.to_vec(), action_idx: sample_actions(&xi, contexts, rng) };
    let (system, observed) = evaluate_assignment(spec, &pop, rng)?;
    Ok((pop, system, observed))
}

pub fn random_search_run<R: Rng + ?Sized>(spec: &EnvironmentSpec, budget: usize, rng: &mut R) -> Result<RunOutput> {
    check_budget(budget, 1)?;
    let contexts = sample_contexts(&spec.contexts, spec.population_m, rng);
    let mut tracker = Tracker::with_capacity(budget);
    for _ in 0..budget {
        let t0 = Instant::now();
        let (pop, system, observed) = random_search_step(spec, &contexts, rng)?;
        tracker.push(system, observed, ms_since(t0), &pop, None);
    }
    Ok(tracker.finish())
}

fn check_budget(budget: usize, min: usize) -> Result<()> {
    if budget < min {
        return Err(BaselineError::Config(format!("budget {budget} is below the minimum {min}")));
    }
    Ok(())
}

/// Simulated annealing on the joint action vector with Metropolis
/// acceptance `exp(Δ / temp)` and geometric cooling after every evaluation.
pub fn simulated_annealing_run<R: Rng + ?Sized>(
    spec: &EnvironmentSpec,
    cfg: &SaConfig,
    budget: usize,
    rng: &mut R,
) -> Result<RunOutput> {
    check_budget(budget, 1)?;
    if !(cfg.init_temp > 0.0) || !(cfg.cooling > 0.0 && cfg.cooling < 1.0) || cfg.moves_per_iter < 1 {
        return Err(BaselineError::Config(format!("{cfg:?}")));
    }
    let (m, na) = (spec.population_m, spec.num_actions());
    let contexts = sample_contexts(&spec.contexts, m, rng);
    let mut tracker = Tracker::with_capacity(budget);

    let t0 = Instant::now();
    let mut current = PopulationAssignment { context_idx: contexts, action_idx: random_actions(m, na, rng) };
    let (system, mut current_y) = evaluate_assignment(spec, &current, rng)?;
    tracker.push(system, current_y, ms_since(t0), &current, None);

    let mut temp = cfg.init_temp;
    while tracker.evaluations() < budget {
        let t0 = Instant::now();
        let mut candidate = current.clone();
        for _ in 0..cfg.moves_per_iter {
            let agent = rng.random_range(0..m);
            candidate.action_idx[agent] = rng.random_range(0..na);
        }
        let (system, y) = evaluate_assignment(spec, &candidate, rng)?;
        let delta = y - current_y;
        let accept = delta >= 0.0 || rng.random::<f64>() < (delta / temp).exp();
        temp *= cfg.cooling;
        tracker.push(system, y, ms_since(t0), &candidate, None);
        if accept {
            current = candidate;
            current_y = y;
        }
    }
    Ok(tracker.finish())
}

struct Individual {
    genes: Vec<usize>,
    fitness: f64,
}

fn tournament<'a, R: Rng + ?Sized>(pop: &'a [Individual], k: usize, rng: &mut R) -> &'a Individual {
    let mut best = &pop[rng.random_range(0..pop.len())];
    for _ in 1..k {
        let other = &pop[rng.random_range(0..pop.len())];
        if other.fitness > best.fitness {
            best = other;
        }
    }
    best
}

fn sort_desc(pop: &mut [Individual]) {
    pop.sort_by(|a, b| b.fitness.total_cmp(&a.fitness));
}

/// Generational GA: tournament selection, uniform crossover, per-gene
/// resampling mutation. Each generation breeds `pop_size` children; the
/// next generation keeps the `elitism` best parents plus the best
/// `pop_size − elitism` children.
pub fn genetic_algorithm_run<R: Rng + ?Sized>(
    spec: &EnvironmentSpec,
    cfg: &GaConfig,
    budget: usize,
    rng: &mut R,
) -> Result<RunOutput> {
    if cfg.pop_size < 2 || cfg.tournament_k < 1 || cfg.tournament_k > cfg.pop_size || cfg.elitism > cfg.pop_size {
        return Err(BaselineError::Config(format!("{cfg:?}")));
    }
    check_budget(budget, cfg.pop_size)?;
    let (m, na) = (spec.population_m, spec.num_actions());
    let mutation_rate = cfg.mutation_rate.unwrap_or(1.0 / m as f64);
    let contexts = sample_contexts(&spec.contexts, m, rng);
    let mut tracker = Tracker::with_capacity(budget);
    let mut scratch = PopulationAssignment { context_idx: contexts, action_idx: Vec::new() };

    let mut evaluate = |genes: Vec<usize>, t0: Instant, tracker: &mut Tracker, rng: &mut R| -> Result<Individual> {
        scratch.action_idx = genes;
        let (system, y) = evaluate_assignment(spec, &scratch, rng)?;
        tracker.push(system, y, ms_since(t0), &scratch, None);
        Ok(Individual { genes: std::mem::take(&mut scratch.action_idx), fitness: y })
    };

    let mut population = Vec::with_capacity(cfg.pop_size);
    for _ in 0..cfg.pop_size {
        let t0 = Instant::now();
        let genes = random_actions(m, na, rng);
        population.push(evaluate(genes, t0, &mut tracker, rng)?);
    }

    while tracker.evaluations() < budget {
        let mut children = Vec::with_capacity(cfg.pop_size);
        while children.len() < cfg.pop_size && tracker.evaluations() < budget {
            let t0 = Instant::now();
            let p1 = tournament(&population, cfg.tournament_k, rng);
            let p2 = tournament(&population, cfg.tournament_k, rng);
            let mut genes = if rng.random::<f64>() < cfg.crossover_rate {
                p1.genes.iter().zip(&p2.genes).map(|(&a, &b)| if rng.random::<bool>() { a } else { b }).collect()
            } else {
                p1.genes.clone()
            };
            if mutation_rate > 0.0 {
                for g in genes.iter_mut() {
                    if rng.random::<f64>() < mutation_rate {
                        *g = rng.random_range(0..na);
                    }
                }
            }
            children.push(evaluate(genes, t0, &mut tracker, rng)?);
        }
        sort_desc(&mut population);
        sort_desc(&mut children);
        population.truncate(cfg.elitism);
        let room = cfg.pop_size - cfg.elitism;
        population.extend(children.into_iter().take(room));
        // A short final generation can leave fewer children than slots.
        debug_assert!(!population.is_empty());
    }
    Ok(tracker.finish())
}
