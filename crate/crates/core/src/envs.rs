//! Benchmark payoffs behind one black-box interface: submit `ξ`, the
//! population samples its actions, a noisy payoff comes back.
//!
//! Every reward rule reduces the population to per-cell counts before doing
//! any floating-point work, so rewards are bit-identical under any
//! reordering of the agents.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::meanfield::{
    sample_population, ActionSet, ConditionalDistribution, ContextMeasure, MeanFieldError, PopulationAssignment,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("arena reward needs at least 2 agents, got {0}")]
    TooFewAgents(usize),
    #[error("KL divergence is infinite: p[{index}] > 0 where q[{index}] = 0")]
    InfiniteDivergence { index: usize },
    #[error("port {port} is occupied but has zero capacity")]
    ZeroCapacity { port: usize },
    #[error("invalid environment: {0}")]
    Invalid(String),
    #[error(transparent)]
    MeanField(#[from] MeanFieldError),
}

pub type Result<T> = std::result::Result<T, EnvError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    Swarm,
    Arena,
    DemandMatching,
    Maritime,
}

/// A fully specified benchmark instance.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentSpec {
    pub kind: EnvKind,
    pub actions: ActionSet,
    pub contexts: ContextMeasure,
    pub population_m: usize,
    pub noise_std: f64,
    /// Congestion factor for swarm and arena.
    pub congestion_sigma: f64,
    /// Target distribution over actions (demand matching).
    pub demand: Vec<f64>,
    /// Normalised port capacities (maritime).
    pub port_capacity: Vec<f64>,
    /// Region (context index) of every port (maritime).
    pub port_region: Vec<usize>,
    /// Score `ξ` at the mean-field limit instead of the sampled population.
    pub deterministic_mode: bool,
}

impl EnvironmentSpec {
    /// Swarm motion: `num_actions` angles evenly spaced over `[0, 2π]`, one context.
    pub fn swarm(population_m: usize, num_actions: usize, sigma: f64, noise_std: f64) -> Result<Self> {
        let spec = Self::base(
            EnvKind::Swarm,
            ActionSet::linspace(0.0, 2.0 * PI, num_actions)?,
            ContextMeasure::single(),
            population_m,
            noise_std,
        );
        Self { congestion_sigma: sigma, ..spec }.validated()
    }

    /// Arena: `num_actions` angles around the circle, two equally likely
    /// teams with context values -1 and +1.
    pub fn arena(population_m: usize, num_actions: usize, sigma: f64, noise_std: f64) -> Result<Self> {
        let step = 2.0 * PI / num_actions as f64;
        let actions = ActionSet::new((0..num_actions).map(|i| vec![step * i as f64]).collect(), None)?;
        let contexts = ContextMeasure::uniform(vec![vec![-1.0], vec![1.0]])?;
        let spec = Self::base(EnvKind::Arena, actions, contexts, population_m, noise_std);
        Self { congestion_sigma: sigma, ..spec }.validated()
    }

    pub fn demand_matching(
        actions: ActionSet,
        demand: Vec<f64>,
        population_m: usize,
        noise_std: f64,
        deterministic_mode: bool,
    ) -> Result<Self> {
        let spec = Self::base(EnvKind::DemandMatching, actions, ContextMeasure::single(), population_m, noise_std);
        Self { demand, deterministic_mode, ..spec }.validated()
    }

    pub fn maritime(
        actions: ActionSet,
        contexts: ContextMeasure,
        port_capacity: Vec<f64>,
        port_region: Vec<usize>,
        population_m: usize,
        noise_std: f64,
    ) -> Result<Self> {
        let spec = Self::base(EnvKind::Maritime, actions, contexts, population_m, noise_std);
        Self { port_capacity, port_region, ..spec }.validated()
    }

    fn base(kind: EnvKind, actions: ActionSet, contexts: ContextMeasure, population_m: usize, noise_std: f64) -> Self {
        Self {
            kind,
            actions,
            contexts,
            population_m,
            noise_std,
            congestion_sigma: 0.0,
            demand: Vec::new(),
            port_capacity: Vec::new(),
            port_region: Vec::new(),
            deterministic_mode: false,
        }
    }

    pub fn with_deterministic_mode(mut self, on: bool) -> Self {
        self.deterministic_mode = on;
        self
    }

    pub fn validated(self) -> Result<Self> {
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |m: String| Err(EnvError::Invalid(m));
        if self.population_m < 1 {
            return invalid("population must be >= 1".into());
        }
        if !(self.noise_std >= 0.0) {
            return invalid(format!("noise_std must be >= 0, got {}", self.noise_std));
        }
        let na = self.actions.len();
        match self.kind {
            EnvKind::Swarm | EnvKind::Arena => {
                if self.actions.dim() != 1 {
                    return invalid("swarm/arena actions must be scalar angles".into());
                }
                if self.kind == EnvKind::Arena {
                    if self.population_m < 2 {
                        return Err(EnvError::TooFewAgents(self.population_m));
                    }
                    let ok = self.contexts.dim() == 1
                        && self.contexts.embeddings().iter().all(|c| c[0] == 1.0 || c[0] == -1.0);
                    if !ok {
                        return invalid("arena contexts must be the scalars -1 and +1".into());
                    }
                }
            }
            EnvKind::DemandMatching => {
                if self.demand.len() != na {
                    return invalid(format!("demand has {} entries for {na} actions", self.demand.len()));
                }
                let sum: f64 = self.demand.iter().sum();
                if self.demand.iter().any(|&d| !(d >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
                    return invalid(format!("demand must be a probability vector (sum = {sum})"));
                }
            }
            EnvKind::Maritime => {
                if self.port_capacity.len() != na || self.port_region.len() != na {
                    return invalid("port capacity and region need one entry per port".into());
                }
                let sum: f64 = self.port_capacity.iter().sum();
                if self.port_capacity.iter().any(|&v| !(v > 0.0)) || (sum - 1.0).abs() > 1e-9 {
                    return invalid(format!("port capacities must be positive and sum to 1 (sum = {sum})"));
                }
                if let Some(r) = self.port_region.iter().find(|&&r| r >= self.contexts.len()) {
                    return invalid(format!("port region {r} is not a context index"));
                }
            }
        }
        Ok(())
    }

    pub fn num_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn num_contexts(&self) -> usize {
        self.contexts.len()
    }
}

/// Per-agent swarm payoff `2π²(sin x − cos² x) + 2 sin x`.
pub fn swarm_agent_term(x: f64) -> f64 {
    2.0 * PI * PI * (x.sin() - x.cos().powi(2)) + 2.0 * x.sin()
}

/// `σ Σ_x ln(P_x + 1)` over the global action frequencies.
fn congestion_penalty(freqs: impl Iterator<Item = f64>, sigma: f64) -> f64 {
    sigma * freqs.map(|p| (p + 1.0).ln()).sum::<f64>()
}

fn global_freqs(pop: &PopulationAssignment, num_actions: usize) -> Vec<f64> {
    let m = pop.len() as f64;
    pop.action_counts(num_actions).into_iter().map(|n| n as f64 / m).collect()
}

pub fn swarm_reward(pop: &PopulationAssignment, actions: &ActionSet, sigma: f64) -> f64 {
    let counts = pop.action_counts(actions.len());
    let m = pop.len() as f64;
    let reward: f64 =
        counts.iter().enumerate().map(|(a, &n)| n as f64 * swarm_agent_term(actions.embedding(a)[0])).sum();
    reward - congestion_penalty(counts.iter().map(|&n| n as f64 / m), sigma)
}

/// Mean pairwise alignment `Σ_{i<j} c_i c_j cos(x_i − x_j) / C(M, 2)`
/// from fractional or integer cell counts.
fn arena_pair_term(cell_counts: &[f64], context_values: &[f64], actions: &ActionSet, m: f64) -> f64 {
    let na = actions.len();
    let (mut re, mut im, mut diag) = (0.0, 0.0, 0.0);
    for (cell, &n) in cell_counts.iter().enumerate() {
        if n == 0.0 {
            continue;
        }
        let c = context_values[cell / na];
        let x = actions.embedding(cell % na)[0];
        re += n * c * x.cos();
        im += n * c * x.sin();
        diag += n * c * c;
    }
    // |Σ n c e^{ix}|² counts every ordered pair once and every agent with
    // itself once; strip the diagonal and halve for unordered pairs.
    let unordered = (re * re + im * im - diag) / 2.0;
    unordered / (m * (m - 1.0) / 2.0)
}

pub fn arena_reward(
    pop: &PopulationAssignment,
    context_values: &[f64],
    actions: &ActionSet,
    sigma: f64,
) -> Result<f64> {
    let m = pop.len();
    if m < 2 {
        return Err(EnvError::TooFewAgents(m));
    }
    let counts: Vec<f64> = pop.cell_counts(context_values.len(), actions.len()).into_iter().map(|n| n as f64).collect();
    let pair = arena_pair_term(&counts, context_values, actions, m as f64);
    Ok(pair - congestion_penalty(global_freqs(pop, actions.len()).into_iter(), sigma))
}

/// `Σ p_i ln(p_i / q_i)`, natural log, with `0 ln 0 = 0`.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    assert_eq!(p.len(), q.len(), "KL arguments must have equal length");
    let mut total = 0.0;
    for (index, (&pi, &qi)) in p.iter().zip(q).enumerate() {
        if pi == 0.0 {
            continue;
        }
        if qi == 0.0 {
            return Err(EnvError::InfiniteDivergence { index });
        }
        total += pi * (pi / qi).ln();
    }
    Ok(total)
}

/// Jensen-Shannon divergence against the mixture `(p + q) / 2`.
pub fn js_divergence(p: &[f64], q: &[f64]) -> f64 {
    let h: Vec<f64> = p.iter().zip(q).map(|(a, b)| 0.5 * (a + b)).collect();
    let kp = kl_divergence(p, &h).expect("mixture covers p");
    let kq = kl_divergence(q, &h).expect("mixture covers q");
    // Rounding can leave a tiny negative for identical inputs.
    (0.5 * kp + 0.5 * kq).max(0.0)
}

pub fn demand_matching_reward(pop: &PopulationAssignment, demand: &[f64]) -> f64 {
    0.0 - js_divergence(&global_freqs(pop, demand.len()), demand)
}

fn maritime_from_cells(cells: &[f64], spec: &EnvironmentSpec, m: f64) -> Result<f64> {
    let na = spec.num_actions();
    let mut occupancy = vec![0.0; na];
    for (cell, &n) in cells.iter().enumerate() {
        occupancy[cell % na] += n;
    }
    let mut total = 0.0;
    for (cell, &n) in cells.iter().enumerate() {
        if n == 0.0 {
            continue;
        }
        let (c, x) = (cell / na, cell % na);
        let v = spec.port_capacity[x];
        if v == 0.0 {
            return Err(EnvError::ZeroCapacity { port: x });
        }
        let bonus = if spec.port_region[x] == c { 1.0 } else { 0.0 };
        total += n * (-0.5 - (occupancy[x] / m) / v + bonus);
    }
    Ok(total / m)
}

pub fn maritime_reward(pop: &PopulationAssignment, spec: &EnvironmentSpec) -> Result<f64> {
    let cells: Vec<f64> =
        pop.cell_counts(spec.num_contexts(), spec.num_actions()).into_iter().map(|n| n as f64).collect();
    maritime_from_cells(&cells, spec, pop.len() as f64)
}

/// Noiseless system reward of a realised population.
pub fn system_reward(spec: &EnvironmentSpec, pop: &PopulationAssignment) -> Result<f64> {
    match spec.kind {
        EnvKind::Swarm => Ok(swarm_reward(pop, &spec.actions, spec.congestion_sigma)),
        EnvKind::Arena => {
            let values: Vec<f64> = spec.contexts.embeddings().iter().map(|c| c[0]).collect();
            arena_reward(pop, &values, &spec.actions, spec.congestion_sigma)
        }
        EnvKind::DemandMatching => Ok(demand_matching_reward(pop, &spec.demand)),
        EnvKind::Maritime => maritime_reward(pop, spec),
    }
}

/// Reward at the mean-field limit: the population histogram is replaced by
/// its expectation `M p(c) ξ(x|c)`.
pub fn mean_field_reward(spec: &EnvironmentSpec, xi: &ConditionalDistribution) -> Result<f64> {
    check_xi(spec, xi)?;
    let marginal = xi.marginal(&spec.contexts);
    let m = spec.population_m as f64;
    match spec.kind {
        EnvKind::Swarm => {
            let reward: f64 =
                marginal.iter().enumerate().map(|(a, p)| m * p * swarm_agent_term(spec.actions.embedding(a)[0])).sum();
            Ok(reward - congestion_penalty(marginal.iter().copied(), spec.congestion_sigma))
        }
        EnvKind::Arena => {
            if spec.population_m < 2 {
                return Err(EnvError::TooFewAgents(spec.population_m));
            }
            let values: Vec<f64> = spec.contexts.embeddings().iter().map(|c| c[0]).collect();
            let cells = expected_cells(spec, xi);
            let pair = arena_pair_term(&cells, &values, &spec.actions, m);
            Ok(pair - congestion_penalty(marginal.iter().copied(), spec.congestion_sigma))
        }
        EnvKind::DemandMatching => Ok(0.0 - js_divergence(&marginal, &spec.demand)),
        EnvKind::Maritime => maritime_from_cells(&expected_cells(spec, xi), spec, m),
    }
}

fn expected_cells(spec: &EnvironmentSpec, xi: &ConditionalDistribution) -> Vec<f64> {
    let m = spec.population_m as f64;
    let na = spec.num_actions();
    let probs = spec.contexts.probs();
    xi.as_flat().iter().enumerate().map(|(cell, v)| m * probs[cell / na] * v).collect()
}

fn check_xi(spec: &EnvironmentSpec, xi: &ConditionalDistribution) -> Result<()> {
    if xi.num_actions() != spec.num_actions() || xi.num_contexts() != spec.num_contexts() {
        return Err(EnvError::Invalid(format!(
            "ξ has shape {}x{}, environment expects {}x{}",
            xi.num_contexts(),
            xi.num_actions(),
            spec.num_contexts(),
            spec.num_actions()
        )));
    }
    Ok(())
}

/// What one round of the bandit protocol returns.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observed_y: f64,
    pub system_reward: f64,
    pub assignment: PopulationAssignment,
    pub representative_idx: usize,
}

impl StepOutcome {
    /// `(action, context)` indices of the representative agent.
    pub fn representative(&self) -> (usize, usize) {
        (self.assignment.action_idx[self.representative_idx], self.assignment.context_idx[self.representative_idx])
    }
}

pub(crate) fn add_noise<R: Rng + ?Sized>(value: f64, noise_std: f64, rng: &mut R) -> f64 {
    if noise_std > 0.0 {
        value + Normal::new(0.0, noise_std).expect("finite std").sample(rng)
    } else {
        value
    }
}

/// Plays one round: the population follows `ξ`, the system reward is
/// computed, and a uniformly chosen representative observes it with noise.
pub fn env_step<R: Rng + ?Sized>(
    spec: &EnvironmentSpec,
    xi: &ConditionalDistribution,
    rng: &mut R,
) -> Result<StepOutcome> {
    check_xi(spec, xi)?;
    let assignment = sample_population(xi, &spec.contexts, spec.population_m, rng);
    let system = if spec.deterministic_mode { mean_field_reward(spec, xi)? } else { system_reward(spec, &assignment)? };
    let representative_idx = rng.random_range(0..spec.population_m);
    let observed_y = add_noise(system, spec.noise_std, rng);
    Ok(StepOutcome { observed_y, system_reward: system, assignment, representative_idx })
}

/// Scores a fixed joint assignment (used by the baselines).
pub fn evaluate_assignment<R: Rng + ?Sized>(
    spec: &EnvironmentSpec,
    pop: &PopulationAssignment,
    rng: &mut R,
) -> Result<(f64, f64)> {
    let system = system_reward(spec, pop)?;
    Ok((system, add_noise(system, spec.noise_std, rng)))
}
