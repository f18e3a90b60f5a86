//! Probability machinery for the mean-field setting.
//!
//! A population of `M` agents each carries a context `c` drawn from a
//! [`ContextMeasure`] and picks an action from an [`ActionSet`] according to
//! a per-context distribution `ξ(·|c)`. The collection of those rows is a
//! [`ConditionalDistribution`], the decision variable of the optimiser.
//!
//! Layout convention: everything indexed by `(context, action)` is stored
//! context-major, i.e. entry `c * |A| + a`.

use rand::Rng;
use rand_distr::{weighted::WeightedIndex, Distribution};
use thiserror::Error;

/// Tolerance on row sums of a conditional distribution.
pub const SIMPLEX_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeanFieldError {
    #[error("action set needs at least {min} actions, got {got}")]
    TooFewActions { min: usize, got: usize },
    #[error("actions {0} and {1} share the same embedding")]
    DuplicateActions(usize, usize),
    #[error("embedding {index} has length {found}, expected {expected}")]
    EmbeddingLength { index: usize, expected: usize, found: usize },
    #[error("context probabilities must be nonnegative and sum to 1 (sum = {0})")]
    BadContextProbs(f64),
    #[error("{what}: expected {expected} entries, got {found}")]
    Shape { what: &'static str, expected: usize, found: usize },
    #[error("row {row} is not a probability vector (sum = {sum})")]
    NotSimplex { row: usize, sum: f64 },
    #[error("population must contain at least one agent")]
    EmptyPopulation,
}

pub type Result<T> = std::result::Result<T, MeanFieldError>;

/// Discrete action set `A`, each action embedded in `R^{d_A}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionSet {
    embeddings: Vec<Vec<f64>>,
    labels: Vec<String>,
}

impl ActionSet {
    pub fn new(embeddings: Vec<Vec<f64>>, labels: Option<Vec<String>>) -> Result<Self> {
        Self::build(embeddings, labels, 2)
    }

    /// Like [`ActionSet::new`] but admits a single action. Only degenerate
    /// baselines and tests need this.
    pub fn new_unchecked_size(embeddings: Vec<Vec<f64>>, labels: Option<Vec<String>>) -> Result<Self> {
        Self::build(embeddings, labels, 1)
    }

    fn build(embeddings: Vec<Vec<f64>>, labels: Option<Vec<String>>, min: usize) -> Result<Self> {
        if embeddings.len() < min {
            return Err(MeanFieldError::TooFewActions { min, got: embeddings.len() });
        }
        let dim = embeddings[0].len();
        for (index, e) in embeddings.iter().enumerate() {
            if e.len() != dim {
                return Err(MeanFieldError::EmbeddingLength { index, expected: dim, found: e.len() });
            }
        }
        for i in 0..embeddings.len() {
            for j in i + 1..embeddings.len() {
                if embeddings[i] == embeddings[j] {
                    return Err(MeanFieldError::DuplicateActions(i, j));
                }
            }
        }
        let labels = match labels {
            Some(l) => {
                if l.len() != embeddings.len() {
                    return Err(MeanFieldError::Shape {
                        what: "action labels",
                        expected: embeddings.len(),
                        found: l.len(),
                    });
                }
                l
            }
            None => (0..embeddings.len()).map(|i| i.to_string()).collect(),
        };
        Ok(Self { embeddings, labels })
    }

    /// `n` scalar actions evenly spaced over `[lo, hi]`, endpoints included.
    pub fn linspace(lo: f64, hi: f64, n: usize) -> Result<Self> {
        let step = if n > 1 { (hi - lo) / (n - 1) as f64 } else { 0.0 };
        Self::new((0..n).map(|i| vec![lo + step * i as f64]).collect(), None)
    }

    pub fn len(&self) -> usize {
        self.embeddings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.embeddings.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.embeddings[0].len()
    }

    pub fn embedding(&self, i: usize) -> &[f64] {
        &self.embeddings[i]
    }

    pub fn embeddings(&self) -> &[Vec<f64>] {
        &self.embeddings
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Largest pairwise Euclidean distance between embeddings.
    pub fn diameter(&self) -> f64 {
        diameter(&self.embeddings)
    }
}

/// Finite context set with its sampling measure `p(c)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextMeasure {
    embeddings: Vec<Vec<f64>>,
    probs: Vec<f64>,
}

impl ContextMeasure {
    pub fn new(embeddings: Vec<Vec<f64>>, probs: Vec<f64>) -> Result<Self> {
        if embeddings.is_empty() {
            return Err(MeanFieldError::Shape { what: "contexts", expected: 1, found: 0 });
        }
        if embeddings.len() != probs.len() {
            return Err(MeanFieldError::Shape {
                what: "context probabilities",
                expected: embeddings.len(),
                found: probs.len(),
            });
        }
        let dim = embeddings[0].len();
        for (index, e) in embeddings.iter().enumerate() {
            if e.len() != dim {
                return Err(MeanFieldError::EmbeddingLength { index, expected: dim, found: e.len() });
            }
        }
        let sum: f64 = probs.iter().sum();
        if probs.iter().any(|&p| !(p >= 0.0)) || (sum - 1.0).abs() > 1e-12 {
            return Err(MeanFieldError::BadContextProbs(sum));
        }
        Ok(Self { embeddings, probs })
    }

    /// Single context with embedding `[0.0]`.
    pub fn single() -> Self {
        Self { embeddings: vec![vec![0.0]], probs: vec![1.0] }
    }

    /// Equally likely contexts.
    pub fn uniform(embeddings: Vec<Vec<f64>>) -> Result<Self> {
        let n = embeddings.len().max(1);
        // Build the probabilities so they sum to exactly 1 in floating point.
        let mut probs = vec![1.0 / n as f64; embeddings.len()];
        if let Some(last) = probs.last_mut() {
            *last = 1.0 - (n - 1) as f64 / n as f64;
        }
        Self::new(embeddings, probs)
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.embeddings[0].len()
    }

    pub fn embedding(&self, i: usize) -> &[f64] {
        &self.embeddings[i]
    }

    pub fn embeddings(&self) -> &[Vec<f64>] {
        &self.embeddings
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn diameter(&self) -> f64 {
        diameter(&self.embeddings)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        if self.probs.len() == 1 {
            return 0;
        }
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        self.probs.len() - 1
    }
}

fn diameter(points: &[Vec<f64>]) -> f64 {
    let mut best = 0.0f64;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let d: f64 = points[i].iter().zip(&points[j]).map(|(a, b)| (a - b).powi(2)).sum();
            best = best.max(d.sqrt());
        }
    }
    best
}

/// `ξ ∈ Δ_A^C`: one probability row over actions per context.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalDistribution {
    num_contexts: usize,
    num_actions: usize,
    data: Vec<f64>,
}

impl ConditionalDistribution {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let num_contexts = rows.len();
        if num_contexts == 0 {
            return Err(MeanFieldError::Shape { what: "distribution rows", expected: 1, found: 0 });
        }
        let num_actions = rows[0].len();
        let mut data = Vec::with_capacity(num_contexts * num_actions);
        for r in &rows {
            if r.len() != num_actions {
                return Err(MeanFieldError::Shape { what: "distribution row", expected: num_actions, found: r.len() });
            }
            data.extend_from_slice(r);
        }
        Self::unflatten(data, num_contexts, num_actions)
    }

    /// Inverse of [`ConditionalDistribution::flatten`].
    pub fn unflatten(data: Vec<f64>, num_contexts: usize, num_actions: usize) -> Result<Self> {
        if data.len() != num_contexts * num_actions || num_actions == 0 {
            return Err(MeanFieldError::Shape {
                what: "flattened distribution",
                expected: num_contexts * num_actions,
                found: data.len(),
            });
        }
        for (row, chunk) in data.chunks(num_actions).enumerate() {
            let sum: f64 = chunk.iter().sum();
            if chunk.iter().any(|&v| !(0.0..=1.0).contains(&v)) || (sum - 1.0).abs() > SIMPLEX_TOL {
                return Err(MeanFieldError::NotSimplex { row, sum });
            }
        }
        Ok(Self { num_contexts, num_actions, data })
    }

    pub fn uniform(num_contexts: usize, num_actions: usize) -> Self {
        Self { num_contexts, num_actions, data: vec![1.0 / num_actions as f64; num_contexts * num_actions] }
    }

    /// Every context puts all of its mass on `action`.
    pub fn point_mass(num_contexts: usize, num_actions: usize, action: usize) -> Self {
        let mut data = vec![0.0; num_contexts * num_actions];
        for c in 0..num_contexts {
            data[c * num_actions + action] = 1.0;
        }
        Self { num_contexts, num_actions, data }
    }

    pub fn num_contexts(&self) -> usize {
        self.num_contexts
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn row(&self, c: usize) -> &[f64] {
        &self.data[c * self.num_actions..(c + 1) * self.num_actions]
    }

    pub fn get(&self, c: usize, a: usize) -> f64 {
        self.data[c * self.num_actions + a]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.num_actions).map(|r| r.to_vec()).collect()
    }

    /// Context-major concatenation of the rows, length `|A|·|C|`.
    pub fn flatten(&self) -> Vec<f64> {
        self.data.clone()
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    /// Population-level action marginal `Σ_c p(c) ξ(·|c)`.
    pub fn marginal(&self, contexts: &ContextMeasure) -> Vec<f64> {
        let mut out = vec![0.0; self.num_actions];
        for (c, p) in contexts.probs().iter().enumerate() {
            for (o, v) in out.iter_mut().zip(self.row(c)) {
                *o += p * v;
            }
        }
        out
    }
}

/// Unconstrained parametrisation of a [`ConditionalDistribution`].
#[derive(Debug, Clone, PartialEq)]
pub struct Logits {
    pub num_contexts: usize,
    pub num_actions: usize,
    pub theta: Vec<f64>,
}

impl Logits {
    pub fn zeros(num_contexts: usize, num_actions: usize) -> Self {
        Self { num_contexts, num_actions, theta: vec![0.0; num_contexts * num_actions] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let num_actions = rows.first().map_or(0, |r| r.len());
        Self { num_contexts: rows.len(), num_actions, theta: rows.iter().flatten().copied().collect() }
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(logits: &Logits) -> ConditionalDistribution {
    debug_assert!(logits.theta.iter().all(|v| v.is_finite()));
    let n = logits.num_actions;
    let mut data = vec![0.0; logits.theta.len()];
    for (out, row) in data.chunks_mut(n).zip(logits.theta.chunks(n)) {
        softmax_into(row, out);
    }
    ConditionalDistribution { num_contexts: logits.num_contexts, num_actions: n, data }
}

pub(crate) fn softmax_into(row: &[f64], out: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &v) in out.iter_mut().zip(row) {
        *o = (v - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// Realised contexts and actions of every agent in one round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PopulationAssignment {
    pub context_idx: Vec<usize>,
    pub action_idx: Vec<usize>,
}

impl PopulationAssignment {
    pub fn len(&self) -> usize {
        self.action_idx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.action_idx.is_empty()
    }

    /// Counts per `(context, action)` cell, context-major.
    pub fn cell_counts(&self, num_contexts: usize, num_actions: usize) -> Vec<usize> {
        let mut counts = vec![0usize; num_contexts * num_actions];
        for (&c, &a) in self.context_idx.iter().zip(&self.action_idx) {
            counts[c * num_actions + a] += 1;
        }
        counts
    }

    pub fn action_counts(&self, num_actions: usize) -> Vec<usize> {
        let mut counts = vec![0usize; num_actions];
        for &a in &self.action_idx {
            counts[a] += 1;
        }
        counts
    }
}

/// Draws `m` contexts i.i.d. from `p`.
pub fn sample_contexts<R: Rng + ?Sized>(p: &ContextMeasure, m: usize, rng: &mut R) -> Vec<usize> {
    (0..m).map(|_| p.sample(rng)).collect()
}

/// Draws one action per agent from `ξ(·|c)` given fixed contexts.
pub fn sample_actions<R: Rng + ?Sized>(xi: &ConditionalDistribution, context_idx: &[usize], rng: &mut R) -> Vec<usize> {
    let samplers: Vec<WeightedIndex<f64>> =
        (0..xi.num_contexts()).map(|c| WeightedIndex::new(xi.row(c)).expect("valid simplex row")).collect();
    context_idx.iter().map(|&c| samplers[c].sample(rng)).collect()
}

/// Samples a population of `m` agents: contexts from `p`, then actions from `ξ`.
pub fn sample_population<R: Rng + ?Sized>(
    xi: &ConditionalDistribution,
    p: &ContextMeasure,
    m: usize,
    rng: &mut R,
) -> PopulationAssignment {
    assert!(m >= 1, "population size must be positive");
    let context_idx = sample_contexts(p, m, rng);
    let action_idx = sample_actions(xi, &context_idx, rng);
    PopulationAssignment { context_idx, action_idx }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    Global,
    PerContext,
}

/// Normalised action frequencies. `Global` yields one row; `PerContext`
/// yields `num_contexts` rows, with all-zero rows for absent contexts.
pub fn empirical_distribution(
    pop: &PopulationAssignment,
    num_actions: usize,
    num_contexts: usize,
    scope: Scope,
) -> Result<Vec<Vec<f64>>> {
    if pop.is_empty() {
        return Err(MeanFieldError::EmptyPopulation);
    }
    match scope {
        Scope::Global => {
            let m = pop.len() as f64;
            Ok(vec![pop.action_counts(num_actions).into_iter().map(|n| n as f64 / m).collect()])
        }
        Scope::PerContext => {
            let counts = pop.cell_counts(num_contexts, num_actions);
            Ok(counts
                .chunks(num_actions)
                .map(|row| {
                    let total: usize = row.iter().sum();
                    if total == 0 {
                        vec![0.0; num_actions]
                    } else {
                        row.iter().map(|&n| n as f64 / total as f64).collect()
                    }
                })
                .collect())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn softmax_zero_logits_is_uniform() {
        let xi = softmax_rows(&Logits::zeros(2, 4));
        for c in 0..2 {
            assert_eq!(xi.row(c), &[0.25; 4]);
        }
    }

    #[test]
    fn softmax_ln2_row() {
        let xi = softmax_rows(&Logits::from_rows(&[vec![2f64.ln(), 0.0, 0.0]]));
        let expect = [0.5, 0.25, 0.25];
        for (a, b) in xi.row(0).iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_shift_invariant() {
        let row = vec![0.3, -1.2, 2.5, 0.0];
        let shifted: Vec<f64> = row.iter().map(|v| v + 100.0).collect();
        let a = softmax_rows(&Logits::from_rows(&[row]));
        let b = softmax_rows(&Logits::from_rows(&[shifted]));
        for (x, y) in a.row(0).iter().zip(b.row(0)) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn point_mass_population() {
        let xi = ConditionalDistribution::point_mass(2, 5, 3);
        let p = ContextMeasure::uniform(vec![vec![-1.0], vec![1.0]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pop = sample_population(&xi, &p, 500, &mut rng);
        assert!(pop.action_idx.iter().all(|&a| a == 3));
    }

    #[test]
    fn binomial_concentration_two_actions() {
        let xi = ConditionalDistribution::uniform(1, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let pop = sample_population(&xi, &ContextMeasure::single(), 10_000, &mut rng);
        let freq = empirical_distribution(&pop, 2, 1, Scope::Global).unwrap();
        assert!((freq[0][0] - 0.5).abs() < 0.02, "{}", freq[0][0]);
    }

    #[test]
    fn sampling_is_deterministic() {
        let xi = softmax_rows(&Logits::from_rows(&[vec![0.1, 0.7, -0.4], vec![1.0, 0.0, 0.0]]));
        let p = ContextMeasure::new(vec![vec![0.0], vec![1.0]], vec![0.3, 0.7]).unwrap();
        let a = sample_population(&xi, &p, 1000, &mut ChaCha8Rng::seed_from_u64(9));
        let b = sample_population(&xi, &p, 1000, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }

    #[test]
    fn marginal_frequencies_within_three_sigma() {
        let xi = softmax_rows(&Logits::from_rows(&[vec![0.5, 0.0, -0.5], vec![-1.0, 0.2, 1.0]]));
        let p = ContextMeasure::new(vec![vec![0.0], vec![1.0]], vec![0.4, 0.6]).unwrap();
        let m = 100_000;
        let pop = sample_population(&xi, &p, m, &mut ChaCha8Rng::seed_from_u64(3));
        let freq = empirical_distribution(&pop, 3, 2, Scope::Global).unwrap();
        let target = xi.marginal(&p);
        for (f, q) in freq[0].iter().zip(&target) {
            let sd = (q * (1.0 - q) / m as f64).sqrt();
            assert!((f - q).abs() < 3.0 * sd, "freq {f} target {q}");
        }
    }

    #[test]
    fn global_counting() {
        let pop = PopulationAssignment { context_idx: vec![0; 4], action_idx: vec![0, 0, 1, 2] };
        let d = empirical_distribution(&pop, 3, 1, Scope::Global).unwrap();
        assert_eq!(d, vec![vec![0.5, 0.25, 0.25]]);
        let same = PopulationAssignment { context_idx: vec![0; 3], action_idx: vec![1, 1, 1] };
        assert_eq!(empirical_distribution(&same, 3, 1, Scope::Global).unwrap(), vec![vec![0.0, 1.0, 0.0]]);
    }

    #[test]
    fn empty_population_is_rejected() {
        let pop = PopulationAssignment { context_idx: vec![], action_idx: vec![] };
        assert_eq!(empirical_distribution(&pop, 3, 1, Scope::Global), Err(MeanFieldError::EmptyPopulation));
    }

    #[test]
    fn per_context_with_absent_context_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let m = rng.random_range(1..12);
            let num_c = 3;
            let num_a = 4;
            // Context 1 is never used.
            let context_idx: Vec<usize> = (0..m).map(|_| [0, 2][rng.random_range(0..2)]).collect();
            let action_idx: Vec<usize> = (0..m).map(|_| rng.random_range(0..num_a)).collect();
            let pop = PopulationAssignment { context_idx: context_idx.clone(), action_idx: action_idx.clone() };
            let got = empirical_distribution(&pop, num_a, num_c, Scope::PerContext).unwrap();
            for (c, row) in got.iter().enumerate() {
                let members: Vec<usize> = (0..m).filter(|&i| context_idx[i] == c).map(|i| action_idx[i]).collect();
                for (a, &p) in row.iter().enumerate() {
                    let expect = if members.is_empty() {
                        0.0
                    } else {
                        members.iter().filter(|&&x| x == a).count() as f64 / members.len() as f64
                    };
                    assert_eq!(p, expect);
                }
            }
            assert!(got[1].iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn flatten_layout() {
        let xi = ConditionalDistribution::from_rows(vec![vec![0.1, 0.9], vec![0.6, 0.4]]).unwrap();
        assert_eq!(xi.flatten(), vec![0.1, 0.9, 0.6, 0.4]);
        let single = ConditionalDistribution::from_rows(vec![vec![0.2, 0.3, 0.5]]).unwrap();
        assert_eq!(single.flatten(), vec![0.2, 0.3, 0.5]);
    }

    #[test]
    fn rejects_non_simplex_rows() {
        assert!(matches!(
            ConditionalDistribution::from_rows(vec![vec![0.5, 0.6]]),
            Err(MeanFieldError::NotSimplex { row: 0, .. })
        ));
    }

    #[test]
    fn action_set_validation() {
        assert!(ActionSet::new(vec![vec![0.0]], None).is_err());
        assert_eq!(ActionSet::new(vec![vec![0.0], vec![0.0]], None), Err(MeanFieldError::DuplicateActions(0, 1)));
        let a = ActionSet::linspace(0.0, 1.0, 5).unwrap();
        assert_eq!(a.labels()[4], "4");
        assert!((a.diameter() - 1.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn softmax_rows_are_simplex(rows in prop::collection::vec(prop::collection::vec(-500.0f64..500.0, 1..8), 1..4)) {
            let width = rows[0].len();
            let rows: Vec<Vec<f64>> = rows.into_iter().map(|mut r| { r.resize(width, 0.0); r }).collect();
            let xi = softmax_rows(&Logits::from_rows(&rows));
            for c in 0..xi.num_contexts() {
                let sum: f64 = xi.row(c).iter().sum();
                prop_assert!((sum - 1.0).abs() < 1e-12);
                prop_assert!(xi.row(c).iter().all(|&v| (0.0..=1.0).contains(&v)));
            }
        }

        #[test]
        fn flatten_round_trip(rows in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 1..5)) {
            let xi = softmax_rows(&Logits::from_rows(&rows));
            let back = ConditionalDistribution::unflatten(xi.flatten(), xi.num_contexts(), xi.num_actions()).unwrap();
            prop_assert_eq!(back, xi);
        }
    }
}
