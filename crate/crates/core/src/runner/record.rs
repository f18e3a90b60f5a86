use crate::meanfield::{ConditionalDistribution, PopulationAssignment};

/// One environment evaluation of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    /// 1-based evaluation index.
    pub iteration: usize,
    /// Noiseless system reward of this evaluation.
    pub reward: f64,
    /// Running maximum of `reward`.
    pub best_reward: f64,
    pub observed_y: f64,
    /// Time spent in the algorithm itself for this iteration.
    pub wall_ms: f64,
}

/// The best evaluation of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct BestSolution {
    pub iteration: usize,
    pub reward: f64,
    pub assignment: PopulationAssignment,
    /// The distribution that produced it, for distribution-level optimisers.
    pub xi: Option<ConditionalDistribution>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub records: Vec<RunRecord>,
    pub best: BestSolution,
}

/// Builds records and tracks the best-so-far solution.
#[derive(Debug, Default)]
pub(crate) struct Tracker {
    records: Vec<RunRecord>,
    best: Option<BestSolution>,
}

impl Tracker {
    pub fn with_capacity(n: usize) -> Self {
        Self { records: Vec::with_capacity(n), best: None }
    }

    pub fn evaluations(&self) -> usize {
        self.records.len()
    }

    pub fn push(
        &mut self,
        reward: f64,
        observed_y: f64,
        wall_ms: f64,
        assignment: &PopulationAssignment,
        xi: Option<&ConditionalDistribution>,
    ) {
        let iteration = self.records.len() + 1;
        if self.best.as_ref().is_none_or(|b| reward > b.reward) {
            self.best = Some(BestSolution { iteration, reward, assignment: assignment.clone(), xi: xi.cloned() });
        }
        let best_reward = self.best.as_ref().map_or(reward, |b| b.reward);
        self.records.push(RunRecord { iteration, reward, best_reward, observed_y, wall_ms });
    }

    pub fn into_records(self) -> Vec<RunRecord> {
        self.records
    }

    pub fn finish(self) -> RunOutput {
        RunOutput { records: self.records, best: self.best.expect("at least one evaluation") }
    }
}
