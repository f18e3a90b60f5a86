//! Exhaustive search over a simplex grid for tiny instances, and regret.

use crate::envs::{mean_field_reward, EnvironmentSpec};
use crate::meanfield::ConditionalDistribution;

use super::RunnerError;

/// Largest `|A||C|` the exhaustive scan accepts.
pub const MAX_CELLS: usize = 4;

/// All compositions of `total` into `parts` nonnegative integers.
fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    if parts == 1 {
        return vec![vec![total]];
    }
    let mut out = Vec::new();
    for first in 0..=total {
        for mut rest in compositions(total - first, parts - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// Scans every `ξ` whose rows are multiples of `1 / resolution`, scoring
/// each at the mean-field limit. Ties keep the first grid point found.
pub fn brute_force_optimum(
    spec: &EnvironmentSpec,
    resolution: usize,
) -> Result<(ConditionalDistribution, f64), RunnerError> {
    let (nc, na) = (spec.num_contexts(), spec.num_actions());
    if nc * na > MAX_CELLS {
        return Err(RunnerError::Oracle(format!("|A||C| = {} exceeds the limit of {MAX_CELLS}", nc * na)));
    }
    if resolution < 1 {
        return Err(RunnerError::Oracle("resolution must be >= 1".into()));
    }
    let rows: Vec<Vec<f64>> = compositions(resolution, na)
        .into_iter()
        .map(|c| c.into_iter().map(|k| k as f64 / resolution as f64).collect())
        .collect();

    let mut best: Option<(ConditionalDistribution, f64)> = None;
    let mut idx = vec![0usize; nc];
    loop {
        let flat: Vec<f64> = idx.iter().flat_map(|&i| rows[i].iter().copied()).collect();
        let xi = ConditionalDistribution::unflatten(flat, nc, na)?;
        let g = mean_field_reward(spec, &xi)?;
        if best.as_ref().is_none_or(|(_, b)| g > *b) {
            best = Some((xi, g));
        }
        // Odometer increment over the per-context row choices.
        let mut k = 0;
        while k < nc {
            idx[k] += 1;
            if idx[k] < rows.len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
        if k == nc {
            break;
        }
    }
    Ok(best.expect("grid is nonempty"))
}

/// Cumulative regret `Σ_{τ≤t} (g* − reward_τ)`.
pub fn regret_curve(rewards: &[f64], g_star: f64) -> Vec<f64> {
    rewards
        .iter()
        .scan(0.0, |acc, r| {
            *acc += g_star - r;
            Some(*acc)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meanfield::ActionSet;

    fn demand_spec(demand: Vec<f64>) -> EnvironmentSpec {
        let na = demand.len();
        let actions = ActionSet::new((0..na).map(|i| vec![i as f64]).collect(), None).unwrap();
        EnvironmentSpec::demand_matching(actions, demand, 100, 0.0, true).unwrap()
    }

    #[test]
    fn exact_grid_point_is_found() {
        let (xi, g) = brute_force_optimum(&demand_spec(vec![0.7, 0.3]), 100).unwrap();
        assert!((xi.get(0, 0) - 0.7).abs() < 1e-12 && (xi.get(0, 1) - 0.3).abs() < 1e-12);
        assert!(g.abs() < 1e-12);
    }

    #[test]
    fn resolution_one_visits_vertices_only() {
        let mut points = compositions(1, 3);
        points.sort();
        assert_eq!(points, vec![vec![0, 0, 1], vec![0, 1, 0], vec![1, 0, 0]]);
        let (xi, _) = brute_force_optimum(&demand_spec(vec![0.2, 0.8]), 1).unwrap();
        assert_eq!(xi.row(0), &[0.0, 1.0]);
    }

    #[test]
    fn three_actions_within_grid_distance() {
        let demand = vec![0.5, 0.3, 0.2];
        for res in [7, 10, 13] {
            let (xi, _) = brute_force_optimum(&demand_spec(demand.clone()), res).unwrap();
            let l1: f64 = xi.row(0).iter().zip(&demand).map(|(a, b)| (a - b).abs()).sum();
            assert!(l1 <= 2.0 / res as f64 + 1e-12, "res {res}: l1 {l1}");
        }
    }

    #[test]
    fn guard_rejects_large_instances() {
        assert!(brute_force_optimum(&demand_spec(vec![0.2; 5]), 4).is_err());
    }

    #[test]
    fn regret_arithmetic() {
        assert_eq!(regret_curve(&[1.0, 1.0], 1.0), vec![0.0, 0.0]);
        assert_eq!(regret_curve(&[0.0, 0.0, 0.0], 1.0), vec![1.0, 2.0, 3.0]);
    }
}
