//! End-to-end behaviour of the optimisation loop and experiment driver.

use std::path::PathBuf;

use mfbo::envs::EnvironmentSpec;
use mfbo::meanfield::ConditionalDistribution;
use mfbo::runner::experiment::{aggregate_dir, input_shape};
use mfbo::runner::{aggregate_best, run_experiment, run_mf_gp_ucb, ExperimentConfig, RunnerError};

fn repo_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn config(text: &str, out: &std::path::Path) -> ExperimentConfig {
    let text = format!("output_dir = {:?}\n{text}", out.display().to_string());
    ExperimentConfig::from_toml_str(&text, &repo_root().join("configs")).unwrap()
}

const DEMAND3: &str = r#"
budget = 60
seeds = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9]
algorithms = ["mf_gp_ucb"]
[environment]
kind = "demand_matching"
population = 1000
deterministic_mode = true
demand = [0.5, 0.3, 0.2]
[kernel]
noise_std = 0.01
"#;

#[derive(serde::Deserialize)]
struct Pinned {
    seeds: Vec<u64>,
    budget: usize,
    threshold: f64,
}

#[test]
fn cold_start_plays_uniform() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(&DEMAND3.replace("budget = 60", "budget = 1"), dir.path());
    let out = run_mf_gp_ucb(&cfg.resolve().unwrap(), 0).unwrap();
    assert_eq!(out.records.len(), 1);
    assert_eq!(out.best.xi, Some(ConditionalDistribution::uniform(1, 3)));
}

#[test]
fn fixed_seed_is_bit_identical_and_best_is_monotone() {
    let dir = tempfile::tempdir().unwrap();
    let exp = config(&DEMAND3.replace("budget = 60", "budget = 25"), dir.path()).resolve().unwrap();
    let a = run_mf_gp_ucb(&exp, 3).unwrap();
    let b = run_mf_gp_ucb(&exp, 3).unwrap();
    assert_eq!(a.records.len(), 25);
    for (x, y) in a.records.iter().zip(&b.records) {
        assert_eq!((x.reward.to_bits(), x.observed_y.to_bits()), (y.reward.to_bits(), y.observed_y.to_bits()));
    }
    assert!(a.records.windows(2).all(|w| w[1].best_reward >= w[0].best_reward));
}

#[test]
fn deterministic_three_action_instance_converges() {
    let golden: toml::Table =
        toml::from_str(&std::fs::read_to_string(repo_root().join("golden/convergence.toml")).unwrap()).unwrap();
    let pinned: Pinned = golden["demand3_t60"].clone().try_into().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let exp =
        config(&DEMAND3.replace("budget = 60", &format!("budget = {}", pinned.budget)), dir.path()).resolve().unwrap();
    for seed in pinned.seeds {
        let out = run_mf_gp_ucb(&exp, seed).unwrap();
        assert!(out.best.reward >= pinned.threshold, "seed {seed}: {}", out.best.reward);
    }
}

#[test]
fn aggregate_arithmetic() {
    let agg = aggregate_best(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
    assert_eq!(agg.mean, vec![2.0, 3.0]);
    for s in agg.stderr {
        assert!((s - 1.0).abs() < 1e-15);
    }
    assert_eq!(aggregate_best(&[vec![5.0, 6.0]]).stderr, vec![0.0, 0.0]);
}

#[test]
fn aggregate_dir_reads_run_files() {
    let dir = tempfile::tempdir().unwrap();
    let header = "iteration,reward,best_reward,observed_y\n";
    std::fs::write(dir.path().join("run_random_0.csv"), format!("{header}1,1,1,1\n2,2,2,2\n")).unwrap();
    std::fs::write(dir.path().join("run_random_1.csv"), format!("{header}1,3,3,3\n2,4,4,4\n")).unwrap();
    aggregate_dir(dir.path()).unwrap();
    let agg = std::fs::read_to_string(dir.path().join("agg_random.csv")).unwrap();
    assert_eq!(agg, "iteration,mean_best_reward,stderr_best_reward\n1,2,1\n2,3,1\n");
}

#[test]
fn rerun_reproduces_every_output_byte() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let text = DEMAND3
        .replace("budget = 60", "budget = 30")
        .replace("seeds = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9]", "seeds = [0, 1]")
        .replace(r#"algorithms = ["mf_gp_ucb"]"#, r#"algorithms = ["mf_gp_ucb", "random", "genetic_algorithm"]"#)
        .replace("deterministic_mode = true", "deterministic_mode = false");
    run_experiment(&config(&text, a.path())).unwrap();
    run_experiment(&config(&text, b.path())).unwrap();
    let mut names: Vec<String> = std::fs::read_dir(a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| !n.starts_with("timing_"))
        .collect();
    names.sort();
    assert!(names.contains(&"convergence.svg".to_string()) && names.contains(&"histogram.svg".to_string()));
    assert_eq!(names.iter().filter(|n| n.starts_with("run_")).count(), 6);
    for n in names {
        assert_eq!(std::fs::read(a.path().join(&n)).unwrap(), std::fs::read(b.path().join(&n)).unwrap(), "{n}");
    }
}

#[test]
fn failed_iteration_flushes_partial_log() {
    let dir = tempfile::tempdir().unwrap();
    // The unsquared kernel has no analytic gradient, so iteration 2 fails.
    let text = DEMAND3.replace("seeds = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9]", "seeds = [0]") + "rbf_form = \"unsquared\"\n";
    let err = run_experiment(&config(&text, dir.path())).unwrap_err();
    match &err {
        RunnerError::Aborted { iteration, partial, .. } => assert_eq!((*iteration, partial.len()), (2, 1)),
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(err.exit_code(), 2);
    let log = std::fs::read_to_string(dir.path().join("run_mf_gp_ucb_0.csv")).unwrap();
    assert_eq!(log.lines().count(), 2);
}

#[test]
fn input_dimension_does_not_depend_on_population() {
    let small = input_shape(&EnvironmentSpec::swarm(50, 30, 10.0, 1.0).unwrap());
    let large = input_shape(&EnvironmentSpec::swarm(5000, 30, 10.0, 1.0).unwrap());
    assert_eq!(small, large);
    assert_eq!(small.input_dim(), 30 + 1 + 1);
}

#[test]
fn checked_in_configs_load() {
    let mut count = 0;
    for entry in std::fs::read_dir(repo_root().join("configs")).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let cfg = ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            cfg.resolve().unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            count += 1;
        }
    }
    assert!(count >= 10);
}

#[test]
fn config_errors_are_reported_as_such() {
    let dir = tempfile::tempdir().unwrap();
    let bad = DEMAND3.replace("demand = [0.5, 0.3, 0.2]", "demand = [0.5, 0.3, 0.3]");
    let err = config(&bad, dir.path()).resolve().unwrap_err();
    assert_eq!(err.exit_code(), 1, "{err}");
    let unknown = format!("output_dir = \"x\"\nbogus = 1\n{DEMAND3}");
    assert!(matches!(ExperimentConfig::from_toml_str(&unknown, dir.path()), Err(RunnerError::Config(_))));
}
