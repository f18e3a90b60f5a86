//! The optimisation loops and multi-seed experiment driver.
//!
//! Output files per experiment directory:
//! - `run_<algo>_<seed>.csv`: `iteration,reward,best_reward,observed_y`
//! - `timing_<algo>_<seed>.csv`: `iteration,wall_ms`
//! - `agg_<algo>.csv`: `iteration,mean_best_reward,stderr_best_reward`
//! - `solution_<algo>.csv`: the best population found over all seeds
//! - `convergence.svg`, `histogram.svg`
//!
//! Timings live in their own files so that reruns reproduce every other
//! file byte for byte.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::acquisition::{beta_value, optimize_acquisition};
use crate::baselines::{genetic_algorithm_run, random_search_run, simulated_annealing_run};
use crate::envs::{env_step, EnvironmentSpec};
use crate::gp::{fit, AdditiveKernel, GpInput, InputShape, ObservationBuffer};
use crate::meanfield::ConditionalDistribution;

use super::config::{Algorithm, ExperimentConfig, ResolvedExperiment};
use super::plot::{render_convergence_svg, render_histogram_svg, HistogramData};
use super::record::{BestSolution, RunOutput, RunRecord, Tracker};
use super::RunnerError;

type Result<T> = std::result::Result<T, RunnerError>;

/// GP input layout of an environment; independent of the population size.
pub fn input_shape(spec: &EnvironmentSpec) -> InputShape {
    InputShape {
        action_dim: spec.actions.dim(),
        context_dim: spec.contexts.dim(),
        num_actions: spec.num_actions(),
        num_contexts: spec.num_contexts(),
    }
}

/// The mean-field GP-UCB loop. `wall_ms` covers the GP fit and the
/// acquisition optimisation only.
pub fn run_mf_gp_ucb(exp: &ResolvedExperiment, seed: u64) -> Result<RunOutput> {
    let spec = &exp.spec;
    let kernel = AdditiveKernel::new(exp.kernel, input_shape(spec))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buffer = ObservationBuffer::new();
    let mut tracker = Tracker::with_capacity(exp.budget);
    let (na, nc) = (spec.num_actions(), spec.num_contexts());

    for t in 1..=exp.budget {
        let mut iteration = || -> Result<()> {
            let t0 = Instant::now();
            let post = if buffer.is_empty() { None } else { Some(fit(&buffer, kernel, exp.gp_noise, exp.fit)?) };
            let beta = beta_value(t as u64, na, nc, &exp.beta);
            let proposal =
                optimize_acquisition(post.as_ref(), beta, &spec.contexts, &spec.actions, &exp.acquisition, &mut rng)?;
            let wall_ms = t0.elapsed().as_secs_f64() * 1e3;

            let step = env_step(spec, &proposal.xi, &mut rng)?;
            let (a, c) = step.representative();
            let z = GpInput::new(
                spec.actions.embedding(a).to_vec(),
                spec.contexts.embedding(c).to_vec(),
                proposal.xi.flatten(),
            );
            buffer.push(z, step.observed_y);
            tracker.push(step.system_reward, step.observed_y, wall_ms, &step.assignment, Some(&proposal.xi));
            Ok(())
        };
        if let Err(e) = iteration() {
            return Err(RunnerError::Aborted { iteration: t, source: Box::new(e), partial: tracker.into_records() });
        }
    }
    Ok(tracker.finish())
}

/// Runs one algorithm for one seed.
pub fn run_algorithm(exp: &ResolvedExperiment, algo: Algorithm, seed: u64) -> Result<RunOutput> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(match algo {
        Algorithm::MfGpUcb => return run_mf_gp_ucb(exp, seed),
        Algorithm::Random => random_search_run(&exp.spec, exp.budget, &mut rng)?,
        Algorithm::SimulatedAnnealing => simulated_annealing_run(&exp.spec, &exp.sa, exp.budget, &mut rng)?,
        Algorithm::GeneticAlgorithm => genetic_algorithm_run(&exp.spec, &exp.ga, exp.budget, &mut rng)?,
    })
}

/// Per-iteration mean and standard error of `best_reward` across runs.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub mean: Vec<f64>,
    /// Sample standard deviation over `√n`; zero for a single run.
    pub stderr: Vec<f64>,
}

impl Aggregate {
    pub fn final_mean(&self) -> f64 {
        *self.mean.last().expect("nonempty aggregate")
    }

    pub fn final_stderr(&self) -> f64 {
        *self.stderr.last().expect("nonempty aggregate")
    }
}

/// Aggregates best-so-far curves, truncated to the shortest run.
pub fn aggregate_best(runs: &[Vec<f64>]) -> Aggregate {
    assert!(!runs.is_empty(), "need at least one run");
    let len = runs.iter().map(Vec::len).min().unwrap_or(0);
    let n = runs.len() as f64;
    let mut mean = Vec::with_capacity(len);
    let mut stderr = Vec::with_capacity(len);
    for i in 0..len {
        let m = runs.iter().map(|r| r[i]).sum::<f64>() / n;
        let se = if runs.len() > 1 {
            let var = runs.iter().map(|r| (r[i] - m).powi(2)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        } else {
            0.0
        };
        mean.push(m);
        stderr.push(se);
    }
    Aggregate { mean, stderr }
}

#[derive(Debug, Clone)]
pub struct ExperimentSummary {
    pub output_dir: PathBuf,
    pub aggregates: BTreeMap<Algorithm, Aggregate>,
    /// Per algorithm, the runs in seed order.
    pub runs: BTreeMap<Algorithm, Vec<RunOutput>>,
}

fn thread_cap() -> usize {
    let available = std::thread::available_parallelism().map_or(1, |n| n.get());
    std::env::var("MFBO_THREADS").ok().and_then(|v| v.parse::<usize>().ok()).filter(|&n| n > 0).unwrap_or(available)
}

/// Runs every configured algorithm on every seed, in parallel across
/// jobs, and writes all outputs.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentSummary> {
    let exp = cfg.resolve()?;
    let dir = cfg.output_path();
    std::fs::create_dir_all(&dir).map_err(|e| RunnerError::io(&dir, e))?;

    let jobs: Vec<(Algorithm, u64)> =
        cfg.algorithms.iter().flat_map(|&a| cfg.seeds.iter().map(move |&s| (a, s))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_cap())
        .build()
        .map_err(|e| RunnerError::Config(format!("thread pool: {e}")))?;
    let results: Vec<Result<RunOutput>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(algo, seed)| {
                log::info!("running {} seed {seed}", algo.tag());
                run_algorithm(&exp, algo, seed)
            })
            .collect()
    });

    let mut runs: BTreeMap<Algorithm, Vec<RunOutput>> = BTreeMap::new();
    for ((algo, seed), result) in jobs.into_iter().zip(results) {
        match result {
            Ok(out) => {
                write_run_files(&dir, algo, seed, &out.records)?;
                runs.entry(algo).or_default().push(out);
            }
            Err(RunnerError::Aborted { iteration, source, partial }) => {
                write_run_files(&dir, algo, seed, &partial)?;
                return Err(RunnerError::Aborted { iteration, source, partial });
            }
            Err(e) => return Err(e),
        }
    }

    let mut aggregates = BTreeMap::new();
    for (&algo, outs) in &runs {
        let curves: Vec<Vec<f64>> = outs.iter().map(|o| o.records.iter().map(|r| r.best_reward).collect()).collect();
        let agg = aggregate_best(&curves);
        write_aggregate(&dir.join(format!("agg_{}.csv", algo.tag())), &agg)?;
        let best = outs.iter().map(|o| &o.best).reduce(|a, b| if b.reward > a.reward { b } else { a });
        write_solution(&dir.join(format!("solution_{}.csv", algo.tag())), &exp.spec, best.expect("seeds nonempty"))?;
        aggregates.insert(algo, agg);
    }
    write_plots(&dir)?;
    Ok(ExperimentSummary { output_dir: dir, aggregates, runs })
}

fn write_run_files(dir: &Path, algo: Algorithm, seed: u64, records: &[RunRecord]) -> Result<()> {
    let mut run = String::from("iteration,reward,best_reward,observed_y\n");
    let mut timing = String::from("iteration,wall_ms\n");
    for r in records {
        run.push_str(&format!("{},{},{},{}\n", r.iteration, r.reward, r.best_reward, r.observed_y));
        timing.push_str(&format!("{},{}\n", r.iteration, r.wall_ms));
    }
    write_file(&dir.join(format!("run_{}_{seed}.csv", algo.tag())), &run)?;
    write_file(&dir.join(format!("timing_{}_{seed}.csv", algo.tag())), &timing)
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| RunnerError::io(path, e))
}

fn write_aggregate(path: &Path, agg: &Aggregate) -> Result<()> {
    let mut out = String::from("iteration,mean_best_reward,stderr_best_reward\n");
    for (i, (m, s)) in agg.mean.iter().zip(&agg.stderr).enumerate() {
        out.push_str(&format!("{},{m},{s}\n", i + 1));
    }
    write_file(path, &out)
}

fn write_solution(path: &Path, spec: &EnvironmentSpec, best: &BestSolution) -> Result<()> {
    let (nc, na) = (spec.num_contexts(), spec.num_actions());
    let counts = best.assignment.cell_counts(nc, na);
    let mut out = format!("# iteration={} reward={}\ncontext,action_id,label,count,xi\n", best.iteration, best.reward);
    for c in 0..nc {
        for a in 0..na {
            let xi = best.xi.as_ref().map(|x: &ConditionalDistribution| x.get(c, a).to_string()).unwrap_or_default();
            out.push_str(&format!("{c},{a},{},{},{xi}\n", spec.actions.labels()[a], counts[c * na + a]));
        }
    }
    write_file(path, &out)
}

/// Reads the best-reward column of a run CSV.
pub fn read_run_csv(path: &Path) -> Result<Vec<RunRecord>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| RunnerError::csv(path, e))?;
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| RunnerError::csv(path, e))?;
        let field = |i: usize| -> Result<f64> {
            row.get(i)
                .and_then(|s| s.parse::<f64>().ok())
                .ok_or_else(|| RunnerError::Config(format!("{}: malformed row {row:?}", path.display())))
        };
        out.push(RunRecord {
            iteration: field(0)? as usize,
            reward: field(1)?,
            best_reward: field(2)?,
            observed_y: field(3)?,
            wall_ms: 0.0,
        });
    }
    Ok(out)
}

/// Groups `run_<algo>_<seed>.csv` files of a directory by algorithm,
/// seeds in ascending order.
fn collect_runs(dir: &Path) -> Result<BTreeMap<Algorithm, Vec<(u64, PathBuf)>>> {
    let mut found: BTreeMap<Algorithm, Vec<(u64, PathBuf)>> = BTreeMap::new();
    let entries = std::fs::read_dir(dir).map_err(|e| RunnerError::io(dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| RunnerError::io(dir, e))?.path();
        let Some(stem) = path.file_name().and_then(|n| n.to_str()).and_then(|n| n.strip_suffix(".csv")) else {
            continue;
        };
        let Some(rest) = stem.strip_prefix("run_") else { continue };
        let Some((tag, seed)) = rest.rsplit_once('_') else { continue };
        if let (Some(algo), Ok(seed)) = (Algorithm::from_tag(tag), seed.parse::<u64>()) {
            found.entry(algo).or_default().push((seed, path));
        }
    }
    for v in found.values_mut() {
        v.sort();
    }
    Ok(found)
}

/// Recomputes `agg_<algo>.csv` from the run files in `dir`.
pub fn aggregate_dir(dir: &Path) -> Result<BTreeMap<Algorithm, Aggregate>> {
    let runs = collect_runs(dir)?;
    if runs.is_empty() {
        return Err(RunnerError::Config(format!("no run_<algo>_<seed>.csv files in {}", dir.display())));
    }
    let mut out = BTreeMap::new();
    for (algo, files) in runs {
        let curves = files
            .iter()
            .map(|(_, p)| Ok(read_run_csv(p)?.into_iter().map(|r| r.best_reward).collect()))
            .collect::<Result<Vec<Vec<f64>>>>()?;
        let agg = aggregate_best(&curves);
        write_aggregate(&dir.join(format!("agg_{}.csv", algo.tag())), &agg)?;
        out.insert(algo, agg);
    }
    Ok(out)
}

fn read_aggregate(path: &Path) -> Result<Aggregate> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| RunnerError::csv(path, e))?;
    let mut agg = Aggregate { mean: Vec::new(), stderr: Vec::new() };
    for row in rdr.deserialize::<(usize, f64, f64)>() {
        let (_, m, s) = row.map_err(|e| RunnerError::csv(path, e))?;
        agg.mean.push(m);
        agg.stderr.push(s);
    }
    Ok(agg)
}

fn read_solution(path: &Path) -> Result<HistogramData> {
    let mut rdr =
        csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path).map_err(|e| RunnerError::csv(path, e))?;
    let mut cells: Vec<(usize, usize, String, usize)> = Vec::new();
    for row in rdr.deserialize::<(usize, usize, String, usize, String)>() {
        let (c, a, label, count, _) = row.map_err(|e| RunnerError::csv(path, e))?;
        cells.push((c, a, label, count));
    }
    let nc = cells.iter().map(|x| x.0 + 1).max().unwrap_or(0);
    let na = cells.iter().map(|x| x.1 + 1).max().unwrap_or(0);
    let mut labels = vec![String::new(); na];
    let mut counts = vec![vec![0; na]; nc];
    for (c, a, label, count) in cells {
        labels[a] = label;
        counts[c][a] = count;
    }
    Ok(HistogramData { labels, counts })
}

/// Regenerates `convergence.svg` and `histogram.svg` from the aggregate
/// and solution files in `dir`. The histogram shows the MF-GP-UCB solution
/// when present, else the first algorithm with a solution file.
pub fn write_plots(dir: &Path) -> Result<()> {
    let mut series = Vec::new();
    for algo in Algorithm::ALL {
        let path = dir.join(format!("agg_{}.csv", algo.tag()));
        if path.exists() {
            series.push((algo.tag().to_string(), read_aggregate(&path)?));
        }
    }
    if series.is_empty() {
        return Err(RunnerError::Config(format!("no agg_<algo>.csv files in {}", dir.display())));
    }
    write_file(&dir.join("convergence.svg"), &render_convergence_svg(&series))?;
    let solution =
        Algorithm::ALL.iter().map(|a| (a, dir.join(format!("solution_{}.csv", a.tag())))).find(|(_, p)| p.exists());
    if let Some((algo, path)) = solution {
        let hist = read_solution(&path)?;
        write_file(&dir.join("histogram.svg"), &render_histogram_svg(&hist, algo.tag()))?;
    }
    Ok(())
}
