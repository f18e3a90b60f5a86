//! Python bindings for the `mfbo` crate.
//!
//! Distributions cross the boundary as lists of rows, one row per context.

use std::path::PathBuf;

use mfbo::acquisition::{self, AcqOptConfig, BetaMode, BetaSchedule};
use mfbo::envs::{self, EnvironmentSpec};
use mfbo::gp::{
    self, AdditiveKernel, FitOptions, GpInput, GpPosterior, InputShape, KernelParams, NoiseModel, ObservationBuffer,
};
use mfbo::meanfield::{self, ActionSet, ConditionalDistribution, Logits};
use mfbo::runner::{self, ExperimentConfig, RunnerError};
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runner_err(e: RunnerError) -> PyErr {
    match e.exit_code() {
        1 => PyValueError::new_err(e.to_string()),
        3 => PyOSError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// `(algorithm, mean_best, stderr_best)` per algorithm.
type Curves = Vec<(String, Vec<f64>, Vec<f64>)>;

fn to_xi(rows: Vec<Vec<f64>>) -> PyResult<ConditionalDistribution> {
    let nc = rows.len();
    let na = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != na) {
        return Err(PyValueError::new_err("all rows must have the same length"));
    }
    ConditionalDistribution::unflatten(rows.into_iter().flatten().collect(), nc, na).map_err(value_err)
}

/// Row-wise softmax of a logit matrix.
#[pyfunction]
fn softmax_rows(logits: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    meanfield::softmax_rows(&Logits::from_rows(&logits)).rows()
}

/// Jensen-Shannon divergence in nats.
#[pyfunction]
fn js_divergence(p: Vec<f64>, q: Vec<f64>) -> PyResult<f64> {
    if p.len() != q.len() {
        return Err(PyValueError::new_err("p and q must have the same length"));
    }
    Ok(envs::js_divergence(&p, &q))
}

/// `log |Ξ_t|` of the theoretical schedule.
#[pyfunction]
#[pyo3(signature = (t, num_actions, num_contexts, a=1.0, b=1.0))]
fn log_xi_cardinality(t: u64, num_actions: usize, num_contexts: usize, a: f64, b: f64) -> PyResult<f64> {
    if t < 1 {
        return Err(PyValueError::new_err("t starts at 1"));
    }
    Ok(acquisition::log_xi_cardinality(t, num_actions, num_contexts, a, b))
}

/// Exploration weight; `mode` is "theoretical", "constant" or "log_growth".
#[pyfunction]
#[pyo3(signature = (t, num_actions, num_contexts, mode="theoretical", a=1.0, b=1.0, constant=2.0, log_scale=2.0))]
#[allow(clippy::too_many_arguments)]
fn beta_value(
    t: u64,
    num_actions: usize,
    num_contexts: usize,
    mode: &str,
    a: f64,
    b: f64,
    constant: f64,
    log_scale: f64,
) -> PyResult<f64> {
    let mode = match mode {
        "theoretical" => BetaMode::Theoretical,
        "constant" => BetaMode::Constant,
        "log_growth" => BetaMode::LogGrowth,
        other => return Err(PyValueError::new_err(format!("unknown beta mode {other:?}"))),
    };
    if t < 1 {
        return Err(PyValueError::new_err("t starts at 1"));
    }
    Ok(acquisition::beta_value(t, num_actions, num_contexts, &BetaSchedule { mode, a, b, constant, log_scale }))
}

/// A multi-agent environment.
#[pyclass(name = "Environment", module = "mfbo_py", frozen)]
struct PyEnvironment {
    spec: EnvironmentSpec,
}

#[pymethods]
impl PyEnvironment {
    #[staticmethod]
    #[pyo3(signature = (population, num_actions, sigma=10.0, noise_std=0.0))]
    fn swarm(population: usize, num_actions: usize, sigma: f64, noise_std: f64) -> PyResult<Self> {
        Ok(Self { spec: EnvironmentSpec::swarm(population, num_actions, sigma, noise_std).map_err(value_err)? })
    }

    #[staticmethod]
    #[pyo3(signature = (population, num_actions, sigma=10.0, noise_std=0.0))]
    fn arena(population: usize, num_actions: usize, sigma: f64, noise_std: f64) -> PyResult<Self> {
        Ok(Self { spec: EnvironmentSpec::arena(population, num_actions, sigma, noise_std).map_err(value_err)? })
    }

    /// Demand matching with actions embedded at their index.
    #[staticmethod]
    #[pyo3(signature = (demand, population, noise_std=0.0, deterministic=false))]
    fn demand_matching(demand: Vec<f64>, population: usize, noise_std: f64, deterministic: bool) -> PyResult<Self> {
        let actions = ActionSet::new((0..demand.len()).map(|i| vec![i as f64]).collect(), None).map_err(value_err)?;
        let spec = EnvironmentSpec::demand_matching(actions, demand, population, noise_std, deterministic)
            .map_err(value_err)?;
        Ok(Self { spec })
    }

    #[getter]
    fn num_actions(&self) -> usize {
        self.spec.num_actions()
    }

    #[getter]
    fn num_contexts(&self) -> usize {
        self.spec.num_contexts()
    }

    #[getter]
    fn population(&self) -> usize {
        self.spec.population_m
    }

    /// One round under `xi`: returns `(observed_y, system_reward, action, context)`
    /// where the last two belong to the representative agent.
    fn step(&self, xi: Vec<Vec<f64>>, seed: u64) -> PyResult<(f64, f64, usize, usize)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let out = envs::env_step(&self.spec, &to_xi(xi)?, &mut rng).map_err(value_err)?;
        let (a, c) = out.representative();
        Ok((out.observed_y, out.system_reward, a, c))
    }

    /// Reward at the population limit, where the histogram equals `xi`.
    fn mean_field_reward(&self, xi: Vec<Vec<f64>>) -> PyResult<f64> {
        envs::mean_field_reward(&self.spec, &to_xi(xi)?).map_err(value_err)
    }

    /// Exhaustive simplex-grid search; only for `|A||C| <= 4`.
    fn brute_force_optimum(&self, resolution: usize) -> PyResult<(Vec<Vec<f64>>, f64)> {
        let (xi, g) = runner::brute_force_optimum(&self.spec, resolution).map_err(runner_err)?;
        Ok((xi.rows(), g))
    }

    fn __repr__(&self) -> String {
        format!(
            "Environment({:?}, population={}, actions={}, contexts={})",
            self.spec.kind,
            self.spec.population_m,
            self.spec.num_actions(),
            self.spec.num_contexts()
        )
    }
}

/// GP over `(action, context, distribution)` inputs.
#[pyclass(name = "GaussianProcess", module = "mfbo_py")]
struct PyGp {
    kernel: AdditiveKernel,
    noise: NoiseModel,
    buffer: ObservationBuffer,
    posterior: Option<GpPosterior>,
}

#[pymethods]
impl PyGp {
    #[new]
    #[pyo3(signature = (
        action_dim, context_dim, num_actions, num_contexts,
        lengthscale_action=1.0, lengthscale_context=1.0, lengthscale_dist=1.0, output_scale=1.0, noise_std=0.1
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        action_dim: usize,
        context_dim: usize,
        num_actions: usize,
        num_contexts: usize,
        lengthscale_action: f64,
        lengthscale_context: f64,
        lengthscale_dist: f64,
        output_scale: f64,
        noise_std: f64,
    ) -> PyResult<Self> {
        let params = KernelParams {
            lengthscale_action,
            lengthscale_context,
            lengthscale_dist,
            output_scale,
            ..KernelParams::default()
        };
        let shape = InputShape { action_dim, context_dim, num_actions, num_contexts };
        if noise_std.is_nan() || noise_std < 0.0 {
            return Err(PyValueError::new_err("noise_std must be nonnegative"));
        }
        Ok(Self {
            kernel: AdditiveKernel::new(params, shape).map_err(value_err)?,
            noise: NoiseModel::new(noise_std),
            buffer: ObservationBuffer::new(),
            posterior: None,
        })
    }

    /// Adds one observation; `dist` is the flattened distribution.
    fn add(&mut self, action: Vec<f64>, context: Vec<f64>, dist: Vec<f64>, y: f64) -> PyResult<()> {
        let z = GpInput::new(action, context, dist);
        self.kernel.check(&z).map_err(value_err)?;
        self.buffer.push(z, y);
        self.posterior = None;
        Ok(())
    }

    #[pyo3(signature = (standardize=true))]
    fn fit(&mut self, standardize: bool) -> PyResult<()> {
        self.posterior =
            Some(gp::fit(&self.buffer, self.kernel, self.noise, FitOptions { standardize }).map_err(value_err)?);
        Ok(())
    }

    /// Posterior `(mean, variance)`.
    fn predict(&self, action: Vec<f64>, context: Vec<f64>, dist: Vec<f64>) -> PyResult<(f64, f64)> {
        self.fitted()?.mean_var(&GpInput::new(action, context, dist)).map_err(value_err)
    }

    /// Maximises the acquisition for `env` and returns `(xi_rows, value)`.
    #[pyo3(signature = (env, beta=2.0, seed=0, steps=200, restarts=8, learning_rate=0.01))]
    #[allow(clippy::too_many_arguments)]
    fn optimize_acquisition(
        &self,
        env: &PyEnvironment,
        beta: f64,
        seed: u64,
        steps: usize,
        restarts: usize,
        learning_rate: f64,
    ) -> PyResult<(Vec<Vec<f64>>, f64)> {
        let cfg = AcqOptConfig { steps, restarts, learning_rate, ..AcqOptConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = acquisition::optimize_acquisition(
            self.posterior.as_ref(),
            beta,
            &env.spec.contexts,
            &env.spec.actions,
            &cfg,
            &mut rng,
        )
        .map_err(value_err)?;
        Ok((p.xi.rows(), p.value))
    }

    fn __len__(&self) -> usize {
        self.buffer.len()
    }
}

impl PyGp {
    fn fitted(&self) -> PyResult<&GpPosterior> {
        self.posterior.as_ref().ok_or_else(|| PyRuntimeError::new_err("call fit() first"))
    }
}

/// Runs a TOML experiment config and returns
/// `{algorithm: (mean_best, stderr_best)}` per-iteration curves.
#[pyfunction]
#[pyo3(signature = (config, output_dir=None))]
fn run_experiment(py: Python<'_>, config: PathBuf, output_dir: Option<PathBuf>) -> PyResult<Curves> {
    let mut cfg = ExperimentConfig::load(&config).map_err(runner_err)?;
    if let Some(dir) = output_dir {
        cfg.output_dir = dir;
    }
    let summary = py.detach(|| runner::run_experiment(&cfg)).map_err(runner_err)?;
    Ok(summary.aggregates.into_iter().map(|(a, agg)| (a.tag().to_string(), agg.mean, agg.stderr)).collect())
}

#[pymodule]
fn mfbo_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(softmax_rows, m)?)?;
    m.add_function(wrap_pyfunction!(js_divergence, m)?)?;
    m.add_function(wrap_pyfunction!(log_xi_cardinality, m)?)?;
    m.add_function(wrap_pyfunction!(beta_value, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_class::<PyEnvironment>()?;
    m.add_class::<PyGp>()?;
    Ok(())
}
