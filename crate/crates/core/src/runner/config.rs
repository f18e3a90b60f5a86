//! TOML experiment configuration and its resolution into runnable parts.
//!
//! Relative paths inside a config (distribution files, trip files, the
//! output directory) are resolved against the config file's directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::acquisition::{AcqOptConfig, BetaSchedule};
use crate::baselines::{GaConfig, SaConfig};
use crate::data::{load_distribution, ColumnMapping, DataError, DemandEstimateConfig, GridSpec};
use crate::envs::{EnvKind, EnvironmentSpec};
use crate::gp::{FitOptions, KernelParams, NoiseModel, RbfForm};
use crate::meanfield::{ActionSet, ContextMeasure};

use super::RunnerError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    MfGpUcb,
    Random,
    SimulatedAnnealing,
    GeneticAlgorithm,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] =
        [Algorithm::MfGpUcb, Algorithm::Random, Algorithm::SimulatedAnnealing, Algorithm::GeneticAlgorithm];

    /// Short tag used in file names.
    pub fn tag(self) -> &'static str {
        match self {
            Self::MfGpUcb => "mf_gp_ucb",
            Self::Random => "random",
            Self::SimulatedAnnealing => "simulated_annealing",
            Self::GeneticAlgorithm => "genetic_algorithm",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.tag() == tag)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_algorithms")]
    pub algorithms: Vec<Algorithm>,
    pub output_dir: PathBuf,
    pub environment: EnvironmentConfig,
    #[serde(default)]
    pub kernel: KernelConfig,
    #[serde(default)]
    pub beta: BetaSchedule,
    #[serde(default)]
    pub acquisition: AcqOptConfig,
    #[serde(default)]
    pub sa: SaConfig,
    #[serde(default)]
    pub ga: GaConfig,
    #[serde(default)]
    pub oracle: OracleConfig,
    /// Trip ingestion settings for `mfbo demand`.
    #[serde(default)]
    pub demand: Option<DemandIngestConfig>,
    /// Directory that relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_budget() -> usize {
    250
}

fn default_seeds() -> Vec<u64> {
    (0..10).collect()
}

fn default_algorithms() -> Vec<Algorithm> {
    Algorithm::ALL.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentConfig {
    pub kind: EnvKind,
    /// Population size `M`.
    pub population: usize,
    #[serde(default)]
    pub noise_std: f64,
    #[serde(default)]
    pub deterministic_mode: bool,
    /// Number of angles (swarm, arena).
    #[serde(default)]
    pub num_actions: Option<usize>,
    #[serde(default)]
    pub congestion_sigma: Option<f64>,
    /// Inline demand vector (demand matching).
    #[serde(default)]
    pub demand: Option<Vec<f64>>,
    /// Distribution file written by `mfbo demand` (demand matching).
    #[serde(default)]
    pub demand_file: Option<PathBuf>,
    /// When set, demand labels are grid cell indices and actions are
    /// embedded at their normalised (row, col) centres.
    #[serde(default)]
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub maritime: Option<MaritimeConfig>,
}

/// Ports and regions of the refuelling environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaritimeConfig {
    /// CSV with columns `label,region,capacity,lat,lon`. Capacities are
    /// normalised to sum to one.
    pub ports_file: PathBuf,
    /// Embedding of each region (context).
    pub region_coords: Vec<Vec<f64>>,
    /// Context probabilities; uniform when absent.
    #[serde(default)]
    pub region_probs: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
struct PortRow {
    label: String,
    region: usize,
    capacity: f64,
    lat: f64,
    lon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelConfig {
    /// Defaults to a fifth of the action set's diameter.
    pub lengthscale_action: Option<f64>,
    /// Defaults to a fifth of the context diameter (1 for a single context).
    pub lengthscale_context: Option<f64>,
    pub lengthscale_dist: f64,
    pub output_scale: f64,
    /// Observation noise of the surrogate, in standardised units when
    /// `standardize` is on.
    pub noise_std: f64,
    pub standardize: bool,
    pub rbf_form: RbfForm,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            lengthscale_action: None,
            lengthscale_context: None,
            lengthscale_dist: 0.5,
            output_scale: 1.0,
            noise_std: 0.1,
            standardize: true,
            rbf_form: RbfForm::SquaredExponential,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub resolution: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self { resolution: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemandIngestConfig {
    pub columns: ColumnMapping,
    #[serde(default, flatten)]
    pub filter: DemandEstimateConfig,
    /// Where `mfbo demand` writes the estimated distribution.
    pub output: PathBuf,
}

/// Everything a single run needs, with defaults filled in.
#[derive(Debug, Clone)]
pub struct ResolvedExperiment {
    pub spec: EnvironmentSpec,
    pub kernel: KernelParams,
    pub gp_noise: NoiseModel,
    pub fit: FitOptions,
    pub beta: BetaSchedule,
    pub acquisition: AcqOptConfig,
    pub sa: SaConfig,
    pub ga: GaConfig,
    pub budget: usize,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self, RunnerError> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| RunnerError::Config(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, RunnerError> {
        let text = std::fs::read_to_string(path).map_err(|e| RunnerError::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml_str(&text, base)
    }

    pub fn resolve_path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_path(&self) -> PathBuf {
        self.resolve_path(&self.output_dir)
    }

    fn validate(&self) -> Result<(), RunnerError> {
        let bad = |m: &str| Err(RunnerError::Config(m.to_string()));
        if self.budget < 1 {
            return bad("budget must be >= 1");
        }
        if self.seeds.is_empty() {
            return bad("seeds must not be empty");
        }
        if self.algorithms.is_empty() {
            return bad("algorithms must not be empty");
        }
        let mut seen = self.algorithms.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.algorithms.len() {
            return bad("algorithms must not repeat");
        }
        if self.oracle.resolution < 1 {
            return bad("oracle.resolution must be >= 1");
        }
        Ok(())
    }

    pub fn build_environment(&self) -> Result<EnvironmentSpec, RunnerError> {
        self.build_environment_inner().map_err(as_config_error)
    }

    fn build_environment_inner(&self) -> Result<EnvironmentSpec, RunnerError> {
        let e = &self.environment;
        let need = |what: &str| RunnerError::Config(format!("{:?} environment needs `{what}`", e.kind));
        let spec = match e.kind {
            EnvKind::Swarm | EnvKind::Arena => {
                let na = e.num_actions.ok_or_else(|| need("num_actions"))?;
                let sigma = e.congestion_sigma.ok_or_else(|| need("congestion_sigma"))?;
                if e.kind == EnvKind::Swarm {
                    EnvironmentSpec::swarm(e.population, na, sigma, e.noise_std)?
                } else {
                    EnvironmentSpec::arena(e.population, na, sigma, e.noise_std)?
                }
            }
            EnvKind::DemandMatching => {
                let (labels, demand) = match (&e.demand, &e.demand_file) {
                    (Some(d), None) => ((0..d.len()).map(|i| i.to_string()).collect(), d.clone()),
                    (None, Some(path)) => {
                        let file = load_distribution(&self.resolve_path(path))?;
                        (file.labels, file.probs)
                    }
                    _ => return Err(RunnerError::Config("set exactly one of `demand` and `demand_file`".into())),
                };
                let actions = demand_actions(&labels, e.grid.as_ref())?;
                EnvironmentSpec::demand_matching(actions, demand, e.population, e.noise_std, false)?
            }
            EnvKind::Maritime => {
                let m = e.maritime.as_ref().ok_or_else(|| need("maritime"))?;
                let path = self.resolve_path(&m.ports_file);
                let mut rdr = csv::Reader::from_path(&path).map_err(|err| RunnerError::csv(&path, err))?;
                let ports = rdr
                    .deserialize::<PortRow>()
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|err| RunnerError::csv(&path, err))?;
                let total: f64 = ports.iter().map(|p| p.capacity).sum();
                if !(total > 0.0) {
                    return Err(RunnerError::Config("port capacities must have a positive sum".into()));
                }
                let capacity = ports.iter().map(|p| p.capacity / total).collect();
                let region = ports.iter().map(|p| p.region).collect();
                let labels = ports.iter().map(|p| p.label.clone()).collect();
                let actions = ActionSet::new(ports.iter().map(|p| vec![p.lat, p.lon]).collect(), Some(labels))?;
                let contexts = match &m.region_probs {
                    Some(probs) => ContextMeasure::new(m.region_coords.clone(), probs.clone())?,
                    None => ContextMeasure::uniform(m.region_coords.clone())?,
                };
                EnvironmentSpec::maritime(actions, contexts, capacity, region, e.population, e.noise_std)?
            }
        };
        Ok(spec.with_deterministic_mode(e.deterministic_mode))
    }

    pub fn resolve(&self) -> Result<ResolvedExperiment, RunnerError> {
        let spec = self.build_environment()?;
        let k = &self.kernel;
        let action_ls = k.lengthscale_action.unwrap_or_else(|| default_lengthscale(spec.actions.diameter()));
        let context_ls = k.lengthscale_context.unwrap_or_else(|| default_lengthscale(spec.contexts.diameter()));
        let kernel = KernelParams {
            lengthscale_action: action_ls,
            lengthscale_context: context_ls,
            lengthscale_dist: k.lengthscale_dist,
            output_scale: k.output_scale,
            rbf_form: k.rbf_form,
        };
        if !(k.noise_std >= 0.0) {
            return Err(RunnerError::Config("kernel.noise_std must be >= 0".into()));
        }
        Ok(ResolvedExperiment {
            spec,
            kernel,
            gp_noise: NoiseModel::new(k.noise_std),
            fit: FitOptions { standardize: k.standardize },
            beta: self.beta,
            acquisition: self.acquisition,
            sa: self.sa,
            ga: self.ga,
            budget: self.budget,
        })
    }
}

/// Invalid environment parameters are configuration problems; unreadable
/// files stay I/O errors.
fn as_config_error(e: RunnerError) -> RunnerError {
    match e {
        RunnerError::Env(e) => RunnerError::Config(e.to_string()),
        RunnerError::MeanField(e) => RunnerError::Config(e.to_string()),
        RunnerError::Data(e) if !matches!(e, DataError::Io { .. }) => RunnerError::Config(e.to_string()),
        other => other,
    }
}

fn default_lengthscale(diameter: f64) -> f64 {
    if diameter > 0.0 {
        0.2 * diameter
    } else {
        1.0
    }
}

/// Embeds demand-matching actions: grid cells at their normalised
/// centres, anything else by its position in the list.
fn demand_actions(labels: &[String], grid: Option<&GridSpec>) -> Result<ActionSet, RunnerError> {
    let embeddings = match grid {
        Some(g) => {
            g.validate()?;
            labels
                .iter()
                .map(|l| {
                    let cell: usize = l
                        .parse()
                        .ok()
                        .filter(|&c| c < g.num_cells())
                        .ok_or_else(|| RunnerError::Config(format!("label {l:?} is not a cell of the grid")))?;
                    let (r, c) = g.cell_position(cell);
                    Ok(vec![(r as f64 + 0.5) / g.rows as f64, (c as f64 + 0.5) / g.cols as f64])
                })
                .collect::<Result<Vec<_>, RunnerError>>()?
        }
        None => (0..labels.len()).map(|i| vec![i as f64]).collect(),
    };
    Ok(ActionSet::new_unchecked_size(embeddings, Some(labels.to_vec()))?)
}
