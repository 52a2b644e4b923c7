//! Experiment configuration: a closed JSON schema with documented defaults.
//!
//! ```json
//! {"task": {"name": "rastrigin", "n_params": 10},
//!  "algorithm": {"name": "map_elites"},
//!  "container": {"type": "grid", "dims": [50, 50]},
//!  "emitter": {"type": "isoline", "sigma_iso": 0.01, "sigma_line": 0.1},
//!  "budget": {"init_batch": 100, "batch_size": 100, "total_evaluations": 200000},
//!  "seed": 1}
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::containers::{
    compute_cvt_centroids, Container, CvtSpec, GridSpec, CVT_DEFAULT_LLOYD_ITERS, CVT_DEFAULT_SAMPLES,
};
use crate::emitters::{
    CmaMeEmitter, CmaMeParams, CmaMegaEmitter, CmaMegaParams, CompoundEmitter, Emitter, EsEmitter, EsParams, GaEmitter,
    IsolineParams, OmgMegaEmitter, OmgMegaParams,
};
use crate::error::{QdError, Result};
use crate::rng::RngStream;
use crate::tasks::{Task, TaskKind};
use crate::types::Bounds;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: TaskConfig,
    pub algorithm: AlgorithmConfig,
    #[serde(default)]
    pub container: ContainerConfig,
    #[serde(default)]
    pub emitter: EmitterConfig,
    pub budget: BudgetConfig,
    #[serde(default)]
    pub logging: LoggingConfig,
    pub seed: u64,
    /// Worker threads for scoring. Never affects results, so it is left out
    /// of the resolved snapshot.
    #[serde(default = "defaults::workers", skip_serializing)]
    pub workers: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    pub name: TaskKind,
    #[serde(default = "defaults::n_params")]
    pub n_params: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgorithmKind {
    MapElites,
    Mome,
    Nsga2,
    Spea2,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmConfig {
    pub name: AlgorithmKind,
    /// NSGA-II / SPEA2 population size; defaults to `budget.init_batch`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub population_size: Option<usize>,
    /// SPEA2 archive size; defaults to the population size.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub archive_size: Option<usize>,
    /// MOME per-cell front capacity.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub front_capacity: Option<usize>,
    /// Neighbour rank used by the SPEA2 density; defaults to
    /// `floor(sqrt(population_size + archive_size))`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spea2_k: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ContainerConfig {
    Grid {
        /// Cells per descriptor axis; defaults to 50 on every axis.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dims: Option<Vec<usize>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lower: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        upper: Option<Vec<f64>>,
    },
    Cvt {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        k: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lower: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        upper: Option<Vec<f64>>,
        #[serde(default = "defaults::n_samples")]
        n_samples: usize,
        #[serde(default = "defaults::lloyd_iters")]
        lloyd_iters: usize,
        /// Precomputed centroid file written by `qdlab centroids`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        centroids_path: Option<PathBuf>,
    },
}

impl Default for ContainerConfig {
    fn default() -> Self {
        ContainerConfig::Grid {
            dims: None,
            lower: None,
            upper: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EmitterConfig {
    Isoline(IsolineParams),
    CmaMe(CmaMeParams),
    OmgMega(OmgMegaParams),
    CmaMega(CmaMegaParams),
    Es(EsParams),
    Compound(CompoundConfig),
}

impl Default for EmitterConfig {
    fn default() -> Self {
        EmitterConfig::Isoline(IsolineParams::default())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompoundConfig {
    pub emitters: Vec<CompoundPart>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompoundPart {
    pub proportion: f64,
    pub emitter: EmitterConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetConfig {
    #[serde(default = "defaults::batch")]
    pub init_batch: usize,
    #[serde(default = "defaults::batch")]
    pub batch_size: usize,
    pub total_evaluations: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoggingConfig {
    /// Offset subtracted from every fitness in the QD score; defaults to the
    /// task's minimum fitness on its domain.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qd_offset: Option<f64>,
    #[serde(default = "defaults::metrics_path")]
    pub metrics_path: PathBuf,
    #[serde(default = "defaults::archive_path")]
    pub archive_path: PathBuf,
    #[serde(default = "defaults::log_every")]
    pub log_every: u64,
    /// Write measured wall time; when false the column is 0 so that files
    /// are byte-identical across runs.
    #[serde(default)]
    pub record_wall_time: bool,
}

impl Default for LoggingConfig {
    fn default() -> Self {
        Self {
            qd_offset: None,
            metrics_path: defaults::metrics_path(),
            archive_path: defaults::archive_path(),
            log_every: defaults::log_every(),
            record_wall_time: false,
        }
    }
}

mod defaults {
    use std::path::PathBuf;

    pub fn workers() -> usize {
        1
    }
    pub fn n_params() -> usize {
        10
    }
    pub fn n_samples() -> usize {
        super::CVT_DEFAULT_SAMPLES
    }
    pub fn lloyd_iters() -> usize {
        super::CVT_DEFAULT_LLOYD_ITERS
    }
    pub fn batch() -> usize {
        100
    }
    pub fn metrics_path() -> PathBuf {
        "metrics.csv".into()
    }
    pub fn archive_path() -> PathBuf {
        "archive.json".into()
    }
    pub fn log_every() -> u64 {
        10
    }
}

pub const DEFAULT_GRID_CELLS: usize = 50;
pub const DEFAULT_CVT_CELLS: usize = 1024;
pub const DEFAULT_FRONT_CAPACITY: usize = 10;

/// Reads and validates a config file; the result is resolved.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig =
        serde_json::from_str(text).map_err(|e| QdError::Config(format!("invalid config: {e}")))?;
    cfg.resolve()
}

impl ExperimentConfig {
    pub fn build_task(&self) -> Result<Task> {
        Task::new(self.task.name, self.task.n_params)
    }

    /// Fills every optional field with its default and validates the result.
    pub fn resolve(mut self) -> Result<Self> {
        let task = self.build_task()?;
        let spec = task.spec();
        match &mut self.container {
            ContainerConfig::Grid { dims, lower, upper } => {
                dims.get_or_insert_with(|| vec![DEFAULT_GRID_CELLS; spec.d_dims]);
                lower.get_or_insert_with(|| spec.descriptor_bounds.lower.clone());
                upper.get_or_insert_with(|| spec.descriptor_bounds.upper.clone());
            }
            ContainerConfig::Cvt {
                k,
                lower,
                upper,
                centroids_path,
                ..
            } => {
                if centroids_path.is_none() {
                    k.get_or_insert(DEFAULT_CVT_CELLS);
                    lower.get_or_insert_with(|| spec.descriptor_bounds.lower.clone());
                    upper.get_or_insert_with(|| spec.descriptor_bounds.upper.clone());
                }
            }
        }
        let alg = &mut self.algorithm;
        match alg.name {
            AlgorithmKind::MapElites => {
                if spec.n_objectives != 1 {
                    return Err(QdError::Config(format!(
                        "map_elites needs a single-objective task, {} has {} objectives",
                        spec.name, spec.n_objectives
                    )));
                }
                self.logging.qd_offset.get_or_insert(task.min_fitness());
            }
            AlgorithmKind::Mome => {
                alg.front_capacity.get_or_insert(DEFAULT_FRONT_CAPACITY);
            }
            AlgorithmKind::Nsga2 | AlgorithmKind::Spea2 => {
                let n = *alg.population_size.get_or_insert(self.budget.init_batch);
                if alg.name == AlgorithmKind::Spea2 {
                    let a = *alg.archive_size.get_or_insert(n);
                    alg.spea2_k
                        .get_or_insert(((n + a) as f64).sqrt().floor().max(1.0) as usize);
                }
            }
        }
        if matches!(
            alg.name,
            AlgorithmKind::Mome | AlgorithmKind::Nsga2 | AlgorithmKind::Spea2
        ) && spec.n_objectives < 2
        {
            return Err(QdError::Config(format!(
                "{:?} needs a multi-objective task, {} has one objective",
                alg.name, spec.name
            )));
        }
        self.validate(&task)?;
        Ok(self)
    }

    fn validate(&self, task: &Task) -> Result<()> {
        let b = &self.budget;
        if b.init_batch == 0 || b.batch_size == 0 {
            return Err(QdError::Validation(
                "init_batch and batch_size must be at least 1".into(),
            ));
        }
        if b.total_evaluations < b.init_batch as u64 {
            return Err(QdError::Validation(format!(
                "total_evaluations {} is smaller than init_batch {}",
                b.total_evaluations, b.init_batch
            )));
        }
        if self.workers == 0 {
            return Err(QdError::Validation("workers must be at least 1".into()));
        }
        if self.logging.log_every == 0 {
            return Err(QdError::Validation("log_every must be at least 1".into()));
        }
        let alg = &self.algorithm;
        if alg.front_capacity == Some(0) {
            return Err(QdError::Validation("front_capacity must be at least 1".into()));
        }
        if let Some(n) = alg.population_size {
            if n < 2 || (alg.name == AlgorithmKind::Nsga2 && n % 2 != 0) {
                return Err(QdError::Config(format!(
                    "population_size must be even and at least 2, got {n}"
                )));
            }
            if alg.name == AlgorithmKind::Nsga2 && b.init_batch != n {
                return Err(QdError::Validation(format!(
                    "nsga2 evaluates its initial population: init_batch {} must equal population_size {n}",
                    b.init_batch
                )));
            }
        }
        if alg.archive_size == Some(0) || alg.spea2_k == Some(0) {
            return Err(QdError::Validation(
                "archive_size and spea2_k must be at least 1".into(),
            ));
        }
        let uses_container = matches!(alg.name, AlgorithmKind::MapElites | AlgorithmKind::Mome);
        if uses_container {
            self.validate_container(task)?;
            validate_emitter(&self.emitter, task)?;
        }
        Ok(())
    }

    fn validate_container(&self, task: &Task) -> Result<()> {
        let d = task.spec().d_dims;
        let check_bounds = |lower: &Option<Vec<f64>>, upper: &Option<Vec<f64>>| -> Result<()> {
            if let (Some(l), Some(u)) = (lower, upper) {
                if l.len() != d || u.len() != d {
                    return Err(QdError::Config(format!(
                        "container bounds must have {d} entries (task descriptor dimension)"
                    )));
                }
                if !Bounds::new(l.clone(), u.clone()).is_valid() {
                    return Err(QdError::Validation("container bounds need lower < upper".into()));
                }
            }
            Ok(())
        };
        match &self.container {
            ContainerConfig::Grid { dims, lower, upper } => {
                let dims = dims.as_deref().unwrap_or_default();
                if dims.len() != d {
                    return Err(QdError::Config(format!(
                        "grid has {} axes but task {} has {d} descriptor dimensions",
                        dims.len(),
                        task.spec().name
                    )));
                }
                if dims.contains(&0) {
                    return Err(QdError::Validation("grid dims must be at least 1".into()));
                }
                check_bounds(lower, upper)
            }
            ContainerConfig::Cvt {
                k,
                lower,
                upper,
                n_samples,
                centroids_path,
                ..
            } => {
                if centroids_path.is_some() {
                    return Ok(());
                }
                let k = k.unwrap_or(DEFAULT_CVT_CELLS);
                if k == 0 || *n_samples < k {
                    return Err(QdError::Validation(format!(
                        "cvt needs 1 <= k <= n_samples, got k={k}, n_samples={n_samples}"
                    )));
                }
                check_bounds(lower, upper)
            }
        }
    }

    /// Builds the container; CVT centroids are computed from `rng` unless a
    /// centroid file is given (resolved relative to `base_dir`).
    pub fn build_container(&self, task: &Task, base_dir: &Path, rng: &RngStream) -> Result<Container> {
        let d = task.spec().d_dims;
        let bounds = |lower: &Option<Vec<f64>>, upper: &Option<Vec<f64>>| {
            Bounds::new(
                lower
                    .clone()
                    .unwrap_or_else(|| task.spec().descriptor_bounds.lower.clone()),
                upper
                    .clone()
                    .unwrap_or_else(|| task.spec().descriptor_bounds.upper.clone()),
            )
        };
        match &self.container {
            ContainerConfig::Grid { dims, lower, upper } => {
                let b = bounds(lower, upper);
                let dims = dims.clone().unwrap_or_else(|| vec![DEFAULT_GRID_CELLS; d]);
                Ok(Container::Grid(GridSpec::new(dims, b.lower, b.upper)?))
            }
            ContainerConfig::Cvt {
                k,
                lower,
                upper,
                n_samples,
                lloyd_iters,
                centroids_path,
            } => {
                let spec = match centroids_path {
                    Some(p) => load_centroids(&base_dir.join(p), &bounds(lower, upper))?,
                    None => {
                        let mut r = rng.clone();
                        compute_cvt_centroids(
                            k.unwrap_or(DEFAULT_CVT_CELLS),
                            &bounds(lower, upper),
                            *n_samples,
                            *lloyd_iters,
                            &mut r,
                        )?
                    }
                };
                if spec.d_dims() != d {
                    return Err(QdError::Config(format!(
                        "centroids have {} dimensions but the task descriptor has {d}",
                        spec.d_dims()
                    )));
                }
                Ok(Container::Cvt(spec))
            }
        }
    }

    pub fn build_emitter(&self) -> Result<Box<dyn Emitter>> {
        build_emitter(&self.emitter)
    }
}

fn validate_emitter(cfg: &EmitterConfig, task: &Task) -> Result<()> {
    let spec = task.spec();
    let gradient = matches!(cfg, EmitterConfig::OmgMega(_) | EmitterConfig::CmaMega(_));
    if gradient && !spec.differentiable {
        return Err(QdError::Config(format!(
            "gradient emitter needs a differentiable task, {} is not",
            spec.name
        )));
    }
    let scalar = matches!(
        cfg,
        EmitterConfig::CmaMe(_) | EmitterConfig::OmgMega(_) | EmitterConfig::CmaMega(_)
    );
    if scalar && spec.n_objectives != 1 {
        return Err(QdError::Config(format!(
            "emitter needs a single-objective task, {} has {} objectives",
            spec.name, spec.n_objectives
        )));
    }
    match cfg {
        EmitterConfig::Isoline(p) => p.validate(),
        EmitterConfig::CmaMe(p) => positive("cma_me sigma0", p.sigma0),
        EmitterConfig::OmgMega(p) => positive("omg_mega sigma_g", p.sigma_g),
        EmitterConfig::CmaMega(p) => {
            positive("cma_mega sigma0", p.sigma0)?;
            if !(p.eta >= 0.0 && p.eta.is_finite()) {
                return Err(QdError::Config(format!(
                    "cma_mega eta must be non-negative, got {}",
                    p.eta
                )));
            }
            Ok(())
        }
        EmitterConfig::Es(p) => p.validate(),
        EmitterConfig::Compound(c) => {
            if c.emitters.is_empty() {
                return Err(QdError::Validation("compound emitter needs at least one part".into()));
            }
            let sum: f64 = c.emitters.iter().map(|p| p.proportion).sum();
            if c.emitters.iter().any(|p| p.proportion.is_nan() || p.proportion < 0.0) || (sum - 1.0).abs() > 1e-9 {
                return Err(QdError::Validation(format!(
                    "compound proportions must be non-negative and sum to 1, got sum {sum}"
                )));
            }
            c.emitters.iter().try_for_each(|p| validate_emitter(&p.emitter, task))
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(QdError::Config(format!("{name} must be positive, got {v}")))
    }
}

pub fn build_emitter(cfg: &EmitterConfig) -> Result<Box<dyn Emitter>> {
    Ok(match cfg {
        EmitterConfig::Isoline(p) => Box::new(GaEmitter::new(*p)),
        EmitterConfig::CmaMe(p) => Box::new(CmaMeEmitter::new(*p)),
        EmitterConfig::OmgMega(p) => Box::new(OmgMegaEmitter::new(*p)),
        EmitterConfig::CmaMega(p) => Box::new(CmaMegaEmitter::new(*p)),
        EmitterConfig::Es(p) => Box::new(EsEmitter::new(*p)),
        EmitterConfig::Compound(c) => {
            let parts = c
                .emitters
                .iter()
                .map(|p| Ok((p.proportion, build_emitter(&p.emitter)?)))
                .collect::<Result<Vec<_>>>()?;
            Box::new(CompoundEmitter::new(parts)?)
        }
    })
}

/// Reads a centroid file written by `qdlab centroids`.
/// Reads a centroid file: either a bare JSON array of rows, which takes
/// `default_bounds`, or the object written by `qdlab centroids`.
pub fn load_centroids(path: &Path, default_bounds: &Bounds) -> Result<CvtSpec> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum CentroidFile {
        Rows(Vec<Vec<f64>>),
        Spec(CvtSpec),
    }
    let text = std::fs::read_to_string(path)?;
    let parsed = serde_json::from_str(&text).map_err(|e| QdError::Parse {
        offset: 0,
        message: format!("{}: {e}", path.display()),
    })?;
    match parsed {
        CentroidFile::Rows(rows) => CvtSpec::new(rows, default_bounds.clone()),
        CentroidFile::Spec(spec) => Ok(spec),
    }
}
