use std::path::Path;

use crate::algorithms::{RecordSink, CONTAINER_STREAM, INIT_STREAM, LOOP_STREAM};
use crate::archive_io::Archive;
use crate::config::{AlgorithmKind, ExperimentConfig, DEFAULT_FRONT_CAPACITY};
use crate::containers::{MoRepertoire, Repertoire};
use crate::error::{QdError, Result};
use crate::exec::Executor;
use crate::qd::{uniform_genotypes, QdArchive, QdLoop};
use crate::rng::RngStream;
use crate::types::MetricsRecord;

/// MAP-Elites or MOME, depending on `config.algorithm.name`. The last step is
/// shortened so that exactly `total_evaluations` candidates are scored.
pub fn qd_run(
    config: &ExperimentConfig,
    base_dir: &Path,
    executor: &Executor,
    root: &RngStream,
    sink: &mut RecordSink<'_>,
) -> Result<Archive> {
    let task = config.build_task()?;
    let budget = &config.budget;
    if budget.total_evaluations < budget.init_batch as u64 {
        return Err(QdError::Config(format!(
            "total_evaluations {} is smaller than init_batch {}",
            budget.total_evaluations, budget.init_batch
        )));
    }
    let container = config.build_container(&task, base_dir, &root.child(CONTAINER_STREAM))?;
    let archive = match config.algorithm.name {
        AlgorithmKind::MapElites => QdArchive::Elites(Repertoire::new(container)),
        AlgorithmKind::Mome => {
            if task.spec().n_objectives < 2 {
                return Err(QdError::Config(format!(
                    "mome needs a multi-objective task, {} has one objective",
                    task.spec().name
                )));
            }
            let cap = config.algorithm.front_capacity.unwrap_or(DEFAULT_FRONT_CAPACITY);
            QdArchive::Fronts(MoRepertoire::new(container, cap, task.objective_lower_bounds())?)
        }
        other => return Err(QdError::Config(format!("{other:?} is not an archive-based algorithm"))),
    };
    let init = uniform_genotypes(task.bounds(), budget.init_batch, &root.child(INIT_STREAM));
    let qd_offset = config.logging.qd_offset.unwrap_or_else(|| task.min_fitness());
    let (mut lp, first) = QdLoop::init(
        &task,
        executor,
        archive,
        config.build_emitter()?,
        &init,
        budget.batch_size,
        qd_offset,
        root.child(LOOP_STREAM),
    )?;
    sink(&first)?;
    while lp.evaluations() < budget.total_evaluations {
        let remaining = budget.total_evaluations - lp.evaluations();
        let batch = (budget.batch_size as u64).min(remaining) as usize;
        let rec = lp.step(batch)?;
        sink(&rec)?;
    }
    Ok(match lp.into_archive() {
        QdArchive::Elites(r) => Archive::Elites(r),
        QdArchive::Fronts(r) => Archive::Fronts(r),
    })
}

fn collect(config: &ExperimentConfig, executor: &Executor) -> Result<(Archive, Vec<MetricsRecord>)> {
    let mut records = Vec::new();
    let archive = qd_run(
        config,
        Path::new("."),
        executor,
        &RngStream::new(config.seed),
        &mut |r| {
            records.push(r.clone());
            Ok(())
        },
    )?;
    Ok((archive, records))
}

pub fn map_elites_run(config: &ExperimentConfig, executor: &Executor) -> Result<(Repertoire, Vec<MetricsRecord>)> {
    if config.algorithm.name != AlgorithmKind::MapElites {
        return Err(QdError::Config("config does not select map_elites".into()));
    }
    match collect(config, executor)? {
        (Archive::Elites(r), m) => Ok((r, m)),
        _ => unreachable!("map_elites produces an elite archive"),
    }
}

pub fn mome_run(config: &ExperimentConfig, executor: &Executor) -> Result<(MoRepertoire, Vec<MetricsRecord>)> {
    if config.algorithm.name != AlgorithmKind::Mome {
        return Err(QdError::Config("config does not select mome".into()));
    }
    match collect(config, executor)? {
        (Archive::Fronts(r), m) => Ok((r, m)),
        _ => unreachable!("mome produces a front archive"),
    }
}
