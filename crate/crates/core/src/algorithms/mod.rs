//! Complete optimizers assembled from containers, emitters and tasks.
//!
//! Random streams derived from the experiment seed: child 0 builds the
//! container (CVT centroids), child 1 draws the initial genotypes and child 2
//! drives the optimizer.

mod population;
mod qd_run;

use std::path::Path;

pub use population::{
    nsga2_run, nsga2_select, nsga2_step, spea2_run, spea2_select, spea2_step, Population, Spea2Params,
};
pub use qd_run::{map_elites_run, mome_run, qd_run};

use crate::archive_io::Archive;
use crate::config::{AlgorithmKind, ExperimentConfig};
use crate::error::Result;
use crate::exec::Executor;
use crate::rng::RngStream;
use crate::types::MetricsRecord;

pub(crate) const CONTAINER_STREAM: u64 = 0;
pub(crate) const INIT_STREAM: u64 = 1;
pub(crate) const LOOP_STREAM: u64 = 2;

/// Receives every metrics record as soon as it is produced.
pub type RecordSink<'a> = dyn FnMut(&MetricsRecord) -> Result<()> + 'a;

/// Runs the configured algorithm to its evaluation budget. Relative paths in
/// the config (centroid files) resolve against `base_dir`.
pub fn run_experiment(
    config: &ExperimentConfig,
    base_dir: &Path,
    executor: &Executor,
    sink: &mut RecordSink<'_>,
) -> Result<Archive> {
    let root = RngStream::new(config.seed);
    match config.algorithm.name {
        AlgorithmKind::MapElites | AlgorithmKind::Mome => qd_run(config, base_dir, executor, &root, sink),
        AlgorithmKind::Nsga2 => nsga2_run(config, executor, &root, sink).map(Archive::Population),
        AlgorithmKind::Spea2 => spea2_run(config, executor, &root, sink).map(Archive::Population),
    }
}

/// Collects the full metrics series of a run.
pub fn run_collect(config: &ExperimentConfig, executor: &Executor) -> Result<(Archive, Vec<MetricsRecord>)> {
    let mut records = Vec::new();
    let archive = run_experiment(config, Path::new("."), executor, &mut |r| {
        records.push(r.clone());
        Ok(())
    })?;
    Ok((archive, records))
}
