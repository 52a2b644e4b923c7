//! The generational QD loop: initialise an archive from a batch, then
//! repeatedly emit, score, rank, add and measure.

use std::time::Instant;

use rand::Rng;

use crate::containers::{MoRepertoire, ParentPool, Repertoire};
use crate::emitters::{EmitContext, Emitter};
use crate::error::{QdError, Result};
use crate::exec::Executor;
use crate::metrics::{compute_metrics, compute_mome_metrics, QdMetrics};
use crate::rng::RngStream;
use crate::tasks::Task;
use crate::types::{Bounds, Genotype, Improvement, MetricsRecord, ScoringResult};

/// Archive driven by the loop: one elite per cell, or one front per cell.
#[derive(Clone, Debug, PartialEq)]
pub enum QdArchive {
    Elites(Repertoire),
    Fronts(MoRepertoire),
}

impl QdArchive {
    pub fn pool(&self) -> &dyn ParentPool {
        match self {
            QdArchive::Elites(r) => r,
            QdArchive::Fronts(r) => r,
        }
    }

    pub fn d_dims(&self) -> usize {
        match self {
            QdArchive::Elites(r) => r.container().d_dims(),
            QdArchive::Fronts(r) => r.container().d_dims(),
        }
    }

    /// How each result would change the archive as it stands.
    pub fn classify(&self, results: &[ScoringResult]) -> Result<Vec<Improvement>> {
        results
            .iter()
            .map(|res| match self {
                QdArchive::Elites(r) => Ok(r.classify(r.cell_of(res)?, res.fitness())),
                QdArchive::Fronts(r) => r.classify(r.cell_of(res)?, &res.objectives),
            })
            .collect()
    }

    /// Adds a batch in emission order.
    pub fn add_batch(&mut self, genotypes: &[Genotype], results: &[ScoringResult]) -> Result<usize> {
        let mut kept = 0;
        for (g, res) in genotypes.iter().zip(results) {
            let added = match self {
                QdArchive::Elites(r) => r.add(g, res)?,
                QdArchive::Fronts(r) => r.add(g, res)?,
            };
            kept += usize::from(added);
        }
        Ok(kept)
    }

    pub fn metrics(&self, qd_offset: f64) -> Result<QdMetrics> {
        match self {
            QdArchive::Elites(r) => Ok(compute_metrics(r, qd_offset)),
            QdArchive::Fronts(r) => compute_mome_metrics(r),
        }
    }
}

/// `count` uniform genotypes in `bounds`, candidate `i` drawn from `rng.child(i)`.
pub fn uniform_genotypes(bounds: &Bounds, count: usize, rng: &RngStream) -> Vec<Genotype> {
    (0..count)
        .map(|i| {
            let mut r = rng.child(i as u64);
            bounds
                .lower
                .iter()
                .zip(&bounds.upper)
                .map(|(lo, hi)| lo + (hi - lo) * r.random::<f64>())
                .collect()
        })
        .collect()
}

/// Loop state. Stream layout: `rng.child(0)` initialises the emitter, step
/// `t >= 1` uses `rng.child(t)`, of which child 0 drives emission and child 1
/// drives `tell`.
pub struct QdLoop<'a> {
    task: &'a Task,
    executor: &'a Executor,
    archive: QdArchive,
    emitter: Box<dyn Emitter>,
    rng: RngStream,
    qd_offset: f64,
    iteration: u64,
    evaluations: u64,
    started: Instant,
}

impl<'a> QdLoop<'a> {
    /// Scores `init` in parallel, offers it to `archive` in order, then
    /// initialises the emitter. Returns the loop and the iteration-0 record.
    #[allow(clippy::too_many_arguments)]
    pub fn init(
        task: &'a Task,
        executor: &'a Executor,
        mut archive: QdArchive,
        mut emitter: Box<dyn Emitter>,
        init: &[Genotype],
        batch_size: usize,
        qd_offset: f64,
        rng: RngStream,
    ) -> Result<(Self, MetricsRecord)> {
        let started = Instant::now();
        if init.is_empty() {
            return Err(QdError::InvalidArgument("initial batch is empty".into()));
        }
        if task.spec().d_dims != archive.d_dims() {
            return Err(QdError::Config(format!(
                "task {} has {} descriptor dimensions but the container has {}",
                task.spec().name,
                task.spec().d_dims,
                archive.d_dims()
            )));
        }
        if let Some(g) = init.iter().find(|g| !task.bounds().contains(g)) {
            return Err(QdError::InvalidArgument(format!(
                "initial genotype of length {} outside the task domain",
                g.len()
            )));
        }
        if emitter.requires_gradients() && !task.spec().differentiable {
            return Err(QdError::Config(format!(
                "emitter {} needs gradients but task {} is not differentiable",
                emitter.name(),
                task.spec().name
            )));
        }
        if emitter.requires_single_objective() && task.spec().n_objectives != 1 {
            return Err(QdError::Config(format!(
                "emitter {} needs a single-objective task",
                emitter.name()
            )));
        }
        let results = executor.try_map(init.len(), |i| task.evaluate(&init[i]))?;
        archive.add_batch(init, &results)?;
        let ctx = EmitContext { task, executor };
        emitter.init(archive.pool(), &ctx, batch_size, &rng.child(0))?;
        let lp = Self {
            task,
            executor,
            archive,
            emitter,
            rng,
            qd_offset,
            iteration: 0,
            evaluations: init.len() as u64,
            started,
        };
        let record = lp.record()?;
        Ok((lp, record))
    }

    /// One generation of exactly `batch_size` evaluations.
    pub fn step(&mut self, batch_size: usize) -> Result<MetricsRecord> {
        if batch_size == 0 {
            return Err(QdError::InvalidArgument("batch size must be at least 1".into()));
        }
        self.iteration += 1;
        let step_rng = self.rng.child(self.iteration);
        let ctx = EmitContext {
            task: self.task,
            executor: self.executor,
        };
        let offspring = self
            .emitter
            .emit(self.archive.pool(), &ctx, batch_size, &step_rng.child(0))?;
        if offspring.len() != batch_size {
            return Err(QdError::Emitter(format!(
                "emitter {} produced {} candidates, expected {batch_size}",
                self.emitter.name(),
                offspring.len()
            )));
        }
        let task = self.task;
        let results = self
            .executor
            .try_map(offspring.len(), |i| task.evaluate(&offspring[i]))?;
        let improvements = self.archive.classify(&results)?;
        self.emitter.tell(
            self.archive.pool(),
            &ctx,
            &offspring,
            &results,
            &improvements,
            &step_rng.child(1),
        )?;
        self.archive.add_batch(&offspring, &results)?;
        self.evaluations += batch_size as u64;
        self.record()
    }

    fn record(&self) -> Result<MetricsRecord> {
        let m = self.archive.metrics(self.qd_offset)?;
        Ok(MetricsRecord {
            iteration: self.iteration,
            evaluations: self.evaluations,
            qd_score: m.qd_score,
            coverage: m.coverage,
            max_fitness: m.max_fitness,
            wall_time_ms: self.started.elapsed().as_secs_f64() * 1e3,
        })
    }

    pub fn archive(&self) -> &QdArchive {
        &self.archive
    }

    pub fn into_archive(self) -> QdArchive {
        self.archive
    }

    pub fn emitter(&self) -> &dyn Emitter {
        self.emitter.as_ref()
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn evaluations(&self) -> u64 {
        self.evaluations
    }
}
