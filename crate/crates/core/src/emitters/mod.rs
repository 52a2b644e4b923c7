//! Solution-proposal strategies.
//!
//! An emitter is advanced once per step by the QD loop: `emit` proposes a
//! batch, the loop scores it, then `tell` receives the scores together with how
//! each candidate would change the archive as it stood before the batch was
//! added. Per-candidate randomness comes from children of the step stream, so
//! emission may run on the worker pool without affecting output.

pub mod cmaes;
pub mod cmame;
pub mod es;
pub mod isoline;
pub mod mega;

use crate::containers::ParentPool;
use crate::error::{QdError, Result};
use crate::exec::Executor;
use crate::rng::RngStream;
use crate::tasks::Task;
use crate::types::{Genotype, Improvement, ScoringResult};

pub use cmaes::{default_lambda, CmaesParams, CmaesState};
pub use cmame::{cmame_maybe_restart, cmame_rank, rank_by_improvement, CmaMeEmitter, CmaMeEmitterState, CmaMeParams};
pub use es::{es_emitter_step, es_gradient_estimate, novelty_score, EsEmitter, EsEmitterState, EsMode, EsParams};
pub use isoline::{isoline_variation, GaEmitter, IsolineParams};
pub use mega::{
    cma_mega_step, mega_offspring, normalized_gradients, omg_mega_emit, CmaMegaEmitter, CmaMegaParams,
    MegaCoefficients, OmgMegaEmitter, OmgMegaParams,
};

pub struct EmitContext<'a> {
    pub task: &'a Task,
    pub executor: &'a Executor,
}

pub trait Emitter: Send {
    fn name(&self) -> &'static str;

    /// Called once, after the initial batch has been added to the archive.
    fn init(&mut self, pool: &dyn ParentPool, ctx: &EmitContext<'_>, batch_size: usize, rng: &RngStream) -> Result<()>;

    fn emit(
        &mut self,
        pool: &dyn ParentPool,
        ctx: &EmitContext<'_>,
        count: usize,
        rng: &RngStream,
    ) -> Result<Vec<Genotype>>;

    /// Feedback for the batch returned by the previous `emit`. `pool` is the
    /// archive before the batch is added.
    fn tell(
        &mut self,
        pool: &dyn ParentPool,
        ctx: &EmitContext<'_>,
        offspring: &[Genotype],
        results: &[ScoringResult],
        improvements: &[Improvement],
        rng: &RngStream,
    ) -> Result<()>;

    fn requires_gradients(&self) -> bool {
        false
    }

    /// Whether the emitter ranks by a scalar fitness.
    fn requires_single_objective(&self) -> bool {
        false
    }
}

/// Splits `total` by cumulative rounding so the parts always sum to `total`.
pub fn allocate(proportions: &[f64], total: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(proportions.len());
    let mut cum = 0.0;
    let mut prev = 0usize;
    for (i, p) in proportions.iter().enumerate() {
        cum += p;
        let upto = if i + 1 == proportions.len() {
            total
        } else {
            ((cum * total as f64).round() as usize).min(total)
        };
        let upto = upto.max(prev);
        out.push(upto - prev);
        prev = upto;
    }
    out
}

/// Runs several emitters side by side, splitting every batch by fixed
/// proportions. Emission order is sub-emitter index, then each sub-emitter's
/// own order.
pub struct CompoundEmitter {
    parts: Vec<(f64, Box<dyn Emitter>)>,
    last_counts: Vec<usize>,
}

impl CompoundEmitter {
    pub fn new(parts: Vec<(f64, Box<dyn Emitter>)>) -> Result<Self> {
        if parts.is_empty() {
            return Err(QdError::Config("compound emitter needs at least one part".into()));
        }
        if parts.iter().any(|(p, _)| !(p.is_finite() && *p >= 0.0)) {
            return Err(QdError::Config("emitter proportions must be non-negative".into()));
        }
        let sum: f64 = parts.iter().map(|(p, _)| p).sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(QdError::Validation(format!(
                "emitter proportions sum to {sum}, expected 1"
            )));
        }
        Ok(Self {
            parts,
            last_counts: Vec::new(),
        })
    }

    fn proportions(&self) -> Vec<f64> {
        self.parts.iter().map(|(p, _)| *p).collect()
    }
}

impl Emitter for CompoundEmitter {
    fn name(&self) -> &'static str {
        "compound"
    }

    fn init(&mut self, pool: &dyn ParentPool, ctx: &EmitContext<'_>, batch_size: usize, rng: &RngStream) -> Result<()> {
        let counts = allocate(&self.proportions(), batch_size);
        for (j, ((_, e), n)) in self.parts.iter_mut().zip(counts).enumerate() {
            if n > 0 {
                e.init(pool, ctx, n, &rng.child(j as u64))?;
            }
        }
        Ok(())
    }

    fn emit(
        &mut self,
        pool: &dyn ParentPool,
        ctx: &EmitContext<'_>,
        count: usize,
        rng: &RngStream,
    ) -> Result<Vec<Genotype>> {
        let counts = allocate(&self.proportions(), count);
        let mut out = Vec::with_capacity(count);
        for (j, ((_, e), &n)) in self.parts.iter_mut().zip(&counts).enumerate() {
            if n > 0 {
                out.extend(e.emit(pool, ctx, n, &rng.child(j as u64))?);
            }
        }
        self.last_counts = counts;
        Ok(out)
    }

    fn tell(
        &mut self,
        pool: &dyn ParentPool,
        ctx: &EmitContext<'_>,
        offspring: &[Genotype],
        results: &[ScoringResult],
        improvements: &[Improvement],
        rng: &RngStream,
    ) -> Result<()> {
        let mut start = 0;
        for (j, ((_, e), &n)) in self.parts.iter_mut().zip(&self.last_counts).enumerate() {
            if n == 0 {
                continue;
            }
            let range = start..start + n;
            e.tell(
                pool,
                ctx,
                &offspring[range.clone()],
                &results[range.clone()],
                &improvements[range],
                &rng.child(j as u64),
            )?;
            start += n;
        }
        Ok(())
    }

    fn requires_gradients(&self) -> bool {
        self.parts.iter().any(|(_, e)| e.requires_gradients())
    }

    fn requires_single_objective(&self) -> bool {
        self.parts.iter().any(|(_, e)| e.requires_single_objective())
    }
}
