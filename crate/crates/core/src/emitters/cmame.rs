//! CMA-ME improvement emitter.

use serde::{Deserialize, Serialize};

use crate::containers::{ParentPool, Repertoire};
use crate::emitters::cmaes::CmaesState;
use crate::emitters::{EmitContext, Emitter};
use crate::error::{QdError, Result};
use crate::rng::RngStream;
use crate::types::{CellId, Genotype, Improvement, ScoringResult};

pub const RESTART_MIN_SIGMA: f64 = 1e-12;
pub const RESTART_MAX_CONDITION: f64 = 1e14;

/// Improvement ranking: candidates that open a new cell (by fitness,
/// descending), then candidates that beat their incumbent (by margin,
/// descending), then the rest (by fitness, descending). Stable within a tier.
pub fn rank_by_improvement(fitness: &[f64], improvements: &[Improvement]) -> Vec<usize> {
    let tier = |i: usize| match improvements[i] {
        Improvement::NewCell => (0u8, fitness[i]),
        Improvement::Improved { delta } => (1, delta),
        Improvement::NotImproved => (2, fitness[i]),
    };
    let mut idx: Vec<usize> = (0..fitness.len()).collect();
    idx.sort_by(|&a, &b| {
        let (ta, ka) = tier(a);
        let (tb, kb) = tier(b);
        ta.cmp(&tb).then(kb.total_cmp(&ka))
    });
    idx
}

/// Ranks `(cell, fitness)` candidates against `repertoire`.
pub fn cmame_rank(batch: &[(CellId, f64)], repertoire: &Repertoire) -> Vec<usize> {
    let improvements: Vec<Improvement> = batch.iter().map(|&(cell, f)| repertoire.classify(cell, f)).collect();
    let fitness: Vec<f64> = batch.iter().map(|&(_, f)| f).collect();
    rank_by_improvement(&fitness, &improvements)
}

#[derive(Clone, Debug)]
pub struct CmaMeEmitterState {
    pub cmaes: CmaesState,
    pub anchor_cell: CellId,
}

impl CmaMeEmitterState {
    /// Fresh distribution centred on a uniformly drawn elite.
    pub fn anchored(pool: &dyn ParentPool, sigma0: f64, lambda: usize, rng: &mut RngStream) -> Result<Self> {
        let i = pool
            .sample_index(rng)
            .map_err(|_| QdError::Emitter("CMA-ME restart needs a non-empty archive".into()))?;
        Ok(Self {
            cmaes: CmaesState::new(pool.elite_genotype(i).to_vec(), sigma0, lambda)?,
            anchor_cell: pool.elite_cell(i),
        })
    }
}

/// Restarts when the batch brought no improvement, sigma collapsed below
/// 1e-12, or the covariance condition number exceeds 1e14. Returns whether
/// a restart happened.
pub fn cmame_maybe_restart(
    state: &mut CmaMeEmitterState,
    batch_improved: bool,
    pool: &dyn ParentPool,
    sigma0: f64,
    rng: &mut RngStream,
) -> Result<bool> {
    let cmaes = &state.cmaes;
    let needed = !batch_improved || cmaes.sigma < RESTART_MIN_SIGMA || cmaes.condition_number() > RESTART_MAX_CONDITION;
    if needed {
        *state = CmaMeEmitterState::anchored(pool, sigma0, cmaes.lambda(), rng)?;
    }
    Ok(needed)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CmaMeParams {
    #[serde(default = "default_sigma0")]
    pub sigma0: f64,
}

fn default_sigma0() -> f64 {
    0.5
}

impl Default for CmaMeParams {
    fn default() -> Self {
        Self {
            sigma0: default_sigma0(),
        }
    }
}

/// CMA-ES in genotype space ranked by archive improvement. Its lambda is the
/// share of the batch it is given at initialization.
pub struct CmaMeEmitter {
    params: CmaMeParams,
    state: Option<CmaMeEmitterState>,
    pending: Vec<Vec<f64>>,
    restarts: u64,
}

impl CmaMeEmitter {
    pub fn new(params: CmaMeParams) -> Self {
        Self {
            params,
            state: None,
            pending: Vec::new(),
            restarts: 0,
        }
    }

    pub fn state(&self) -> Option<&CmaMeEmitterState> {
        self.state.as_ref()
    }

    pub fn restarts(&self) -> u64 {
        self.restarts
    }
}

impl Emitter for CmaMeEmitter {
    fn name(&self) -> &'static str {
        "cma_me"
    }

    fn init(&mut self, pool: &dyn ParentPool, _: &EmitContext<'_>, batch_size: usize, rng: &RngStream) -> Result<()> {
        let lambda = batch_size.max(2);
        self.state = Some(CmaMeEmitterState::anchored(
            pool,
            self.params.sigma0,
            lambda,
            &mut rng.child(0),
        )?);
        Ok(())
    }

    fn emit(
        &mut self,
        pool: &dyn ParentPool,
        ctx: &EmitContext<'_>,
        count: usize,
        rng: &RngStream,
    ) -> Result<Vec<Genotype>> {
        let state = self
            .state
            .as_mut()
            .ok_or_else(|| QdError::Emitter("CMA-ME emitter used before init".into()))?;
        let mut r = rng.child(0);
        let samples = match state.cmaes.sample(count, &mut r) {
            Err(QdError::RestartRequired(_)) => {
                *state = CmaMeEmitterState::anchored(pool, self.params.sigma0, state.cmaes.lambda(), &mut r)?;
                self.restarts += 1;
                state.cmaes.sample(count, &mut r)?
            }
            other => other?,
        };
        let bounds = ctx.task.bounds();
        let clipped: Vec<Genotype> = samples
            .into_iter()
            .map(|mut s| {
                bounds.clip(&mut s);
                s
            })
            .collect();
        self.pending = clipped.clone();
        Ok(clipped)
    }

    fn tell(
        &mut self,
        pool: &dyn ParentPool,
        _: &EmitContext<'_>,
        _: &[Genotype],
        results: &[ScoringResult],
        improvements: &[Improvement],
        rng: &RngStream,
    ) -> Result<()> {
        let state = self
            .state
            .as_mut()
            .ok_or_else(|| QdError::Emitter("CMA-ME emitter used before init".into()))?;
        let fitness: Vec<f64> = results.iter().map(ScoringResult::fitness).collect();
        let ranking = rank_by_improvement(&fitness, improvements);
        // a short final batch cannot update a distribution sized for lambda
        if self.pending.len() == state.cmaes.lambda() {
            match state.cmaes.tell(&self.pending, &ranking) {
                Err(QdError::RestartRequired(_)) => {
                    *state =
                        CmaMeEmitterState::anchored(pool, self.params.sigma0, state.cmaes.lambda(), &mut rng.child(1))?;
                    self.restarts += 1;
                    return Ok(());
                }
                other => other?,
            }
        }
        let improved = improvements.iter().any(Improvement::is_improvement);
        if cmame_maybe_restart(state, improved, pool, self.params.sigma0, &mut rng.child(0))? {
            self.restarts += 1;
        }
        Ok(())
    }

    fn requires_single_objective(&self) -> bool {
        true
    }
}
