//! Gradient-based emitters for differentiable tasks: OMG-MEGA and CMA-MEGA.
//!
//! Both search in the span of the normalized fitness gradient and the
//! normalized descriptor gradients. A coefficient vector `c` of length
//! `1 + d_dims` maps to the step `c0 * grad_f + sum_j c_j * grad_d_j`.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::containers::{ParentPool, Repertoire};
use crate::emitters::cmaes::CmaesState;
use crate::emitters::cmame::rank_by_improvement;
use crate::emitters::{EmitContext, Emitter};
use crate::error::{invalid, QdError, Result};
use crate::exec::Executor;
use crate::rng::RngStream;
use crate::tasks::Task;
use crate::types::{Bounds, Genotype, Improvement, ScoringResult};

/// Coefficients over `[grad_f, grad_d_1, ..., grad_d_d]`.
#[derive(Clone, Debug, PartialEq)]
pub struct MegaCoefficients(pub Vec<f64>);

fn unit(v: &[f64]) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter().map(|x| x / norm).collect()
    } else {
        vec![0.0; v.len()]
    }
}

/// Rows `[grad_f / |grad_f|, grad_d_j / |grad_d_j| ...]`; zero rows stay zero.
pub fn normalized_gradients(fitness_gradient: &[f64], descriptor_gradients: &[Vec<f64>]) -> Vec<Vec<f64>> {
    std::iter::once(unit(fitness_gradient))
        .chain(descriptor_gradients.iter().map(|g| unit(g)))
        .collect()
}

/// `clip(x + sum_j c_j * rows_j)`.
pub fn mega_offspring(
    x: &[f64],
    rows: &[Vec<f64>],
    coefficients: &MegaCoefficients,
    bounds: &Bounds,
) -> Result<Genotype> {
    if coefficients.0.len() != rows.len() {
        return invalid(format!(
            "{} coefficients for {} gradient rows",
            coefficients.0.len(),
            rows.len()
        ));
    }
    let mut out = x.to_vec();
    for (c, row) in coefficients.0.iter().zip(rows) {
        if row.len() != x.len() {
            return invalid("gradient row length does not match the genotype");
        }
        for (o, g) in out.iter_mut().zip(row) {
            *o += c * g;
        }
    }
    bounds.clip(&mut out);
    Ok(out)
}

fn gradient_rows(task: &Task, x: &[f64]) -> Result<Vec<Vec<f64>>> {
    let (gf, gd) = task.gradients(x)?;
    Ok(normalized_gradients(&gf, &gd))
}

/// One OMG-MEGA batch: each offspring perturbs a uniformly drawn elite along
/// its normalized gradients with `c ~ N(0, sigma_g^2 I)`, `c0` forced positive.
pub fn omg_mega_emit(
    pool: &dyn ParentPool,
    task: &Task,
    sigma_g: f64,
    count: usize,
    rng: &RngStream,
    executor: &Executor,
) -> Result<Vec<Genotype>> {
    if !task.spec().differentiable {
        return Err(QdError::Config(format!(
            "OMG-MEGA needs gradients but task {} is not differentiable",
            task.spec().name
        )));
    }
    let normal = Normal::new(0.0, sigma_g).map_err(|e| QdError::Config(format!("invalid sigma_g {sigma_g}: {e}")))?;
    executor.try_map(count, |i| {
        let mut r = rng.child(i as u64);
        let x = pool.sample_one(&mut r)?;
        let rows = gradient_rows(task, x)?;
        let mut c: Vec<f64> = (0..rows.len()).map(|_| normal.sample(&mut r)).collect();
        c[0] = c[0].abs();
        mega_offspring(x, &rows, &MegaCoefficients(c), task.bounds())
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OmgMegaParams {
    #[serde(default = "default_sigma_g")]
    pub sigma_g: f64,
}

fn default_sigma_g() -> f64 {
    1.0
}

impl Default for OmgMegaParams {
    fn default() -> Self {
        Self {
            sigma_g: default_sigma_g(),
        }
    }
}

pub struct OmgMegaEmitter {
    params: OmgMegaParams,
}

impl OmgMegaEmitter {
    pub fn new(params: OmgMegaParams) -> Self {
        Self { params }
    }
}

impl Emitter for OmgMegaEmitter {
    fn name(&self) -> &'static str {
        "omg_mega"
    }

    fn init(&mut self, _: &dyn ParentPool, _: &EmitContext<'_>, _: usize, _: &RngStream) -> Result<()> {
        Ok(())
    }

    fn emit(
        &mut self,
        pool: &dyn ParentPool,
        ctx: &EmitContext<'_>,
        count: usize,
        rng: &RngStream,
    ) -> Result<Vec<Genotype>> {
        omg_mega_emit(pool, ctx.task, self.params.sigma_g, count, rng, ctx.executor)
    }

    fn tell(
        &mut self,
        _: &dyn ParentPool,
        _: &EmitContext<'_>,
        _: &[Genotype],
        _: &[ScoringResult],
        _: &[Improvement],
        _: &RngStream,
    ) -> Result<()> {
        Ok(())
    }

    fn requires_gradients(&self) -> bool {
        true
    }

    fn requires_single_objective(&self) -> bool {
        true
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CmaMegaParams {
    /// Initial step size of the coefficient distribution.
    #[serde(default = "default_sigma_g")]
    pub sigma0: f64,
    /// Step rate of the anchor update.
    #[serde(default = "default_eta")]
    pub eta: f64,
}

fn default_eta() -> f64 {
    1.0
}

impl Default for CmaMegaParams {
    fn default() -> Self {
        Self {
            sigma0: default_sigma_g(),
            eta: default_eta(),
        }
    }
}

/// Coefficient-space CMA-ES around a moving anchor `x_t`.
pub struct CmaMegaEmitter {
    params: CmaMegaParams,
    coefficients: Option<CmaesState>,
    anchor: Genotype,
    rows: Vec<Vec<f64>>,
    pending: Vec<Vec<f64>>,
    restarts: u64,
}

impl CmaMegaEmitter {
    pub fn new(params: CmaMegaParams) -> Self {
        Self {
            params,
            coefficients: None,
            anchor: Vec::new(),
            rows: Vec::new(),
            pending: Vec::new(),
            restarts: 0,
        }
    }

    /// Starts from an explicit anchor with a fresh coefficient distribution.
    pub fn with_anchor(params: CmaMegaParams, anchor: Genotype, d_dims: usize, lambda: usize) -> Result<Self> {
        let mut e = Self::new(params);
        e.coefficients = Some(CmaesState::new(vec![0.0; 1 + d_dims], params.sigma0, lambda)?);
        e.anchor = anchor;
        Ok(e)
    }

    pub fn anchor(&self) -> &[f64] {
        &self.anchor
    }

    pub fn coefficient_state(&self) -> Option<&CmaesState> {
        self.coefficients.as_ref()
    }

    pub fn restarts(&self) -> u64 {
        self.restarts
    }

    fn reset(&mut self, pool: &dyn ParentPool, lambda: usize, dims: usize, rng: &mut RngStream) -> Result<()> {
        let x = pool
            .sample_one(rng)
            .map_err(|_| QdError::Emitter("CMA-MEGA restart needs a non-empty archive".into()))?;
        self.anchor = x.to_vec();
        self.coefficients = Some(CmaesState::new(vec![0.0; dims], self.params.sigma0, lambda)?);
        Ok(())
    }

    /// Offspring for explicit coefficient vectors around the current anchor.
    pub fn offspring_for(&mut self, task: &Task, coefficients: &[Vec<f64>]) -> Result<Vec<Genotype>> {
        self.rows = gradient_rows(task, &self.anchor)?;
        coefficients
            .iter()
            .map(|c| mega_offspring(&self.anchor, &self.rows, &MegaCoefficients(c.clone()), task.bounds()))
            .collect()
    }
}

impl Emitter for CmaMegaEmitter {
    fn name(&self) -> &'static str {
        "cma_mega"
    }

    fn init(&mut self, pool: &dyn ParentPool, ctx: &EmitContext<'_>, batch_size: usize, rng: &RngStream) -> Result<()> {
        if !ctx.task.spec().differentiable {
            return Err(QdError::Config(format!(
                "CMA-MEGA needs gradients but task {} is not differentiable",
                ctx.task.spec().name
            )));
        }
        let dims = 1 + ctx.task.spec().d_dims;
        self.reset(pool, batch_size.max(2), dims, &mut rng.child(0))
    }

    fn emit(
        &mut self,
        pool: &dyn ParentPool,
        ctx: &EmitContext<'_>,
        count: usize,
        rng: &RngStream,
    ) -> Result<Vec<Genotype>> {
        let state = self
            .coefficients
            .as_ref()
            .ok_or_else(|| QdError::Emitter("CMA-MEGA emitter used before init".into()))?;
        let mut r = rng.child(0);
        let coeffs = match state.sample(count, &mut r) {
            Err(QdError::RestartRequired(_)) => {
                let (lambda, dims) = (state.lambda(), state.dim());
                self.reset(pool, lambda, dims, &mut r)?;
                self.restarts += 1;
                self.coefficients.as_ref().expect("reset").sample(count, &mut r)?
            }
            other => other?,
        };
        let out = self.offspring_for(ctx.task, &coeffs)?;
        self.pending = coeffs;
        Ok(out)
    }

    fn tell(
        &mut self,
        pool: &dyn ParentPool,
        ctx: &EmitContext<'_>,
        _: &[Genotype],
        results: &[ScoringResult],
        improvements: &[Improvement],
        rng: &RngStream,
    ) -> Result<()> {
        let state = self
            .coefficients
            .as_mut()
            .ok_or_else(|| QdError::Emitter("CMA-MEGA emitter used before init".into()))?;
        let (lambda, dims) = (state.lambda(), state.dim());
        let fitness: Vec<f64> = results.iter().map(ScoringResult::fitness).collect();
        let ranking = rank_by_improvement(&fitness, improvements);
        if self.pending.len() == lambda {
            let told = state.tell(&self.pending, &ranking);
            if let Err(QdError::RestartRequired(_)) = told {
                self.restarts += 1;
                return self.reset(pool, lambda, dims, &mut rng.child(1));
            }
            told?;
            let weights = state.params.weights.clone();
            let mut step = vec![0.0; dims];
            for (w, &i) in weights.iter().zip(&ranking) {
                for (s, c) in step.iter_mut().zip(&self.pending[i]) {
                    *s += w * c;
                }
            }
            let scaled: Vec<f64> = step.iter().map(|s| s * self.params.eta).collect();
            self.anchor = mega_offspring(&self.anchor, &self.rows, &MegaCoefficients(scaled), ctx.task.bounds())?;
        }
        if !improvements.iter().any(Improvement::is_improvement) {
            self.restarts += 1;
            self.reset(pool, lambda, dims, &mut rng.child(0))?;
        }
        Ok(())
    }

    fn requires_gradients(&self) -> bool {
        true
    }

    fn requires_single_objective(&self) -> bool {
        true
    }
}

/// One full CMA-MEGA iteration against `repertoire`: emit, score, rank, update
/// the coefficient distribution and the anchor. The repertoire is not modified.
pub fn cma_mega_step(
    emitter: &mut CmaMegaEmitter,
    task: &Task,
    repertoire: &Repertoire,
    rng: &RngStream,
    executor: &Executor,
) -> Result<(Vec<Genotype>, Vec<ScoringResult>)> {
    let ctx = EmitContext { task, executor };
    let lambda = emitter
        .coefficients
        .as_ref()
        .map(CmaesState::lambda)
        .ok_or_else(|| QdError::Emitter("CMA-MEGA emitter used before init".into()))?;
    let offspring = emitter.emit(repertoire, &ctx, lambda, &rng.child(0))?;
    let results = executor.try_map(offspring.len(), |i| task.evaluate(&offspring[i]))?;
    let improvements = results
        .iter()
        .map(|r| Ok(repertoire.classify(repertoire.cell_of(r)?, r.fitness())))
        .collect::<Result<Vec<_>>>()?;
    emitter.tell(repertoire, &ctx, &offspring, &results, &improvements, &rng.child(1))?;
    Ok((offspring, results))
}
