//! Evolution-strategies emitter with a fixed exploit/explore alternation.
//!
//! In exploit mode the search point climbs fitness; in explore mode it climbs
//! k-nearest-neighbour novelty of its descriptor against the archive. Gradients
//! come from antithetic Gaussian perturbations with centered-rank weights.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::containers::ParentPool;
use crate::emitters::{EmitContext, Emitter};
use crate::error::{invalid, QdError, Result};
use crate::exec::Executor;
use crate::rng::RngStream;
use crate::tasks::Task;
use crate::types::{Bounds, Genotype, Improvement, ScoringResult};

/// Ranks mapped to `[-0.5, 0.5]`, ties sharing their mean rank.
pub(crate) fn centered_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    if n < 2 {
        return vec![0.0; n];
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let mean = (i + j) as f64 / 2.0;
        for &k in &order[i..=j] {
            ranks[k] = mean / (n - 1) as f64 - 0.5;
        }
        i = j + 1;
    }
    ranks
}

/// `(1 / (n * sigma)) * sum_i rank_i * eps_i` over centered ranks of `fitnesses`.
pub fn es_gradient_estimate(directions: &[Vec<f64>], fitnesses: &[f64], sigma: f64) -> Result<Vec<f64>> {
    if sigma.is_nan() || sigma <= 0.0 {
        return invalid(format!("ES sigma must be positive, got {sigma}"));
    }
    if directions.len() != fitnesses.len() {
        return invalid(format!(
            "{} directions but {} fitness values",
            directions.len(),
            fitnesses.len()
        ));
    }
    let Some(dim) = directions.first().map(Vec::len) else {
        return invalid("ES gradient needs at least one direction");
    };
    let ranks = centered_ranks(fitnesses);
    let scale = 1.0 / (directions.len() as f64 * sigma);
    let mut g = vec![0.0; dim];
    for (eps, r) in directions.iter().zip(&ranks) {
        if eps.len() != dim {
            return invalid("ES directions have mixed lengths");
        }
        for (gi, e) in g.iter_mut().zip(eps) {
            *gi += r * e;
        }
    }
    g.iter_mut().for_each(|gi| *gi *= scale);
    Ok(g)
}

/// Mean distance to the `min(k, |archive|)` nearest archived descriptors;
/// `+inf` for an empty archive.
pub fn novelty_score(descriptor: &[f64], archive: &[&[f64]], k: usize) -> f64 {
    if archive.is_empty() {
        return f64::INFINITY;
    }
    let mut d: Vec<f64> = archive
        .iter()
        .map(|a| {
            a.iter()
                .zip(descriptor)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    let k = k.clamp(1, d.len());
    d.select_nth_unstable_by(k - 1, f64::total_cmp);
    d[..k].iter().sum::<f64>() / k as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EsParams {
    /// Perturbation scale.
    #[serde(default = "defaults::sigma")]
    pub sigma: f64,
    #[serde(default = "defaults::learning_rate")]
    pub learning_rate: f64,
    /// Generations spent in each mode before switching.
    #[serde(default = "defaults::explore_period")]
    pub explore_period: u64,
    #[serde(default = "defaults::k_novelty")]
    pub k_novelty: usize,
}

mod defaults {
    pub fn sigma() -> f64 {
        0.05
    }
    pub fn learning_rate() -> f64 {
        0.02
    }
    pub fn explore_period() -> u64 {
        10
    }
    pub fn k_novelty() -> usize {
        10
    }
}

impl Default for EsParams {
    fn default() -> Self {
        Self {
            sigma: defaults::sigma(),
            learning_rate: defaults::learning_rate(),
            explore_period: defaults::explore_period(),
            k_novelty: defaults::k_novelty(),
        }
    }
}

impl EsParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(QdError::Config(format!(
                "es sigma must be positive, got {}",
                self.sigma
            )));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(QdError::Config(format!(
                "es learning_rate must be non-negative, got {}",
                self.learning_rate
            )));
        }
        if self.explore_period == 0 || self.k_novelty == 0 {
            return Err(QdError::Config("es explore_period and k_novelty must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EsMode {
    Exploit,
    Explore,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EsEmitterState {
    pub search_point: Genotype,
    pub step_size: f64,
    pub mode: EsMode,
    pub generations_in_mode: u64,
}

impl EsEmitterState {
    pub fn new(search_point: Genotype, step_size: f64) -> Self {
        Self {
            search_point,
            step_size,
            mode: EsMode::Exploit,
            generations_in_mode: 0,
        }
    }

    fn advance_schedule(&mut self, period: u64) {
        self.generations_in_mode += 1;
        if self.generations_in_mode >= period {
            self.generations_in_mode = 0;
            self.mode = match self.mode {
                EsMode::Exploit => EsMode::Explore,
                EsMode::Explore => EsMode::Exploit,
            };
        }
    }

    /// Applies one gradient step from scored antithetic perturbations.
    fn update(
        &mut self,
        directions: &[Vec<f64>],
        results: &[ScoringResult],
        pool: &dyn ParentPool,
        params: &EsParams,
        bounds: &Bounds,
    ) -> Result<()> {
        let objective: Vec<f64> = match self.mode {
            EsMode::Exploit => results.iter().map(ScoringResult::fitness).collect(),
            EsMode::Explore => {
                let archive: Vec<&[f64]> = (0..pool.n_elites()).map(|i| pool.elite_descriptor(i)).collect();
                results
                    .iter()
                    .map(|r| novelty_score(&r.descriptor, &archive, params.k_novelty))
                    .collect()
            }
        };
        let g = es_gradient_estimate(directions, &objective, self.step_size)?;
        for (x, gi) in self.search_point.iter_mut().zip(&g) {
            *x += params.learning_rate * gi;
        }
        bounds.clip(&mut self.search_point);
        self.advance_schedule(params.explore_period);
        Ok(())
    }
}

fn antithetic_directions(pairs: usize, dim: usize, rng: &mut RngStream) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(2 * pairs);
    for _ in 0..pairs {
        let eps: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        out.push(eps.iter().map(|e| -e).collect());
        out.push(eps);
    }
    out
}

fn perturb(x: &[f64], eps: &[f64], sigma: f64, bounds: &Bounds) -> Genotype {
    let mut y: Genotype = x.iter().zip(eps).map(|(a, e)| a + sigma * e).collect();
    bounds.clip(&mut y);
    y
}

/// One self-contained ES generation: scores `n_directions` antithetic
/// perturbations, moves the search point, and returns it as the offspring.
pub fn es_emitter_step(
    state: &EsEmitterState,
    pool: &dyn ParentPool,
    task: &Task,
    n_directions: usize,
    params: &EsParams,
    rng: &RngStream,
    executor: &Executor,
) -> Result<(Genotype, EsEmitterState)> {
    if n_directions < 2 || !n_directions.is_multiple_of(2) {
        return invalid(format!("n_directions must be even and >= 2, got {n_directions}"));
    }
    let directions = antithetic_directions(n_directions / 2, state.search_point.len(), &mut rng.child(0));
    let results = executor.try_map(directions.len(), |i| {
        task.evaluate(&perturb(
            &state.search_point,
            &directions[i],
            state.step_size,
            task.bounds(),
        ))
    })?;
    let mut next = state.clone();
    next.update(&directions, &results, pool, params, task.bounds())?;
    Ok((next.search_point.clone(), next))
}

/// Emits `[search point, x + sigma*eps_1, x - sigma*eps_1, ...]` each step and
/// moves the search point from the scored perturbations.
pub struct EsEmitter {
    params: EsParams,
    state: Option<EsEmitterState>,
    directions: Vec<Vec<f64>>,
}

impl EsEmitter {
    pub fn new(params: EsParams) -> Self {
        Self {
            params,
            state: None,
            directions: Vec::new(),
        }
    }

    pub fn state(&self) -> Option<&EsEmitterState> {
        self.state.as_ref()
    }
}

impl Emitter for EsEmitter {
    fn name(&self) -> &'static str {
        "es"
    }

    fn init(&mut self, pool: &dyn ParentPool, _: &EmitContext<'_>, _: usize, rng: &RngStream) -> Result<()> {
        let x = pool.sample_one(&mut rng.child(0))?;
        self.state = Some(EsEmitterState::new(x.to_vec(), self.params.sigma));
        Ok(())
    }

    fn emit(
        &mut self,
        _: &dyn ParentPool,
        ctx: &EmitContext<'_>,
        count: usize,
        rng: &RngStream,
    ) -> Result<Vec<Genotype>> {
        let state = self
            .state
            .as_ref()
            .ok_or_else(|| QdError::Emitter("ES emitter used before init".into()))?;
        if count == 0 {
            self.directions.clear();
            return Ok(Vec::new());
        }
        let pairs = (count - 1) / 2;
        self.directions = antithetic_directions(pairs, state.search_point.len(), &mut rng.child(0));
        let mut out = Vec::with_capacity(count);
        out.push(state.search_point.clone());
        out.extend(
            self.directions
                .iter()
                .map(|eps| perturb(&state.search_point, eps, state.step_size, ctx.task.bounds())),
        );
        while out.len() < count {
            out.push(state.search_point.clone());
        }
        Ok(out)
    }

    fn tell(
        &mut self,
        pool: &dyn ParentPool,
        ctx: &EmitContext<'_>,
        _: &[Genotype],
        results: &[ScoringResult],
        _: &[Improvement],
        _: &RngStream,
    ) -> Result<()> {
        let state = self
            .state
            .as_mut()
            .ok_or_else(|| QdError::Emitter("ES emitter used before init".into()))?;
        let n = self.directions.len();
        if n == 0 {
            return Ok(());
        }
        if results.len() < 1 + n {
            return Err(QdError::Emitter(format!(
                "ES tell expected at least {} results, got {}",
                1 + n,
                results.len()
            )));
        }
        state.update(&self.directions, &results[1..=n], pool, &self.params, ctx.task.bounds())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::containers::{Container, GridSpec, Repertoire};

    fn empty_pool() -> Repertoire {
        Repertoire::new(Container::Grid(
            GridSpec::new(vec![10, 10], vec![0.0; 2], vec![1.0; 2]).unwrap(),
        ))
    }

    #[test]
    fn centered_ranks_span_and_ties() {
        assert_eq!(centered_ranks(&[3.0, 1.0, 2.0]), vec![0.5, -0.5, 0.0]);
        assert_eq!(centered_ranks(&[1.0, 1.0, 1.0, 1.0]), vec![0.0; 4]);
        assert_eq!(centered_ranks(&[0.0, 5.0, 5.0]), vec![-0.5, 0.25, 0.25]);
    }

    #[test]
    fn constant_fitness_gives_zero_gradient() {
        let dirs = vec![vec![1.0, 2.0], vec![-1.0, -2.0], vec![0.5, 0.0], vec![-0.5, 0.0]];
        let g = es_gradient_estimate(&dirs, &[7.0; 4], 0.1).unwrap();
        assert!(g.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn affine_invariance() {
        let dirs = vec![vec![1.0, 2.0], vec![-1.0, -2.0], vec![0.5, -3.0], vec![-0.5, 3.0]];
        let f = [0.3, -1.0, 2.0, 0.7];
        let h: Vec<f64> = f.iter().map(|v| 4.0 * v + 11.0).collect();
        assert_eq!(
            es_gradient_estimate(&dirs, &f, 0.2).unwrap(),
            es_gradient_estimate(&dirs, &h, 0.2).unwrap()
        );
    }

    #[test]
    fn hand_ranked_gradient_points_along_e1() {
        let dirs = vec![vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 1.0], vec![0.0, -1.0]];
        let g = es_gradient_estimate(&dirs, &[1.0, 0.0, 0.0, 0.0], 1.0).unwrap();
        // ranks: +e1 -> 0.5, the three ties -> -1/6 each
        let expected = [(0.5 + 1.0 / 6.0) / 4.0, 0.0];
        assert!((g[0] - expected[0]).abs() < 1e-15 && g[0] > 0.0);
        assert!(g[1].abs() < 1e-15);
    }

    #[test]
    fn non_positive_sigma_is_rejected() {
        assert!(matches!(
            es_gradient_estimate(&[vec![1.0]], &[1.0], 0.0),
            Err(QdError::InvalidArgument(_))
        ));
    }

    #[test]
    fn novelty_examples() {
        let a = [0.0, 0.0];
        let b = [1.0, 0.0];
        assert_eq!(novelty_score(&[1.0, 0.0], &[&a, &b], 1), 0.0);
        assert_eq!(novelty_score(&[0.0, 0.0], &[&a, &b], 2), 0.5);
        assert_eq!(novelty_score(&[0.0, 0.0], &[], 3), f64::INFINITY);
    }

    #[test]
    fn zero_learning_rate_keeps_point() {
        let t = Task::sphere(5).unwrap();
        let params = EsParams {
            learning_rate: 0.0,
            ..EsParams::default()
        };
        let s = EsEmitterState::new(vec![1.0, -2.0, 0.5, 0.0, 3.0], params.sigma);
        let (x, next) = es_emitter_step(
            &s,
            &empty_pool(),
            &t,
            10,
            &params,
            &RngStream::new(1),
            &Executor::sequential(),
        )
        .unwrap();
        assert_eq!(x, s.search_point);
        assert_eq!(next.generations_in_mode, 1);
    }

    #[test]
    fn mode_flips_after_period() {
        let t = Task::sphere(3).unwrap();
        let params = EsParams {
            explore_period: 3,
            ..EsParams::default()
        };
        let mut s = EsEmitterState::new(vec![1.0, 1.0, 1.0], params.sigma);
        let pool = empty_pool();
        let root = RngStream::new(2);
        for g in 0..3 {
            assert_eq!(s.mode, EsMode::Exploit);
            s = es_emitter_step(&s, &pool, &t, 4, &params, &root.child(g), &Executor::sequential())
                .unwrap()
                .1;
        }
        assert_eq!(s.mode, EsMode::Explore);
        assert_eq!(s.generations_in_mode, 0);
    }

    #[test]
    fn sphere_exploit_improves_almost_every_generation() {
        let n = 10;
        let t = Task::sphere(n).unwrap();
        let params = EsParams {
            sigma: 0.05,
            learning_rate: 0.005,
            explore_period: 1_000,
            k_novelty: 10,
        };
        let pool = empty_pool();
        let root = RngStream::new(42);
        let mut s = EsEmitterState::new(vec![3.0; n], params.sigma);
        let mut f = t.evaluate(&s.search_point).unwrap().fitness();
        let mut improved = 0;
        for g in 0..200 {
            let (x, next) =
                es_emitter_step(&s, &pool, &t, 20, &params, &root.child(g), &Executor::sequential()).unwrap();
            let nf = t.evaluate(&x).unwrap().fitness();
            if nf > f {
                improved += 1;
            }
            f = nf;
            s = next;
        }
        assert!(improved >= 180, "improved in {improved} of 200 generations");
    }

    #[test]
    fn emitter_layout() {
        let t = Task::sphere(4).unwrap();
        let ex = Executor::sequential();
        let ctx = EmitContext {
            task: &t,
            executor: &ex,
        };
        let mut pool = empty_pool();
        let x = vec![0.5, -0.5, 0.25, 1.0];
        pool.add(&x, &t.evaluate(&x).unwrap()).unwrap();
        let mut e = EsEmitter::new(EsParams::default());
        e.init(&pool, &ctx, 6, &RngStream::new(0)).unwrap();
        let out = e.emit(&pool, &ctx, 6, &RngStream::new(1)).unwrap();
        assert_eq!(out.len(), 6);
        assert_eq!(out[0], x);
        assert_eq!(out[5], x);
        for k in 0..4 {
            let a = out[1][k] - x[k];
            let b = out[2][k] - x[k];
            assert!((a + b).abs() < 1e-12);
        }
    }
}
