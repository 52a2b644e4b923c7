//! Population-based multi-objective baselines: NSGA-II and SPEA2, both with
//! iso+line variation.

use rand::Rng;

use crate::algorithms::{RecordSink, INIT_STREAM, LOOP_STREAM};
use crate::archive_io::PopulationArchive;
use crate::config::{AlgorithmKind, EmitterConfig, ExperimentConfig};
use crate::containers::pareto::{crowding_distance, kth_neighbour_distance, non_dominated_sort, spea2_fitness};
use crate::containers::MoElite;
use crate::emitters::isoline::isoline_scaled;
use crate::emitters::IsolineParams;
use crate::error::{QdError, Result};
use crate::exec::Executor;
use crate::metrics::compute_population_metrics;
use crate::qd::uniform_genotypes;
use crate::rng::RngStream;
use crate::tasks::Task;
use crate::types::{Genotype, MetricsRecord};

#[derive(Clone, Debug, PartialEq)]
pub struct Population {
    pub members: Vec<MoElite>,
}

impl Population {
    /// Scores `genotypes` in parallel.
    pub fn evaluate(task: &Task, genotypes: Vec<Genotype>, executor: &Executor) -> Result<Self> {
        let results = executor.try_map(genotypes.len(), |i| task.evaluate(&genotypes[i]))?;
        Ok(Self {
            members: genotypes
                .into_iter()
                .zip(results)
                .map(|(genotype, r)| MoElite {
                    genotype,
                    objectives: r.objectives,
                    descriptor: r.descriptor,
                })
                .collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    fn objectives(&self) -> Vec<&[f64]> {
        self.members.iter().map(|m| m.objectives.as_slice()).collect()
    }
}

fn iso_scale(params: &IsolineParams, task: &Task) -> Vec<f64> {
    let b = task.bounds();
    (0..b.dim()).map(|j| params.sigma_iso * b.width(j)).collect()
}

/// Offspring `i` uses `rng.child(i)`: two tournaments pick `x1`, `x2`, then
/// iso+line variation.
fn breed<F>(
    parents: &[MoElite],
    n: usize,
    better: F,
    task: &Task,
    params: &IsolineParams,
    rng: &RngStream,
    executor: &Executor,
) -> Result<Vec<Genotype>>
where
    F: Fn(usize, usize) -> bool + Sync,
{
    let iso = iso_scale(params, task);
    let tournament = |r: &mut RngStream| {
        let a = r.random_range(0..parents.len());
        let b = r.random_range(0..parents.len());
        if better(b, a) {
            b
        } else {
            a
        }
    };
    executor.try_map(n, |i| {
        let mut r = rng.child(i as u64);
        let x1 = tournament(&mut r);
        let x2 = tournament(&mut r);
        isoline_scaled(
            &parents[x1].genotype,
            &parents[x2].genotype,
            &iso,
            params.sigma_line,
            task.bounds(),
            &mut r,
        )
    })
}

/// Front rank and crowding distance of every point.
fn rank_and_crowding(points: &[&[f64]]) -> Result<(Vec<usize>, Vec<f64>)> {
    let mut rank = vec![0; points.len()];
    let mut crowd = vec![0.0; points.len()];
    for (r, front) in non_dominated_sort(points)?.iter().enumerate() {
        let pts: Vec<&[f64]> = front.iter().map(|&i| points[i]).collect();
        for (&i, c) in front.iter().zip(crowding_distance(&pts)) {
            rank[i] = r;
            crowd[i] = c;
        }
    }
    Ok((rank, crowd))
}

/// Indices of the `n` survivors: whole fronts in order, then the split front
/// by crowding distance descending (lowest index on ties).
pub fn nsga2_select(points: &[&[f64]], n: usize) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(n);
    for front in non_dominated_sort(points)? {
        if out.len() + front.len() <= n {
            out.extend_from_slice(&front);
            if out.len() == n {
                break;
            }
            continue;
        }
        let pts: Vec<&[f64]> = front.iter().map(|&i| points[i]).collect();
        let crowd = crowding_distance(&pts);
        let mut order: Vec<usize> = (0..front.len()).collect();
        order.sort_by(|&a, &b| crowd[b].total_cmp(&crowd[a]));
        out.extend(order[..n - out.len()].iter().map(|&k| front[k]));
        break;
    }
    Ok(out)
}

/// One NSGA-II generation of `|population|` offspring.
pub fn nsga2_step(
    population: &Population,
    task: &Task,
    params: &IsolineParams,
    rng: &RngStream,
    executor: &Executor,
) -> Result<Population> {
    let n = population.len();
    if n == 0 || !n.is_multiple_of(2) {
        return Err(QdError::Config(format!(
            "nsga2 population size must be even and positive, got {n}"
        )));
    }
    let (rank, crowd) = rank_and_crowding(&population.objectives())?;
    let better = |a: usize, b: usize| rank[a] < rank[b] || (rank[a] == rank[b] && crowd[a] > crowd[b]);
    let children = breed(&population.members, n, better, task, params, rng, executor)?;
    let offspring = Population::evaluate(task, children, executor)?;
    let union: Vec<MoElite> = population.members.iter().chain(&offspring.members).cloned().collect();
    let objs: Vec<&[f64]> = union.iter().map(|m| m.objectives.as_slice()).collect();
    let keep = nsga2_select(&objs, n)?;
    Ok(Population {
        members: keep.into_iter().map(|i| union[i].clone()).collect(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Spea2Params {
    pub archive_size: usize,
    pub k: usize,
}

/// SPEA2 environmental selection: indices of the new archive.
///
/// All points with fitness below 1 are kept; if there are more than
/// `capacity`, the member with the smallest k-th-neighbour distance (among the
/// remaining ones) is removed repeatedly, lowest index on ties. If there are
/// fewer, the best dominated points by fitness fill the gap.
pub fn spea2_select(points: &[&[f64]], capacity: usize, k: usize) -> Result<Vec<usize>> {
    let fitness = spea2_fitness(points, k)?;
    let mut chosen: Vec<usize> = (0..points.len()).filter(|&i| fitness[i] < 1.0).collect();
    if chosen.len() < capacity {
        let mut rest: Vec<usize> = (0..points.len()).filter(|&i| fitness[i] >= 1.0).collect();
        rest.sort_by(|&a, &b| fitness[a].total_cmp(&fitness[b]));
        chosen.extend(rest.into_iter().take(capacity - chosen.len()));
        chosen.sort_unstable();
    }
    while chosen.len() > capacity {
        let pts: Vec<&[f64]> = chosen.iter().map(|&i| points[i]).collect();
        let mut worst = 0;
        let mut worst_d = f64::INFINITY;
        for j in 0..pts.len() {
            let d = kth_neighbour_distance(&pts, j, k);
            if d < worst_d {
                worst = j;
                worst_d = d;
            }
        }
        chosen.remove(worst);
    }
    Ok(chosen)
}

/// One SPEA2 generation: environmental selection on population ∪ archive,
/// tournament on SPEA2 fitness within the new archive, then `|population|`
/// offspring. Returns (offspring, new archive).
pub fn spea2_step(
    population: &Population,
    archive: &[MoElite],
    params: Spea2Params,
    task: &Task,
    variation: &IsolineParams,
    rng: &RngStream,
    executor: &Executor,
) -> Result<(Population, Vec<MoElite>)> {
    if params.archive_size == 0 || params.k == 0 {
        return Err(QdError::Config("spea2 archive_size and k must be at least 1".into()));
    }
    let union: Vec<MoElite> = population.members.iter().chain(archive).cloned().collect();
    let objs: Vec<&[f64]> = union.iter().map(|m| m.objectives.as_slice()).collect();
    let keep = spea2_select(&objs, params.archive_size, params.k)?;
    let next_archive: Vec<MoElite> = keep.iter().map(|&i| union[i].clone()).collect();
    let arch_objs: Vec<&[f64]> = next_archive.iter().map(|m| m.objectives.as_slice()).collect();
    let fit = spea2_fitness(&arch_objs, params.k)?;
    let better = |a: usize, b: usize| fit[a] < fit[b];
    let children = breed(&next_archive, population.len(), better, task, variation, rng, executor)?;
    Ok((Population::evaluate(task, children, executor)?, next_archive))
}

fn variation_params(config: &ExperimentConfig) -> Result<IsolineParams> {
    match &config.emitter {
        EmitterConfig::Isoline(p) => Ok(*p),
        _ => Err(QdError::Config(format!(
            "{:?} uses iso+line variation; the emitter must be of type isoline",
            config.algorithm.name
        ))),
    }
}

fn population_record(
    iteration: u64,
    evaluations: u64,
    members: &[MoElite],
    reference: &[f64],
    started: std::time::Instant,
) -> Result<MetricsRecord> {
    let objs: Vec<&[f64]> = members.iter().map(|m| m.objectives.as_slice()).collect();
    let m = compute_population_metrics(&objs, reference)?;
    Ok(MetricsRecord {
        iteration,
        evaluations,
        qd_score: m.qd_score,
        coverage: m.coverage,
        max_fitness: m.max_fitness,
        wall_time_ms: started.elapsed().as_secs_f64() * 1e3,
    })
}

struct PopulationSetup {
    task: Task,
    n: usize,
    generations: u64,
    variation: IsolineParams,
}

// Generations run while a whole generation of `n` offspring fits the budget.
fn setup(config: &ExperimentConfig, expected: AlgorithmKind) -> Result<PopulationSetup> {
    if config.algorithm.name != expected {
        return Err(QdError::Config(format!("config does not select {expected:?}")));
    }
    let task = config.build_task()?;
    if task.spec().n_objectives < 2 {
        return Err(QdError::Config(format!(
            "{expected:?} needs a multi-objective task, {} has one objective",
            task.spec().name
        )));
    }
    let n = config.algorithm.population_size.unwrap_or(config.budget.init_batch);
    if n == 0 || (expected == AlgorithmKind::Nsga2 && !n.is_multiple_of(2)) {
        return Err(QdError::Config(format!(
            "population size must be even and positive, got {n}"
        )));
    }
    if config.budget.total_evaluations < n as u64 {
        return Err(QdError::Config(format!(
            "total_evaluations {} is smaller than the population {n}",
            config.budget.total_evaluations
        )));
    }
    let generations = (config.budget.total_evaluations - n as u64) / n as u64;
    Ok(PopulationSetup {
        variation: variation_params(config)?,
        task,
        n,
        generations,
    })
}

pub fn nsga2_run(
    config: &ExperimentConfig,
    executor: &Executor,
    root: &RngStream,
    sink: &mut RecordSink<'_>,
) -> Result<PopulationArchive> {
    let started = std::time::Instant::now();
    let s = setup(config, AlgorithmKind::Nsga2)?;
    let reference = s.task.objective_lower_bounds();
    let init = uniform_genotypes(s.task.bounds(), s.n, &root.child(INIT_STREAM));
    let mut pop = Population::evaluate(&s.task, init, executor)?;
    let mut evaluations = s.n as u64;
    sink(&population_record(0, evaluations, &pop.members, &reference, started)?)?;
    let stream = root.child(LOOP_STREAM);
    for t in 1..=s.generations {
        pop = nsga2_step(&pop, &s.task, &s.variation, &stream.child(t), executor)?;
        evaluations += s.n as u64;
        sink(&population_record(t, evaluations, &pop.members, &reference, started)?)?;
    }
    Ok(PopulationArchive {
        members: pop.members,
        reference,
    })
}

/// SPEA2; each record and the returned archive use the environmental
/// selection of the latest population with the current archive.
pub fn spea2_run(
    config: &ExperimentConfig,
    executor: &Executor,
    root: &RngStream,
    sink: &mut RecordSink<'_>,
) -> Result<PopulationArchive> {
    let started = std::time::Instant::now();
    let s = setup(config, AlgorithmKind::Spea2)?;
    let archive_size = config.algorithm.archive_size.unwrap_or(s.n);
    let k = config
        .algorithm
        .spea2_k
        .unwrap_or(((s.n + archive_size) as f64).sqrt().floor().max(1.0) as usize);
    let params = Spea2Params { archive_size, k };
    let reference = s.task.objective_lower_bounds();
    let elite = |pop: &Population, archive: &[MoElite]| -> Result<Vec<MoElite>> {
        let union: Vec<MoElite> = pop.members.iter().chain(archive).cloned().collect();
        let objs: Vec<&[f64]> = union.iter().map(|m| m.objectives.as_slice()).collect();
        Ok(spea2_select(&objs, archive_size, k)?
            .into_iter()
            .map(|i| union[i].clone())
            .collect())
    };
    let init = uniform_genotypes(s.task.bounds(), s.n, &root.child(INIT_STREAM));
    let mut pop = Population::evaluate(&s.task, init, executor)?;
    let mut archive: Vec<MoElite> = Vec::new();
    let mut evaluations = s.n as u64;
    sink(&population_record(
        0,
        evaluations,
        &elite(&pop, &archive)?,
        &reference,
        started,
    )?)?;
    let stream = root.child(LOOP_STREAM);
    for t in 1..=s.generations {
        (pop, archive) = spea2_step(
            &pop,
            &archive,
            params,
            &s.task,
            &s.variation,
            &stream.child(t),
            executor,
        )?;
        evaluations += s.n as u64;
        sink(&population_record(
            t,
            evaluations,
            &elite(&pop, &archive)?,
            &reference,
            started,
        )?)?;
    }
    Ok(PopulationArchive {
        members: elite(&pop, &archive)?,
        reference,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::containers::pareto::dominates;

    fn pts(v: &[(f64, f64)]) -> Vec<Vec<f64>> {
        v.iter().map(|&(a, b)| vec![a, b]).collect()
    }

    #[test]
    fn select_fills_fronts_then_crowding() {
        let p = pts(&[(0.0, 3.0), (1.0, 2.0), (1.5, 1.5), (3.0, 0.0), (0.0, 0.0)]);
        let refs: Vec<&[f64]> = p.iter().map(Vec::as_slice).collect();
        // front 0 = {0,1,2,3}; crowding: 0 and 3 infinite, 1 -> 1.0, 2 -> 4/3
        let mut keep = nsga2_select(&refs, 3).unwrap();
        keep.sort_unstable();
        assert_eq!(keep, vec![0, 2, 3]);
        assert_eq!(nsga2_select(&refs, 5).unwrap().len(), 5);
    }

    #[test]
    fn nsga2_preserves_size_and_rejects_odd() {
        let t = Task::new(crate::tasks::TaskKind::QuadraticPair, 1).unwrap();
        let ex = Executor::sequential();
        let init = uniform_genotypes(t.bounds(), 16, &RngStream::new(1));
        let pop = Population::evaluate(&t, init, &ex).unwrap();
        let next = nsga2_step(&pop, &t, &IsolineParams::default(), &RngStream::new(2), &ex).unwrap();
        assert_eq!(next.len(), 16);
        let odd = Population {
            members: pop.members[..15].to_vec(),
        };
        assert!(matches!(
            nsga2_step(&odd, &t, &IsolineParams::default(), &RngStream::new(2), &ex),
            Err(QdError::Config(_))
        ));
    }

    #[test]
    fn spea2_archive_size_and_non_domination() {
        let t = Task::new(crate::tasks::TaskKind::QuadraticPair, 1).unwrap();
        let ex = Executor::sequential();
        let init = uniform_genotypes(t.bounds(), 20, &RngStream::new(3));
        let mut pop = Population::evaluate(&t, init, &ex).unwrap();
        let mut archive = Vec::new();
        let params = Spea2Params { archive_size: 10, k: 5 };
        for g in 0..30 {
            (pop, archive) = spea2_step(
                &pop,
                &archive,
                params,
                &t,
                &IsolineParams::default(),
                &RngStream::new(g),
                &ex,
            )
            .unwrap();
            assert_eq!(archive.len(), 10);
            assert_eq!(pop.len(), 20);
        }
        for a in &archive {
            for b in &archive {
                assert!(!dominates(&a.objectives, &b.objectives).unwrap());
            }
        }
    }

    #[test]
    fn spea2_pads_with_best_dominated() {
        let p = pts(&[(2.0, 2.0), (1.0, 1.0), (0.0, 0.0)]);
        let refs: Vec<&[f64]> = p.iter().map(Vec::as_slice).collect();
        assert_eq!(spea2_select(&refs, 2, 1).unwrap(), vec![0, 1]);
    }
}
