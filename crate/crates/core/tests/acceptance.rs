//! Acceptance gate. Prints one PASS, FAIL or NOT EVALUATED line per criterion
//! and exits non-zero if any criterion fails.

use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qdlab::algorithms::{nsga2_run, run_collect};
use qdlab::archive_io::Archive;
use qdlab::cli::{run_command, RunArgs};
use qdlab::config::parse_config_str;
use qdlab::containers::pareto::{dominates, non_dominated_sort};
use qdlab::containers::{compute_cvt_centroids, Container, CvtSpec, GridSpec, Repertoire};
use qdlab::emitters::cmaes::rank_ascending;
use qdlab::emitters::{default_lambda, CmaesState, GaEmitter, IsolineParams};
use qdlab::exec::Executor;
use qdlab::metrics::hypervolume;
use qdlab::qd::{uniform_genotypes, QdArchive, QdLoop};
use qdlab::rng::RngStream;
use qdlab::tasks::{Task, TaskKind};
use qdlab::types::{Bounds, ScoringResult};

// Pinned tolerances and limits.
const C1_EVALS: usize = 10_000;
const C1_LIMIT: Duration = Duration::from_secs(5);
const C2_POINTS: usize = 200;
const C2_SEEDS: u64 = 100;
const C2_LIMIT: Duration = Duration::from_secs(10);
const C3_TARGET: f64 = 1e-8;
const C3_BUDGET: usize = 50_000;
const C3_SEEDS: u64 = 10;
const C3_LIMIT: Duration = Duration::from_secs(30);
const C4_POINTS: usize = 50;
const C4_STEP: f64 = 1e-6;
const C4_TOL: f64 = 1e-5;
const C4_LIMIT: Duration = Duration::from_secs(5);
const C5_LIMIT: Duration = Duration::from_secs(180);
const C6_SEEDS: u64 = 5;
const C6_MIN_WINS: usize = 4;
const C7_POP: usize = 64;
const C7_GENERATIONS: u64 = 200;
const C7_TOL: f64 = 0.05;
const C7_LIMIT: Duration = Duration::from_secs(30);
const C8_BUDGET: u64 = 50_000;
const C8_LIMIT: Duration = Duration::from_secs(120);
const C9_FRONTS: usize = 50;
const C9_SAMPLES: usize = 1_000_000;
const C9_TOL: f64 = 0.01;
const C9_LIMIT: Duration = Duration::from_secs(30);
const C10_EVALS: u64 = 1_000_000;
const C10_RATIO: f64 = 0.5;
const C10_CORES: usize = 8;

type Outcome = Result<String, String>;

// Marks a criterion whose hardware precondition does not hold on this host.
const NOT_EVALUATED: &str = "NOT EVALUATED: ";

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(limit: Duration, started: Instant) -> Result<(), String> {
    let t = started.elapsed();
    if t <= limit {
        Ok(())
    } else {
        Err(format!("took {t:?}, limit {limit:?}"))
    }
}

fn c1_archive_oracle() -> Outcome {
    let started = Instant::now();
    let task = Task::sphere(6).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let log: Vec<(Vec<f64>, ScoringResult)> = (0..C1_EVALS)
        .map(|_| {
            let x: Vec<f64> = (0..6).map(|_| rng.random_range(-5.12..5.12)).collect();
            let r = task.evaluate(&x).unwrap();
            (x, r)
        })
        .collect();
    let grid = GridSpec::new(vec![20, 20], vec![0.0; 2], vec![1.0; 2]).unwrap();
    let cvt = compute_cvt_centroids(200, &Bounds::uniform(2, 0.0, 1.0), 20_000, 20, &mut RngStream::new(3)).unwrap();

    // independent cell rules
    let grid_cell = |d: &[f64]| {
        let ix = ((d[0] * 20.0).floor() as usize).min(19);
        let iy = ((d[1] * 20.0).floor() as usize).min(19);
        ix * 20 + iy
    };
    let cvt_cell = |spec: &CvtSpec, d: &[f64]| {
        let mut best = (f64::INFINITY, 0);
        for (i, c) in spec.centroids().iter().enumerate() {
            let dist = (c[0] - d[0]).powi(2) + (c[1] - d[1]).powi(2);
            if dist < best.0 {
                best = (dist, i);
            }
        }
        best.1
    };
    let containers = [
        (Container::Grid(grid), 400usize),
        (Container::Cvt(cvt.clone()), 200usize),
    ];
    for (kind, (container, n_cells)) in containers.into_iter().enumerate() {
        let mut oracle: Vec<Option<usize>> = vec![None; n_cells];
        for (i, (_, r)) in log.iter().enumerate() {
            let c = if kind == 0 {
                grid_cell(&r.descriptor)
            } else {
                cvt_cell(&cvt, &r.descriptor)
            };
            if oracle[c].is_none_or(|j| r.fitness() > log[j].1.fitness()) {
                oracle[c] = Some(i);
            }
        }
        let mut first: Option<Repertoire> = None;
        for shuffle in 0..3u64 {
            let mut order: Vec<usize> = (0..log.len()).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(100 + shuffle));
            let mut rep = Repertoire::new(container.clone());
            for &i in &order {
                rep.add(&log[i].0, &log[i].1).unwrap();
            }
            for (c, o) in oracle.iter().enumerate() {
                let got = rep.get(c).map(|e| (&e.genotype, e.fitness));
                let want = o.map(|j| (&log[j].0, log[j].1.fitness()));
                if got != want {
                    return Err(format!(
                        "container {kind} shuffle {shuffle} cell {c} differs from argmax"
                    ));
                }
            }
            match &first {
                None => first = Some(rep),
                Some(f) if *f != rep => return Err(format!("container {kind} shuffle {shuffle} differs")),
                _ => {}
            }
        }
    }
    within(C1_LIMIT, started)?;
    Ok(format!(
        "grid and CVT match argmax over {C1_EVALS} evals x 3 shuffles in {:?}",
        started.elapsed()
    ))
}

fn brute_force_fronts(points: &[Vec<f64>]) -> Vec<Vec<usize>> {
    let mut remaining: Vec<usize> = (0..points.len()).collect();
    let mut fronts = Vec::new();
    while !remaining.is_empty() {
        let front: Vec<usize> = remaining
            .iter()
            .copied()
            .filter(|&i| {
                !remaining.iter().any(|&j| {
                    let (a, b) = (&points[j], &points[i]);
                    a.iter().zip(b).all(|(x, y)| x >= y) && a.iter().zip(b).any(|(x, y)| x > y)
                })
            })
            .collect();
        remaining.retain(|i| !front.contains(i));
        fronts.push(front);
    }
    fronts
}

fn c2_pareto_oracle() -> Outcome {
    let started = Instant::now();
    for seed in 0..C2_SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<Vec<f64>> = (0..C2_POINTS)
            .map(|_| (0..3).map(|_| (rng.random_range(0..50) as f64) / 10.0).collect())
            .collect();
        let got = non_dominated_sort(&pts).unwrap();
        if got != brute_force_fronts(&pts) {
            return Err(format!("seed {seed}: fronts differ from the pairwise oracle"));
        }
    }
    within(C2_LIMIT, started)?;
    Ok(format!(
        "{C2_SEEDS} seeds x {C2_POINTS} points match in {:?}",
        started.elapsed()
    ))
}

fn c3_cmaes() -> Outcome {
    let started = Instant::now();
    let n = 10;
    let lambda = default_lambda(n);
    let mut worst_evals = 0;
    for seed in 0..C3_SEEDS {
        let mut rng = RngStream::new(seed);
        let mean: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let mut es = CmaesState::new(mean, 2.0, lambda).unwrap();
        let mut best = f64::INFINITY;
        let mut evals = 0;
        while best >= C3_TARGET && evals + lambda <= C3_BUDGET {
            let xs = es.ask(lambda, &mut rng).unwrap();
            let f: Vec<f64> = xs.iter().map(|x| x.iter().map(|v| v * v).sum()).collect();
            evals += lambda;
            best = f.iter().copied().fold(best, f64::min);
            es.tell(&xs, &rank_ascending(&f)).unwrap();
        }
        if best >= C3_TARGET {
            return Err(format!("seed {seed}: best {best:e} after {evals} evaluations"));
        }
        worst_evals = worst_evals.max(evals);
    }
    within(C3_LIMIT, started)?;
    Ok(format!(
        "{C3_SEEDS}/{C3_SEEDS} seeds below {C3_TARGET:e}, worst {worst_evals} evals (lambda {lambda})"
    ))
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let norm = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / norm.max(1.0)
}

fn c4_gradients() -> Outcome {
    let started = Instant::now();
    let mut worst: f64 = 0.0;
    for (kind, n) in [(TaskKind::Sphere, 8), (TaskKind::Rastrigin, 8), (TaskKind::Arm, 8)] {
        let task = Task::new(kind, n).unwrap();
        let b = task.bounds().clone();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..C4_POINTS {
            // keep finite-difference probes inside the domain
            let x: Vec<f64> = (0..n)
                .map(|j| {
                    let m = 1e-3 * b.width(j);
                    rng.random_range(b.lower[j] + m..b.upper[j] - m)
                })
                .collect();
            let (gf, gd) = task.gradients(&x).unwrap();
            let mut fd_f = vec![0.0; n];
            let mut fd_d = vec![vec![0.0; n]; gd.len()];
            for i in 0..n {
                let mut hi = x.clone();
                let mut lo = x.clone();
                hi[i] += C4_STEP;
                lo[i] -= C4_STEP;
                let (rh, rl) = (task.evaluate(&hi).unwrap(), task.evaluate(&lo).unwrap());
                fd_f[i] = (rh.fitness() - rl.fitness()) / (2.0 * C4_STEP);
                for (j, row) in fd_d.iter_mut().enumerate() {
                    row[i] = (rh.descriptor[j] - rl.descriptor[j]) / (2.0 * C4_STEP);
                }
            }
            worst = worst.max(rel_err(&gf, &fd_f));
            for (g, fd) in gd.iter().zip(&fd_d) {
                worst = worst.max(rel_err(g, fd));
            }
        }
    }
    within(C4_LIMIT, started)?;
    check(
        worst <= C4_TOL,
        format!("worst relative error {worst:.3e} (tolerance {C4_TOL:e}) over 3 tasks x {C4_POINTS} points"),
    )
}

fn c5_determinism(tmp: &Path) -> Outcome {
    let started = Instant::now();
    let cfg = tmp.join("c5.json");
    fs::write(
        &cfg,
        r#"{"task":{"name":"rastrigin","n_params":10},"algorithm":{"name":"map_elites"},
            "container":{"type":"grid","dims":[50,50]},
            "budget":{"init_batch":100,"batch_size":100,"total_evaluations":200000},
            "logging":{"log_every":1000000},"seed":7}"#,
    )
    .unwrap();
    let mut outputs = Vec::new();
    for workers in [1usize, 4, 8] {
        let out = tmp.join(format!("c5_w{workers}"));
        run_command(&RunArgs {
            config: cfg.clone(),
            seed: None,
            workers: Some(workers),
            out: out.clone(),
        })
        .map_err(|e| e.to_string())?;
        outputs.push((
            fs::read(out.join("metrics.csv")).unwrap(),
            fs::read(out.join("archive.json")).unwrap(),
        ));
    }
    within(C5_LIMIT, started)?;
    check(
        outputs.windows(2).all(|w| w[0] == w[1]),
        format!(
            "metrics.csv and archive.json identical for workers 1/4/8 in {:?}",
            started.elapsed()
        ),
    )
}

fn final_qd(config: &str, seed: u64) -> f64 {
    let c = parse_config_str(&config.replace("SEED", &seed.to_string())).unwrap();
    let (_, m) = run_collect(&c, &Executor::sequential()).unwrap();
    m.last().unwrap().qd_score
}

fn c6_comparative() -> Outcome {
    let base = r#"{"task":{"name":"rastrigin","n_params":10},"algorithm":{"name":"map_elites"},
        "container":{"type":"grid","dims":[50,50]},
        "budget":{"init_batch":100,"batch_size":100,"total_evaluations":200000},
        "emitter":EMITTER,"seed":SEED}"#;
    let ga = base.replace("EMITTER", r#"{"type":"isoline","sigma_iso":0.01,"sigma_line":0.1}"#);
    let part = r#"{"proportion":0.2,"emitter":{"type":"cma_me","sigma0":0.5}}"#;
    let cma = base.replace(
        "EMITTER",
        &format!(r#"{{"type":"compound","emitters":[{}]}}"#, [part; 5].join(",")),
    );
    let mut wins = 0;
    let mut rows = Vec::new();
    for seed in 1..=C6_SEEDS {
        let (g, c) = (final_qd(&ga, seed), final_qd(&cma, seed));
        wins += usize::from(c >= g);
        rows.push(format!("seed {seed}: cma_me {c:.1} vs ga {g:.1}"));
    }
    check(
        wins >= C6_MIN_WINS,
        format!("CMA-ME >= GA on {wins}/{C6_SEEDS} seeds ({})", rows.join("; ")),
    )
}

fn c7_nsga2() -> Outcome {
    let started = Instant::now();
    let mut worst: f64 = 0.0;
    for seed in 0..5u64 {
        let c = parse_config_str(&format!(
            r#"{{"task":{{"name":"quadratic_pair","n_params":1}},
            "algorithm":{{"name":"nsga2","population_size":{C7_POP}}},
            "budget":{{"init_batch":{C7_POP},"total_evaluations":{}}},"seed":{seed}}}"#,
            C7_POP as u64 * (1 + C7_GENERATIONS)
        ))
        .unwrap();
        let mut gens = 0;
        let pop = nsga2_run(&c, &Executor::sequential(), &RngStream::new(seed), &mut |r| {
            gens = r.iteration;
            Ok(())
        })
        .map_err(|e| e.to_string())?;
        if gens != C7_GENERATIONS || pop.members.len() != C7_POP {
            return Err(format!(
                "seed {seed}: {gens} generations, {} survivors",
                pop.members.len()
            ));
        }
        for m in &pop.members {
            let x = m.genotype[0];
            worst = worst.max((-x).max(x - 2.0).max(0.0));
        }
    }
    within(C7_LIMIT, started)?;
    check(
        worst <= C7_TOL,
        format!("max distance to [0, 2] is {worst:.2e} over 5 seeds (tolerance {C7_TOL})"),
    )
}

fn c8_mome() -> Outcome {
    let started = Instant::now();
    let c = parse_config_str(&format!(
        r#"{{"task":{{"name":"sphere_rastrigin","n_params":6}},
        "algorithm":{{"name":"mome","front_capacity":10}},
        "container":{{"type":"cvt","k":20,"n_samples":20000,"lloyd_iters":30}},
        "budget":{{"init_batch":100,"batch_size":100,"total_evaluations":{C8_BUDGET}}},"seed":3}}"#
    ))
    .unwrap();
    let (archive, m) = run_collect(&c, &Executor::sequential()).map_err(|e| e.to_string())?;
    let Archive::Fronts(r) = archive else {
        return Err("mome did not return per-cell fronts".into());
    };
    if m.last().unwrap().evaluations != C8_BUDGET {
        return Err("budget not consumed exactly".into());
    }
    if !m.windows(2).all(|w| w[1].qd_score >= w[0].qd_score) {
        return Err("MOME QD score decreased".into());
    }
    let mut points = 0;
    for (cell, front) in r.fronts() {
        if front.len() > r.capacity() {
            return Err(format!("cell {cell} over capacity"));
        }
        for a in front {
            for b in front {
                if dominates(&a.objectives, &b.objectives).unwrap() {
                    return Err(format!("cell {cell} front has a dominated member"));
                }
            }
        }
        points += front.len();
    }
    within(C8_LIMIT, started)?;
    Ok(format!(
        "{} cells, {points} front points, {} non-decreasing records, final QD {:.1} in {:?}",
        r.n_occupied(),
        m.len(),
        m.last().unwrap().qd_score,
        started.elapsed()
    ))
}

fn c9_hypervolume() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst: f64 = 0.0;
    for _ in 0..C9_FRONTS {
        let n = rng.random_range(1..=20);
        let front: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random::<f64>(), rng.random::<f64>()]).collect();
        let exact = hypervolume(&front, &[0.0, 0.0]).unwrap();
        let (mx, my) = front
            .iter()
            .fold((0.0f64, 0.0f64), |(a, b), p| (a.max(p[0]), b.max(p[1])));
        let mut hits = 0usize;
        for _ in 0..C9_SAMPLES {
            let (x, y) = (rng.random::<f64>() * mx, rng.random::<f64>() * my);
            if front.iter().any(|p| p[0] >= x && p[1] >= y) {
                hits += 1;
            }
        }
        let estimate = hits as f64 / C9_SAMPLES as f64 * mx * my;
        worst = worst.max((exact - estimate).abs() / exact);
    }
    within(C9_LIMIT, started)?;
    check(
        worst <= C9_TOL,
        format!("worst relative gap {worst:.2e} vs Monte-Carlo over {C9_FRONTS} fronts (tolerance {C9_TOL})"),
    )
}

fn c10_time(workers: usize) -> Duration {
    let task = Task::sphere(10).unwrap();
    let ex = Executor::new(workers).unwrap();
    let rng = RngStream::new(10);
    let batch = 10_000;
    let archive = QdArchive::Elites(Repertoire::new(Container::Grid(
        GridSpec::new(vec![50, 50], vec![0.0; 2], vec![1.0; 2]).unwrap(),
    )));
    let started = Instant::now();
    let init = uniform_genotypes(task.bounds(), batch, &rng.child(1));
    let emitter = Box::new(GaEmitter::new(IsolineParams::default()));
    let (mut lp, _) = QdLoop::init(&task, &ex, archive, emitter, &init, batch, 0.0, rng.child(2)).unwrap();
    while lp.evaluations() < C10_EVALS {
        lp.step(batch).unwrap();
    }
    started.elapsed()
}

fn c10_throughput() -> Outcome {
    let cores = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let t1 = c10_time(1);
    let t8 = c10_time(8);
    let ratio = t8.as_secs_f64() / t1.as_secs_f64();
    let detail = format!("{C10_EVALS} evals: 1 worker {t1:?}, 8 workers {t8:?}, ratio {ratio:.2} (gate {C10_RATIO})");
    if cores < C10_CORES {
        return Ok(format!(
            "{NOT_EVALUATED}precondition needs {C10_CORES} cores, host has {cores}; measured {detail}"
        ));
    }
    check(ratio <= C10_RATIO, detail)
}

type Criterion<'a> = (&'a str, Box<dyn Fn() -> Outcome + 'a>);

fn main() {
    let tmp = tempfile::tempdir().unwrap();
    let criteria: Vec<Criterion> = vec![
        ("1 archive oracle equivalence", Box::new(c1_archive_oracle)),
        ("2 pareto oracle equivalence", Box::new(c2_pareto_oracle)),
        ("3 cma-es convergence", Box::new(c3_cmaes)),
        ("4 gradient correctness", Box::new(c4_gradients)),
        ("5 determinism across workers", Box::new(|| c5_determinism(tmp.path()))),
        ("6 cma-me vs ga", Box::new(c6_comparative)),
        ("7 nsga-ii analytic front", Box::new(c7_nsga2)),
        ("8 mome invariants", Box::new(c8_mome)),
        ("9 hypervolume oracle", Box::new(c9_hypervolume)),
        ("10 throughput scaling", Box::new(c10_throughput)),
    ];
    let mut failed = 0;
    let mut skipped = 0;
    for (name, run) in &criteria {
        match run() {
            Ok(detail) if detail.starts_with(NOT_EVALUATED) => {
                skipped += 1;
                println!("criterion {name}: NOT EVALUATED - {}", &detail[NOT_EVALUATED.len()..]);
            }
            Ok(detail) => println!("criterion {name}: PASS - {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {name}: FAIL - {detail}");
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed, {skipped} not evaluated",
        criteria.len() - failed - skipped
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
