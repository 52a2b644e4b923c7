//! Pinned regressions. Exact values guard against accidental changes to the
//! random stream layout or the algorithms themselves.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use qdlab::algorithms::{nsga2_select, run_collect};
use qdlab::archive_io::Archive;
use qdlab::config::parse_config_str;
use qdlab::exec::Executor;
use qdlab::types::MetricsRecord;

fn final_record(cfg: &str) -> (Archive, MetricsRecord) {
    let c = parse_config_str(cfg).unwrap();
    let (archive, m) = run_collect(&c, &Executor::sequential()).unwrap();
    (archive, m.last().unwrap().clone())
}

#[test]
fn map_elites_rastrigin_is_pinned() {
    let (_, last) = final_record(
        r#"{"task":{"name":"rastrigin","n_params":10},"algorithm":{"name":"map_elites"},
        "container":{"type":"grid","dims":[50,50]},
        "budget":{"init_batch":100,"batch_size":100,"total_evaluations":200000},
        "emitter":{"type":"isoline","sigma_iso":0.01,"sigma_line":0.1},"seed":1}"#,
    );
    assert_eq!(last.evaluations, 200_000);
    assert_eq!(last.qd_score, 857423.6282113373);
    assert_eq!(last.coverage, 1.0);
}

#[test]
fn mome_sphere_rastrigin_is_pinned() {
    let (archive, last) = final_record(
        r#"{"task":{"name":"sphere_rastrigin","n_params":6},"algorithm":{"name":"mome","front_capacity":10},
        "container":{"type":"cvt","k":20,"n_samples":20000,"lloyd_iters":30},
        "budget":{"init_batch":100,"batch_size":100,"total_evaluations":50000},"seed":3}"#,
    );
    let Archive::Fronts(r) = archive else {
        panic!("expected per-cell fronts")
    };
    assert_eq!(r.n_occupied(), 20);
    assert_eq!(last.iteration, 499);
    assert_eq!(last.qd_score, 679974.8662109332);
    assert_eq!(last.max_fitness, Some(37871.64567360156));
}

fn population_hv(algorithm: &str, task: &str, n_params: usize, pop: usize, generations: usize) -> f64 {
    let cfg = format!(
        r#"{{"task":{{"name":"{task}","n_params":{n_params}}},
        "algorithm":{{"name":"{algorithm}","population_size":{pop}}},
        "budget":{{"init_batch":{pop},"total_evaluations":{}}},"seed":2}}"#,
        pop * (generations + 1)
    );
    final_record(&cfg).1.qd_score
}

#[test]
fn spea2_matches_nsga2_hypervolume() {
    for (task, n, pop, gens) in [("quadratic_pair", 1, 40, 100), ("sphere_rastrigin", 6, 100, 200)] {
        let nsga = population_hv("nsga2", task, n, pop, gens);
        let spea = population_hv("spea2", task, n, pop, gens);
        let gap = (spea - nsga).abs() / nsga;
        assert!(gap <= 0.05, "{task}: spea2 {spea} vs nsga2 {nsga}");
    }
}

fn dominates(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x >= y) && a.iter().zip(b).any(|(x, y)| x > y)
}

// Peels fronts by brute force, then fills whole fronts and truncates the split
// front by crowding distance computed from scratch.
#[allow(clippy::needless_range_loop)]
fn oracle_select(points: &[Vec<f64>], n: usize) -> Vec<usize> {
    let mut left: Vec<usize> = (0..points.len()).collect();
    let mut out = Vec::new();
    while out.len() < n {
        let front: Vec<usize> = left
            .iter()
            .copied()
            .filter(|&i| !left.iter().any(|&j| dominates(&points[j], &points[i])))
            .collect();
        left.retain(|i| !front.contains(i));
        if out.len() + front.len() <= n {
            out.extend(front);
            continue;
        }
        let mut crowd = vec![0.0f64; front.len()];
        for k in 0..points[0].len() {
            let v = |i: usize| points[front[i]][k];
            let mut sorted: Vec<usize> = (0..front.len()).collect();
            sorted.sort_by(|&a, &b| v(a).partial_cmp(&v(b)).unwrap());
            let last = front.len() - 1;
            let span = v(sorted[last]) - v(sorted[0]);
            crowd[sorted[0]] = f64::INFINITY;
            crowd[sorted[last]] = f64::INFINITY;
            for w in 1..last {
                crowd[sorted[w]] += (v(sorted[w + 1]) - v(sorted[w - 1])) / span;
            }
        }
        let mut by_crowd: Vec<usize> = (0..front.len()).collect();
        by_crowd.sort_by(|&a, &b| crowd[b].partial_cmp(&crowd[a]).unwrap());
        let need = n - out.len();
        out.extend(by_crowd[..need].iter().map(|&k| front[k]));
    }
    out.sort_unstable();
    out
}

#[test]
fn nsga2_survivors_match_brute_force() {
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    for trial in 0..200 {
        let n = 2 * rng.random_range(1..=32usize);
        let m = 2 + trial % 2;
        let points: Vec<Vec<f64>> = (0..2 * n)
            .map(|_| (0..m).map(|_| rng.random::<f64>()).collect())
            .collect();
        let refs: Vec<&[f64]> = points.iter().map(Vec::as_slice).collect();
        let mut got = nsga2_select(&refs, n).unwrap();
        got.sort_unstable();
        assert_eq!(got, oracle_select(&points, n), "trial {trial}");
    }
}
