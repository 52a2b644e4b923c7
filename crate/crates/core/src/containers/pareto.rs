//! Pareto-dominance utilities (maximization convention).

use crate::error::{invalid, Result};

/// `a` dominates `b`: no worse on every objective, strictly better on one.
pub fn dominates(a: &[f64], b: &[f64]) -> Result<bool> {
    if a.len() != b.len() {
        return invalid(format!("objective dimensions differ: {} vs {}", a.len(), b.len()));
    }
    Ok(dominates_unchecked(a, b))
}

pub(crate) fn dominates_unchecked(a: &[f64], b: &[f64]) -> bool {
    let mut strictly = false;
    for (x, y) in a.iter().zip(b) {
        if x < y {
            return false;
        }
        if x > y {
            strictly = true;
        }
    }
    strictly
}

/// Fast non-dominated sorting. Indices inside each front are ascending.
pub fn non_dominated_sort<P: AsRef<[f64]>>(points: &[P]) -> Result<Vec<Vec<usize>>> {
    let n = points.len();
    if let Some(first) = points.first() {
        let m = first.as_ref().len();
        if points.iter().any(|p| p.as_ref().len() != m) {
            return invalid("points have mixed objective dimensions");
        }
    }
    let mut dominated_by_count = vec![0usize; n];
    let mut dominates_list: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in (i + 1)..n {
            let (a, b) = (points[i].as_ref(), points[j].as_ref());
            if dominates_unchecked(a, b) {
                dominates_list[i].push(j);
                dominated_by_count[j] += 1;
            } else if dominates_unchecked(b, a) {
                dominates_list[j].push(i);
                dominated_by_count[i] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| dominated_by_count[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            for &j in &dominates_list[i] {
                dominated_by_count[j] -= 1;
                if dominated_by_count[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        fronts.push(std::mem::take(&mut current));
        current = next;
    }
    Ok(fronts)
}

/// Crowding distance of each point in a front; boundary points are `+inf`.
pub fn crowding_distance<P: AsRef<[f64]>>(front: &[P]) -> Vec<f64> {
    let n = front.len();
    if n <= 2 {
        return vec![f64::INFINITY; n];
    }
    let m = front[0].as_ref().len();
    let mut dist = vec![0.0; n];
    let mut order: Vec<usize> = (0..n).collect();
    for obj in 0..m {
        let value = |i: usize| front[i].as_ref()[obj];
        order.sort_by(|&a, &b| value(a).total_cmp(&value(b)).then(a.cmp(&b)));
        let lo = value(order[0]);
        let hi = value(order[n - 1]);
        dist[order[0]] = f64::INFINITY;
        dist[order[n - 1]] = f64::INFINITY;
        let range = hi - lo;
        if range <= 0.0 {
            continue;
        }
        for w in 1..n - 1 {
            let i = order[w];
            dist[i] += (value(order[w + 1]) - value(order[w - 1])) / range;
        }
    }
    dist
}

#[derive(Clone, Debug, PartialEq)]
pub struct Spea2Fitness {
    pub strength: Vec<usize>,
    pub raw: Vec<f64>,
    pub density: Vec<f64>,
    /// `raw + density`; lower is better, below 1 means non-dominated.
    pub fitness: Vec<f64>,
}

/// Strength, raw fitness and k-th-nearest-neighbour density.
pub fn spea2_components<P: AsRef<[f64]>>(points: &[P], k: usize) -> Result<Spea2Fitness> {
    if k == 0 {
        return invalid("k must be at least 1");
    }
    let n = points.len();
    let mut strength = vec![0usize; n];
    for i in 0..n {
        for j in 0..n {
            if i != j && dominates_unchecked(points[i].as_ref(), points[j].as_ref()) {
                strength[i] += 1;
            }
        }
    }
    let mut raw = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            if i != j && dominates_unchecked(points[j].as_ref(), points[i].as_ref()) {
                raw[i] += strength[j] as f64;
            }
        }
    }
    let density: Vec<f64> = (0..n)
        .map(|i| {
            let sigma = kth_neighbour_distance(points, i, k);
            1.0 / (sigma + 2.0)
        })
        .collect();
    let fitness = raw.iter().zip(&density).map(|(r, d)| r + d).collect();
    Ok(Spea2Fitness {
        strength,
        raw,
        density,
        fitness,
    })
}

pub fn spea2_fitness<P: AsRef<[f64]>>(points: &[P], k: usize) -> Result<Vec<f64>> {
    Ok(spea2_components(points, k)?.fitness)
}

/// Euclidean distance from point `i` to its k-th nearest other point
/// (`k` is clamped to the number of other points; 0 when there are none).
pub(crate) fn kth_neighbour_distance<P: AsRef<[f64]>>(points: &[P], i: usize, k: usize) -> f64 {
    let mut d: Vec<f64> = points
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, p)| euclidean(points[i].as_ref(), p.as_ref()))
        .collect();
    if d.is_empty() {
        return 0.0;
    }
    d.sort_by(f64::total_cmp);
    d[k.min(d.len()) - 1]
}

pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dominance_examples() {
        assert!(dominates(&[2.0, 2.0], &[1.0, 1.0]).unwrap());
        assert!(!dominates(&[1.0, 2.0], &[2.0, 1.0]).unwrap());
        assert!(!dominates(&[2.0, 1.0], &[1.0, 2.0]).unwrap());
        assert!(!dominates(&[1.0, 1.0], &[1.0, 1.0]).unwrap());
        assert!(dominates(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn sort_examples() {
        let pts = vec![vec![1.0, 1.0], vec![2.0, 2.0], vec![3.0, 0.0]];
        assert_eq!(non_dominated_sort(&pts).unwrap(), vec![vec![1, 2], vec![0]]);
        assert_eq!(non_dominated_sort(&[vec![1.0, 2.0]]).unwrap(), vec![vec![0]]);
        let same = vec![vec![1.0, 1.0]; 4];
        assert_eq!(non_dominated_sort(&same).unwrap(), vec![vec![0, 1, 2, 3]]);
    }

    #[test]
    fn crowding_examples() {
        let d = crowding_distance(&[vec![0.0, 2.0], vec![1.0, 1.0], vec![2.0, 0.0]]);
        assert_eq!(d, vec![f64::INFINITY, 2.0, f64::INFINITY]);
        assert_eq!(
            crowding_distance(&[vec![0.0, 1.0], vec![1.0, 0.0]]),
            vec![f64::INFINITY; 2]
        );
        let d = crowding_distance(&vec![vec![1.0, 1.0]; 4]);
        assert_eq!(d, vec![f64::INFINITY, 0.0, 0.0, f64::INFINITY]);
    }

    #[test]
    fn spea2_examples() {
        let pts = vec![vec![2.0, 2.0], vec![1.0, 1.0], vec![0.0, 0.0]];
        let c = spea2_components(&pts, 1).unwrap();
        assert_eq!(c.strength, vec![2, 1, 0]);
        assert_eq!(c.raw, vec![0.0, 2.0, 3.0]);

        let pair = vec![vec![0.0, 0.0], vec![1.0, 0.0]];
        let c = spea2_components(&pair, 1).unwrap();
        assert_eq!(c.density, vec![1.0 / 3.0, 1.0 / 3.0]);
        assert!(spea2_fitness(&pair, 0).is_err());
    }
}
