//! Static k-d tree for nearest-centroid queries.
//!
//! Ties are resolved to the lowest point index and distances are computed the
//! same way as the brute-force scan, so results agree with it exactly.

#[derive(Clone, Debug)]
pub(crate) struct KdTree {
    dims: usize,
    points: Vec<f64>,
    nodes: Vec<Node>,
    root: Option<usize>,
}

#[derive(Clone, Debug)]
struct Node {
    point: usize,
    axis: usize,
    left: Option<usize>,
    right: Option<usize>,
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl KdTree {
    pub(crate) fn build(points: &[Vec<f64>]) -> Self {
        let dims = points.first().map_or(0, |p| p.len());
        let mut flat = Vec::with_capacity(points.len() * dims);
        for p in points {
            flat.extend_from_slice(p);
        }
        let mut tree = KdTree {
            dims,
            points: flat,
            nodes: Vec::with_capacity(points.len()),
            root: None,
        };
        let mut idx: Vec<usize> = (0..points.len()).collect();
        tree.root = tree.build_rec(&mut idx, 0);
        tree
    }

    fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dims..(i + 1) * self.dims]
    }

    fn build_rec(&mut self, idx: &mut [usize], depth: usize) -> Option<usize> {
        if idx.is_empty() {
            return None;
        }
        let axis = depth % self.dims.max(1);
        idx.sort_by(|&a, &b| self.point(a)[axis].total_cmp(&self.point(b)[axis]).then(a.cmp(&b)));
        let mid = idx.len() / 2;
        let point = idx[mid];
        let (left, rest) = idx.split_at_mut(mid);
        let right = &mut rest[1..];
        let l = self.build_rec(left, depth + 1);
        let r = self.build_rec(right, depth + 1);
        self.nodes.push(Node {
            point,
            axis,
            left: l,
            right: r,
        });
        Some(self.nodes.len() - 1)
    }

    /// Index of the nearest point to `q` (lowest index on ties).
    pub(crate) fn nearest(&self, q: &[f64]) -> usize {
        let mut best = (f64::INFINITY, usize::MAX);
        if let Some(root) = self.root {
            self.search(root, q, &mut best);
        }
        best.1
    }

    fn search(&self, node: usize, q: &[f64], best: &mut (f64, usize)) {
        let n = &self.nodes[node];
        let p = self.point(n.point);
        let d = squared_distance(q, p);
        if d < best.0 || (d == best.0 && n.point < best.1) {
            *best = (d, n.point);
        }
        let diff = q[n.axis] - p[n.axis];
        let (near, far) = if diff < 0.0 {
            (n.left, n.right)
        } else {
            (n.right, n.left)
        };
        if let Some(c) = near {
            self.search(c, q, best);
        }
        // `<=` keeps equidistant subtrees in play for the index tie-break.
        if diff * diff <= best.0 {
            if let Some(c) = far {
                self.search(c, q, best);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use rand::Rng;

    fn brute(points: &[Vec<f64>], q: &[f64]) -> usize {
        let mut best = (f64::INFINITY, 0);
        for (i, p) in points.iter().enumerate() {
            let d = squared_distance(q, p);
            if d < best.0 {
                best = (d, i);
            }
        }
        best.1
    }

    #[test]
    fn agrees_with_brute_force() {
        let mut rng = RngStream::new(3);
        for dims in 1..=4 {
            let pts: Vec<Vec<f64>> = (0..300)
                .map(|_| (0..dims).map(|_| rng.random::<f64>()).collect())
                .collect();
            let tree = KdTree::build(&pts);
            for _ in 0..500 {
                let q: Vec<f64> = (0..dims).map(|_| rng.random::<f64>() * 1.2 - 0.1).collect();
                assert_eq!(tree.nearest(&q), brute(&pts, &q));
            }
        }
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let pts = vec![vec![1.0, 1.0], vec![0.0, 0.0], vec![2.0, 2.0], vec![0.0, 0.0]];
        let tree = KdTree::build(&pts);
        assert_eq!(tree.nearest(&[0.5, 0.5]), 0);
        assert_eq!(tree.nearest(&[0.0, 0.0]), 1);
    }
}
