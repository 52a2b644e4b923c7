//! Archive containers: uniform grids, CVT archives, per-cell Pareto fronts,
//! and the Pareto utilities shared with the population-based baselines.

mod kdtree;
pub mod mome;
pub mod pareto;
pub mod repertoire;

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, QdError, Result};
use crate::rng::RngStream;
use crate::types::{Bounds, CellId};

use kdtree::KdTree;

pub use mome::{mome_cell_add, MoElite, MoRepertoire};
pub use pareto::{crowding_distance, dominates, non_dominated_sort, spea2_fitness};
pub use repertoire::{Elite, ParentPool, Repertoire};

/// Uniform grid over a descriptor box, flattened row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dims: Vec<usize>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl GridSpec {
    pub fn new(dims: Vec<usize>, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let spec = Self { dims, lower, upper };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.is_empty() || self.dims.contains(&0) {
            return Err(QdError::Config("grid dims must be non-empty and >= 1".into()));
        }
        let b = Bounds::new(self.lower.clone(), self.upper.clone());
        if b.dim() != self.dims.len() || !b.is_valid() {
            return Err(QdError::Config(
                "grid bounds must match dims and satisfy lower < upper".into(),
            ));
        }
        self.dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| QdError::Config("grid has too many cells".into()))?;
        Ok(())
    }

    pub fn n_cells(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn cell_index(&self, descriptor: &[f64]) -> Result<CellId> {
        if descriptor.len() != self.dims.len() {
            return invalid(format!(
                "descriptor has {} components, grid has {} axes",
                descriptor.len(),
                self.dims.len()
            ));
        }
        let mut id = 0usize;
        for (axis, &d) in descriptor.iter().enumerate() {
            if !d.is_finite() {
                return Err(QdError::Scoring("non-finite descriptor component".into()));
            }
            let n = self.dims[axis];
            let lo = self.lower[axis];
            let hi = self.upper[axis];
            let raw = ((d - lo) / (hi - lo) * n as f64).floor();
            let i = raw.clamp(0.0, (n - 1) as f64) as usize;
            id = id * n + i;
        }
        Ok(id)
    }
}

/// Archive cells defined by nearest centroid.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "CvtSpecRaw", into = "CvtSpecRaw")]
pub struct CvtSpec {
    centroids: Vec<Vec<f64>>,
    bounds: Bounds,
    tree: KdTree,
}

#[derive(Serialize, Deserialize)]
struct CvtSpecRaw {
    centroids: Vec<Vec<f64>>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl TryFrom<CvtSpecRaw> for CvtSpec {
    type Error = QdError;

    fn try_from(raw: CvtSpecRaw) -> Result<Self> {
        CvtSpec::new(raw.centroids, Bounds::new(raw.lower, raw.upper))
    }
}

impl From<CvtSpec> for CvtSpecRaw {
    fn from(spec: CvtSpec) -> Self {
        CvtSpecRaw {
            centroids: spec.centroids,
            lower: spec.bounds.lower,
            upper: spec.bounds.upper,
        }
    }
}

impl PartialEq for CvtSpec {
    fn eq(&self, other: &Self) -> bool {
        self.centroids == other.centroids && self.bounds == other.bounds
    }
}

impl CvtSpec {
    pub fn new(centroids: Vec<Vec<f64>>, bounds: Bounds) -> Result<Self> {
        if centroids.is_empty() {
            return Err(QdError::Config("CVT needs at least one centroid".into()));
        }
        if !bounds.is_valid() {
            return Err(QdError::Config("CVT bounds must satisfy lower < upper".into()));
        }
        if let Some(bad) = centroids.iter().position(|c| !bounds.contains(c)) {
            return Err(QdError::Config(format!(
                "centroid {bad} has the wrong dimension or lies outside the bounds"
            )));
        }
        let mut order: Vec<&Vec<f64>> = centroids.iter().collect();
        order.sort_by(|a, b| {
            a.iter()
                .zip(b.iter())
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        if order.windows(2).any(|w| w[0] == w[1]) {
            return Err(QdError::Config("CVT centroids must be distinct".into()));
        }
        let tree = KdTree::build(&centroids);
        Ok(Self {
            centroids,
            bounds,
            tree,
        })
    }

    pub fn centroids(&self) -> &[Vec<f64>] {
        &self.centroids
    }

    pub fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    pub fn n_cells(&self) -> usize {
        self.centroids.len()
    }

    pub fn d_dims(&self) -> usize {
        self.bounds.dim()
    }

    /// Euclidean-nearest centroid, lowest index on ties.
    pub fn cell_index(&self, descriptor: &[f64]) -> Result<CellId> {
        if descriptor.len() != self.d_dims() {
            return invalid(format!(
                "descriptor has {} components, CVT has {}",
                descriptor.len(),
                self.d_dims()
            ));
        }
        if descriptor.iter().any(|d| !d.is_finite()) {
            return Err(QdError::Scoring("non-finite descriptor component".into()));
        }
        Ok(self.tree.nearest(descriptor))
    }
}

/// Default CVT construction parameters.
pub const CVT_DEFAULT_SAMPLES: usize = 100_000;
pub const CVT_DEFAULT_LLOYD_ITERS: usize = 50;
const CVT_SHIFT_TOLERANCE: f64 = 1e-6;

/// Lloyd's k-means on uniform samples in `bounds`, seeded from `k` of them.
pub fn compute_cvt_centroids(
    k: usize,
    bounds: &Bounds,
    n_samples: usize,
    lloyd_iters: usize,
    rng: &mut RngStream,
) -> Result<CvtSpec> {
    if k == 0 {
        return invalid("k must be at least 1");
    }
    if k > n_samples {
        return invalid(format!("k = {k} exceeds n_samples = {n_samples}"));
    }
    if !bounds.is_valid() {
        return invalid("bounds must satisfy lower < upper");
    }
    let d = bounds.dim();
    let samples: Vec<Vec<f64>> = (0..n_samples)
        .map(|_| {
            (0..d)
                .map(|j| rng.random_range(bounds.lower[j]..bounds.upper[j]))
                .collect()
        })
        .collect();
    let mut centroids: Vec<Vec<f64>> = sample_indices(rng, n_samples, k)
        .into_iter()
        .map(|i| samples[i].clone())
        .collect();

    for _ in 0..lloyd_iters {
        let tree = KdTree::build(&centroids);
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for s in &samples {
            let c = tree.nearest(s);
            counts[c] += 1;
            for (acc, v) in sums[c].iter_mut().zip(s) {
                *acc += v;
            }
        }
        let mut max_shift: f64 = 0.0;
        for c in 0..k {
            if counts[c] == 0 {
                continue;
            }
            let updated: Vec<f64> = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            max_shift = max_shift.max(kdtree::squared_distance(&updated, &centroids[c]).sqrt());
            centroids[c] = updated;
        }
        if max_shift < CVT_SHIFT_TOLERANCE {
            break;
        }
    }
    CvtSpec::new(centroids, bounds.clone())
}

/// Cell layout of a grid or CVT archive.
#[derive(Clone, Debug, PartialEq)]
pub enum Container {
    Grid(GridSpec),
    Cvt(CvtSpec),
}

impl Container {
    pub fn n_cells(&self) -> usize {
        match self {
            Container::Grid(g) => g.n_cells(),
            Container::Cvt(c) => c.n_cells(),
        }
    }

    pub fn d_dims(&self) -> usize {
        match self {
            Container::Grid(g) => g.dims.len(),
            Container::Cvt(c) => c.d_dims(),
        }
    }

    pub fn cell_index(&self, descriptor: &[f64]) -> Result<CellId> {
        match self {
            Container::Grid(g) => g.cell_index(descriptor),
            Container::Cvt(c) => c.cell_index(descriptor),
        }
    }
}
