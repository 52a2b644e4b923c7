use serde::{Deserialize, Serialize};

/// Real-valued solution vector. Components stay inside the task bounds.
pub type Genotype = Vec<f64>;

/// Flat index of an archive cell.
pub type CellId = usize;

/// Output of a scoring function for one genotype.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoringResult {
    /// One entry for single-objective tasks, `m` entries otherwise. Maximized.
    pub objectives: Vec<f64>,
    pub descriptor: Vec<f64>,
    pub fitness_gradient: Option<Vec<f64>>,
    /// One row per descriptor dimension.
    pub descriptor_gradients: Option<Vec<Vec<f64>>>,
}

impl ScoringResult {
    pub fn fitness(&self) -> f64 {
        self.objectives[0]
    }
}

/// Per-iteration metrics of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub iteration: u64,
    /// Cumulative number of scored candidates.
    pub evaluations: u64,
    pub qd_score: f64,
    pub coverage: f64,
    /// `None` while the archive is empty.
    pub max_fitness: Option<f64>,
    pub wall_time_ms: f64,
}

/// Per-candidate effect of an addition, judged against the archive as it was
/// before the batch was added.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Improvement {
    NewCell,
    Improved { delta: f64 },
    NotImproved,
}

impl Improvement {
    pub fn is_improvement(&self) -> bool {
        !matches!(self, Improvement::NotImproved)
    }
}

/// Inclusive per-axis box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        Self { lower, upper }
    }

    pub fn uniform(dim: usize, lo: f64, hi: f64) -> Self {
        Self {
            lower: vec![lo; dim],
            upper: vec![hi; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn width(&self, axis: usize) -> f64 {
        self.upper[axis] - self.lower[axis]
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    pub fn clip(&self, x: &mut [f64]) {
        for ((v, lo), hi) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(*lo, *hi);
        }
    }

    pub fn is_valid(&self) -> bool {
        self.lower.len() == self.upper.len()
            && !self.lower.is_empty()
            && self
                .lower
                .iter()
                .zip(&self.upper)
                .all(|(lo, hi)| lo.is_finite() && hi.is_finite() && lo < hi)
    }
}
