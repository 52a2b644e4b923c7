//! Benchmark scoring functions with descriptors, bounds and analytic gradients.
//!
//! Every task maximizes. Sphere and rastrigin are negated; their descriptor is
//! the first two coordinates rescaled to `[0, 1]`. The planar arm uses the
//! end-effector position as descriptor and the negative spread of the joint
//! parameters as fitness.

use std::f64::consts::PI;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{QdError, Result};
use crate::types::{Bounds, ScoringResult};

const BOX: f64 = 5.12;
const BOX_WIDTH: f64 = 2.0 * BOX;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Sphere,
    Rastrigin,
    Arm,
    /// Bi-objective (sphere fitness, rastrigin fitness) on the shared box.
    SphereRastrigin,
    /// Bi-objective `(-x1^2, -(x1 - 2)^2)`; Pareto set is `x1 in [0, 2]`.
    QuadraticPair,
}

impl TaskKind {
    pub fn name(&self) -> &'static str {
        match self {
            TaskKind::Sphere => "sphere",
            TaskKind::Rastrigin => "rastrigin",
            TaskKind::Arm => "arm",
            TaskKind::SphereRastrigin => "sphere_rastrigin",
            TaskKind::QuadraticPair => "quadratic_pair",
        }
    }
}

/// Static description of a task instance.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskSpec {
    pub name: &'static str,
    pub n_params: usize,
    pub bounds: Bounds,
    pub d_dims: usize,
    pub descriptor_bounds: Bounds,
    pub differentiable: bool,
    pub n_objectives: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Task {
    kind: TaskKind,
    spec: TaskSpec,
}

impl Task {
    pub fn new(kind: TaskKind, n_params: usize) -> Result<Self> {
        let min_params = match kind {
            TaskKind::Sphere | TaskKind::Rastrigin | TaskKind::SphereRastrigin => 2,
            TaskKind::Arm | TaskKind::QuadraticPair => 1,
        };
        if n_params < min_params {
            return Err(QdError::Config(format!(
                "task {} needs n_params >= {min_params}, got {n_params}",
                kind.name()
            )));
        }
        let bounds = match kind {
            TaskKind::Arm => Bounds::uniform(n_params, 0.0, 1.0),
            _ => Bounds::uniform(n_params, -BOX, BOX),
        };
        let d_dims = match kind {
            TaskKind::QuadraticPair => n_params.min(2),
            _ => 2,
        };
        let spec = TaskSpec {
            name: kind.name(),
            n_params,
            bounds,
            d_dims,
            descriptor_bounds: Bounds::uniform(d_dims, 0.0, 1.0),
            differentiable: matches!(kind, TaskKind::Sphere | TaskKind::Rastrigin | TaskKind::Arm),
            n_objectives: match kind {
                TaskKind::SphereRastrigin | TaskKind::QuadraticPair => 2,
                _ => 1,
            },
        };
        Ok(Self { kind, spec })
    }

    pub fn sphere(n: usize) -> Result<Self> {
        Self::new(TaskKind::Sphere, n)
    }

    pub fn rastrigin(n: usize) -> Result<Self> {
        Self::new(TaskKind::Rastrigin, n)
    }

    pub fn arm(n: usize) -> Result<Self> {
        Self::new(TaskKind::Arm, n)
    }

    pub fn kind(&self) -> TaskKind {
        self.kind
    }

    pub fn spec(&self) -> &TaskSpec {
        &self.spec
    }

    pub fn bounds(&self) -> &Bounds {
        &self.spec.bounds
    }

    pub fn n_params(&self) -> usize {
        self.spec.n_params
    }

    /// Smallest attainable value of each objective on the domain.
    pub fn objective_lower_bounds(&self) -> Vec<f64> {
        let n = self.spec.n_params as f64;
        let sphere = -n * BOX * BOX;
        let rastrigin = -n * rastrigin_term_max();
        match self.kind {
            TaskKind::Sphere => vec![sphere],
            TaskKind::Rastrigin => vec![rastrigin],
            TaskKind::Arm => vec![-0.5],
            TaskKind::SphereRastrigin => vec![sphere, rastrigin],
            TaskKind::QuadraticPair => vec![-BOX * BOX, -(BOX + 2.0) * (BOX + 2.0)],
        }
    }

    /// Default QD-score offset: the minimum fitness on the domain.
    pub fn min_fitness(&self) -> f64 {
        self.objective_lower_bounds()[0]
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.spec.n_params {
            return Err(QdError::Scoring(format!(
                "{} expects {} parameters, got {}",
                self.spec.name,
                self.spec.n_params,
                x.len()
            )));
        }
        if !self.spec.bounds.contains(x) {
            return Err(QdError::Scoring(format!("genotype outside {} bounds", self.spec.name)));
        }
        Ok(())
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<ScoringResult> {
        self.check(x)?;
        Ok(match self.kind {
            TaskKind::Sphere => eval_sphere(x),
            TaskKind::Rastrigin => eval_rastrigin(x),
            TaskKind::Arm => eval_arm(x),
            TaskKind::SphereRastrigin => ScoringResult {
                objectives: vec![sphere_value(x), rastrigin_value(x)],
                descriptor: box_descriptor(x, 2),
                fitness_gradient: None,
                descriptor_gradients: None,
            },
            TaskKind::QuadraticPair => ScoringResult {
                objectives: vec![-x[0] * x[0], -(x[0] - 2.0) * (x[0] - 2.0)],
                descriptor: box_descriptor(x, self.spec.d_dims),
                fitness_gradient: None,
                descriptor_gradients: None,
            },
        })
    }

    /// Analytic gradients of the fitness and of each descriptor component.
    pub fn gradients(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        if !self.spec.differentiable {
            return Err(QdError::Config(format!(
                "task {} is not differentiable",
                self.spec.name
            )));
        }
        let r = self.evaluate(x)?;
        Ok((
            r.fitness_gradient.expect("differentiable task"),
            r.descriptor_gradients.expect("differentiable task"),
        ))
    }
}

fn box_descriptor(x: &[f64], dims: usize) -> Vec<f64> {
    x[..dims].iter().map(|v| (v + BOX) / BOX_WIDTH).collect()
}

fn box_descriptor_gradients(n: usize) -> Vec<Vec<f64>> {
    (0..2)
        .map(|j| {
            let mut row = vec![0.0; n];
            row[j] = 1.0 / BOX_WIDTH;
            row
        })
        .collect()
}

fn sphere_value(x: &[f64]) -> f64 {
    -x.iter().map(|v| v * v).sum::<f64>()
}

fn rastrigin_value(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    -(10.0 * n + x.iter().map(|v| v * v - 10.0 * (2.0 * PI * v).cos()).sum::<f64>())
}

pub fn eval_sphere(x: &[f64]) -> ScoringResult {
    ScoringResult {
        objectives: vec![sphere_value(x)],
        descriptor: box_descriptor(x, 2),
        fitness_gradient: Some(x.iter().map(|v| -2.0 * v).collect()),
        descriptor_gradients: Some(box_descriptor_gradients(x.len())),
    }
}

pub fn eval_rastrigin(x: &[f64]) -> ScoringResult {
    ScoringResult {
        objectives: vec![rastrigin_value(x)],
        descriptor: box_descriptor(x, 2),
        fitness_gradient: Some(
            x.iter()
                .map(|v| -(2.0 * v + 20.0 * PI * (2.0 * PI * v).sin()))
                .collect(),
        ),
        descriptor_gradients: Some(box_descriptor_gradients(x.len())),
    }
}

pub fn eval_arm(x: &[f64]) -> ScoringResult {
    let n = x.len();
    let nf = n as f64;
    let mut alpha = 0.0;
    let mut cos_a = Vec::with_capacity(n);
    let mut sin_a = Vec::with_capacity(n);
    for v in x {
        alpha += 2.0 * PI * (v - 0.5);
        cos_a.push(alpha.cos());
        sin_a.push(alpha.sin());
    }
    let ex = cos_a.iter().sum::<f64>() / nf;
    let ey = sin_a.iter().sum::<f64>() / nf;

    // d alpha_k / d x_i = 2 pi for k >= i, so each gradient entry is a suffix sum.
    let mut gx = vec![0.0; n];
    let mut gy = vec![0.0; n];
    let (mut sx, mut sy) = (0.0, 0.0);
    for i in (0..n).rev() {
        sx += -sin_a[i];
        sy += cos_a[i];
        gx[i] = 0.5 * 2.0 * PI * sx / nf;
        gy[i] = 0.5 * 2.0 * PI * sy / nf;
    }

    let mean = x.iter().sum::<f64>() / nf;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / nf;
    let std = var.sqrt();
    let fitness_gradient = if std > 0.0 {
        x.iter().map(|v| -(v - mean) / (nf * std)).collect()
    } else {
        vec![0.0; n]
    };

    ScoringResult {
        objectives: vec![-std],
        descriptor: vec![(ex + 1.0) / 2.0, (ey + 1.0) / 2.0],
        fitness_gradient: Some(fitness_gradient),
        descriptor_gradients: Some(vec![gx, gy]),
    }
}

/// `max over [-5.12, 5.12] of 10 + x^2 - 10 cos(2 pi x)`.
fn rastrigin_term_max() -> f64 {
    static MAX: OnceLock<f64> = OnceLock::new();
    *MAX.get_or_init(|| {
        let term = |x: f64| 10.0 + x * x - 10.0 * (2.0 * PI * x).cos();
        let steps = 200_000;
        let (mut best_x, mut best) = (0.0, f64::MIN);
        for i in 0..=steps {
            let x = -BOX + BOX_WIDTH * i as f64 / steps as f64;
            let t = term(x);
            if t > best {
                best = t;
                best_x = x;
            }
        }
        // golden-section refinement around the grid maximum
        let h = BOX_WIDTH / steps as f64;
        let (mut a, mut b) = ((best_x - h).max(-BOX), (best_x + h).min(BOX));
        let g = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..100 {
            let c = b - g * (b - a);
            let d = a + g * (b - a);
            if term(c) > term(d) {
                b = d;
            } else {
                a = c;
            }
        }
        term((a + b) / 2.0).max(best)
    })
}
