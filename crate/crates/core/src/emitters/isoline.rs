use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::containers::ParentPool;
use crate::emitters::{EmitContext, Emitter};
use crate::error::{invalid, QdError, Result};
use crate::rng::RngStream;
use crate::types::{Bounds, Genotype, Improvement, ScoringResult};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IsolineParams {
    #[serde(default = "default_sigma_iso")]
    pub sigma_iso: f64,
    #[serde(default = "default_sigma_line")]
    pub sigma_line: f64,
}

fn default_sigma_iso() -> f64 {
    0.01
}

fn default_sigma_line() -> f64 {
    0.1
}

impl Default for IsolineParams {
    fn default() -> Self {
        Self {
            sigma_iso: default_sigma_iso(),
            sigma_line: default_sigma_line(),
        }
    }
}

impl IsolineParams {
    pub fn validate(&self) -> Result<()> {
        let ok = |s: f64| s.is_finite() && s >= 0.0;
        if !(ok(self.sigma_iso) && ok(self.sigma_line)) {
            return Err(QdError::Validation(
                "iso+line sigmas must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// `clip(x1 + sigma_iso * eps + sigma_line * eta * (x2 - x1))` with
/// `eps ~ N(0, I)` and scalar `eta ~ N(0, 1)`.
pub fn isoline_variation(
    x1: &[f64],
    x2: &[f64],
    params: &IsolineParams,
    bounds: &Bounds,
    rng: &mut RngStream,
) -> Result<Genotype> {
    let iso = vec![params.sigma_iso; x1.len()];
    isoline_scaled(x1, x2, &iso, params.sigma_line, bounds, rng)
}

/// Iso+line with a per-axis isotropic scale.
pub(crate) fn isoline_scaled(
    x1: &[f64],
    x2: &[f64],
    sigma_iso: &[f64],
    sigma_line: f64,
    bounds: &Bounds,
    rng: &mut RngStream,
) -> Result<Genotype> {
    if x1.len() != x2.len() || x1.len() != bounds.dim() {
        return invalid(format!(
            "parent lengths {} and {} do not match bounds of dimension {}",
            x1.len(),
            x2.len(),
            bounds.dim()
        ));
    }
    let eta: f64 = StandardNormal.sample(rng);
    let mut child: Genotype = x1
        .iter()
        .zip(x2)
        .zip(sigma_iso)
        .map(|((a, b), s)| {
            let eps: f64 = StandardNormal.sample(rng);
            a + s * eps + sigma_line * eta * (b - a)
        })
        .collect();
    bounds.clip(&mut child);
    Ok(child)
}

/// Uniform parent selection plus iso+line variation. The isotropic sigma is
/// multiplied by each axis' bound width.
pub struct GaEmitter {
    params: IsolineParams,
}

impl GaEmitter {
    pub fn new(params: IsolineParams) -> Self {
        Self { params }
    }
}

impl Emitter for GaEmitter {
    fn name(&self) -> &'static str {
        "isoline"
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
        let bounds = ctx.task.bounds();
        let iso: Vec<f64> = (0..bounds.dim())
            .map(|j| self.params.sigma_iso * bounds.width(j))
            .collect();
        let sigma_line = self.params.sigma_line;
        ctx.executor.try_map(count, |i| {
            let mut r = rng.child(i as u64);
            let x1 = pool.sample_one(&mut r)?;
            let x2 = pool.sample_one(&mut r)?;
            isoline_scaled(x1, x2, &iso, sigma_line, bounds, &mut r)
        })
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
}
