//! (mu/mu_w, lambda) CMA-ES with the standard default strategy parameters.
//!
//! Ranking is supplied by the caller (best first), so the same state drives
//! plain minimization, the improvement emitter and the coefficient-space search
//! of gradient arborescence.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, QdError, Result};
use crate::rng::RngStream;

/// Eigenvalues below this are clamped before sampling.
pub const MIN_EIGENVALUE: f64 = 1e-30;

/// `4 + floor(3 ln n)`.
pub fn default_lambda(n: usize) -> usize {
    4 + (3.0 * (n.max(1) as f64).ln()).floor() as usize
}

/// Strategy parameters derived from `(n, lambda)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CmaesParams {
    pub lambda: usize,
    pub mu: usize,
    pub weights: Vec<f64>,
    pub mu_eff: f64,
    pub c_sigma: f64,
    pub d_sigma: f64,
    pub c_c: f64,
    pub c_1: f64,
    pub c_mu: f64,
    pub c_m: f64,
    pub chi_n: f64,
}

impl CmaesParams {
    pub fn new(n: usize, lambda: usize) -> Result<Self> {
        if n == 0 {
            return invalid("CMA-ES dimension must be at least 1");
        }
        if lambda < 2 {
            return invalid("CMA-ES lambda must be at least 2");
        }
        let nf = n as f64;
        let mu = lambda / 2;
        let raw: Vec<f64> = (1..=mu)
            .map(|i| ((lambda as f64 + 1.0) / 2.0).ln() - (i as f64).ln())
            .collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();

        let c_sigma = (mu_eff + 2.0) / (nf + mu_eff + 5.0);
        let d_sigma = 1.0 + 2.0 * (((mu_eff - 1.0) / (nf + 1.0)).sqrt() - 1.0).max(0.0) + c_sigma;
        let c_c = (4.0 + mu_eff / nf) / (nf + 4.0 + 2.0 * mu_eff / nf);
        let c_1 = 2.0 / ((nf + 1.3).powi(2) + mu_eff);
        let c_mu = (1.0 - c_1).min(2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((nf + 2.0).powi(2) + mu_eff));
        let chi_n = nf.sqrt() * (1.0 - 1.0 / (4.0 * nf) + 1.0 / (21.0 * nf * nf));
        Ok(Self {
            lambda,
            mu,
            weights,
            mu_eff,
            c_sigma,
            d_sigma,
            c_c,
            c_1,
            c_mu,
            c_m: 1.0,
            chi_n,
        })
    }
}

#[derive(Clone, Debug)]
pub struct CmaesState {
    pub mean: DVector<f64>,
    pub sigma: f64,
    pub covariance: DMatrix<f64>,
    pub p_sigma: DVector<f64>,
    pub p_c: DVector<f64>,
    pub generation: u64,
    pub params: CmaesParams,
    // eigenbasis of `covariance` and sqrt of its (clamped) eigenvalues
    basis: DMatrix<f64>,
    scales: DVector<f64>,
}

impl CmaesState {
    pub fn new(mean: Vec<f64>, sigma: f64, lambda: usize) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return invalid("CMA-ES sigma must be positive and finite");
        }
        let n = mean.len();
        let params = CmaesParams::new(n, lambda)?;
        Ok(Self {
            mean: DVector::from_vec(mean),
            sigma,
            covariance: DMatrix::identity(n, n),
            p_sigma: DVector::zeros(n),
            p_c: DVector::zeros(n),
            generation: 0,
            params,
            basis: DMatrix::identity(n, n),
            scales: DVector::from_element(n, 1.0),
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn lambda(&self) -> usize {
        self.params.lambda
    }

    /// Ratio of largest to smallest eigenvalue of the covariance.
    pub fn condition_number(&self) -> f64 {
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for s in self.scales.iter() {
            let ev = s * s;
            lo = lo.min(ev);
            hi = hi.max(ev);
        }
        hi / lo
    }

    fn refresh_eigen(&mut self) -> Result<()> {
        let eig = SymmetricEigen::new(self.covariance.clone());
        if eig.eigenvalues.iter().any(|v| !v.is_finite()) || eig.eigenvectors.iter().any(|v| !v.is_finite()) {
            return Err(QdError::RestartRequired(
                "covariance eigendecomposition is not finite".into(),
            ));
        }
        let clamped = eig.eigenvalues.map(|v| v.max(MIN_EIGENVALUE));
        if eig.eigenvalues.iter().any(|&v| v < MIN_EIGENVALUE) {
            self.covariance = &eig.eigenvectors * DMatrix::from_diagonal(&clamped) * eig.eigenvectors.transpose();
            symmetrize(&mut self.covariance);
        }
        self.basis = eig.eigenvectors;
        self.scales = clamped.map(f64::sqrt);
        Ok(())
    }

    /// Draws `lambda` samples from `N(mean, sigma^2 C)`.
    pub fn ask(&self, lambda: usize, rng: &mut RngStream) -> Result<Vec<Vec<f64>>> {
        if lambda < 2 {
            return invalid("lambda must be at least 2");
        }
        self.sample(lambda, rng)
    }

    pub(crate) fn sample(&self, count: usize, rng: &mut RngStream) -> Result<Vec<Vec<f64>>> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(QdError::RestartRequired("sigma is not positive and finite".into()));
        }
        let n = self.dim();
        let transform = &self.basis * DMatrix::from_diagonal(&self.scales);
        Ok((0..count)
            .map(|_| {
                let z = DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(rng)));
                let x = &self.mean + (&transform * z) * self.sigma;
                x.iter().copied().collect()
            })
            .collect())
    }

    /// Updates the distribution from `samples` ordered by `ranking` (best first).
    pub fn tell(&mut self, samples: &[Vec<f64>], ranking: &[usize]) -> Result<()> {
        let lambda = self.params.lambda;
        if samples.len() != lambda {
            return invalid(format!("expected {lambda} samples, got {}", samples.len()));
        }
        check_permutation(ranking, lambda)?;
        let n = self.dim();
        if samples.iter().any(|s| s.len() != n) {
            return invalid("sample dimension does not match the distribution");
        }
        let p = &self.params;
        let old_mean = self.mean.clone();
        let steps: Vec<DVector<f64>> = ranking[..p.mu]
            .iter()
            .map(|&i| (DVector::from_column_slice(&samples[i]) - &old_mean) / self.sigma)
            .collect();
        let mut y_w = DVector::zeros(n);
        for (w, y) in p.weights.iter().zip(&steps) {
            y_w += y * *w;
        }
        self.mean = &old_mean + &y_w * (p.c_m * self.sigma);

        // C^{-1/2} y_w via the current eigenbasis
        let coords = self.basis.transpose() * &y_w;
        let whitened = &self.basis * coords.component_div(&self.scales);
        self.p_sigma = &self.p_sigma * (1.0 - p.c_sigma) + whitened * (p.c_sigma * (2.0 - p.c_sigma) * p.mu_eff).sqrt();

        let gen = (self.generation + 1) as f64;
        let ps_norm = self.p_sigma.norm();
        let h_sigma =
            ps_norm / (1.0 - (1.0 - p.c_sigma).powf(2.0 * gen)).sqrt() < (1.4 + 2.0 / (n as f64 + 1.0)) * p.chi_n;
        let h = if h_sigma { 1.0 } else { 0.0 };
        self.p_c = &self.p_c * (1.0 - p.c_c) + &y_w * (h * (p.c_c * (2.0 - p.c_c) * p.mu_eff).sqrt());

        let delta_h = (1.0 - h) * p.c_c * (2.0 - p.c_c);
        let mut c = &self.covariance * (1.0 - p.c_1 - p.c_mu + p.c_1 * delta_h);
        c += (&self.p_c * self.p_c.transpose()) * p.c_1;
        for (w, y) in p.weights.iter().zip(&steps) {
            c += (y * y.transpose()) * (p.c_mu * w);
        }
        symmetrize(&mut c);
        self.covariance = c;

        self.sigma *= ((p.c_sigma / p.d_sigma) * (ps_norm / p.chi_n - 1.0)).exp();
        self.generation += 1;
        self.refresh_eigen()
    }
}

fn symmetrize(c: &mut DMatrix<f64>) {
    let n = c.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (c[(i, j)] + c[(j, i)]);
            c[(i, j)] = v;
            c[(j, i)] = v;
        }
    }
}

pub(crate) fn check_permutation(ranking: &[usize], n: usize) -> Result<()> {
    if ranking.len() != n {
        return invalid(format!("ranking has {} entries, expected {n}", ranking.len()));
    }
    let mut seen = vec![false; n];
    for &i in ranking {
        if i >= n || seen[i] {
            return invalid("ranking is not a permutation");
        }
        seen[i] = true;
    }
    Ok(())
}

/// Indices sorted by `key` ascending (stable).
pub fn rank_ascending(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    idx
}
