//! Evaluation machinery: the Gaussian 2-Wasserstein distance, streaming
//! sample moments, logistic test metrics, and thermostat diagnostics.

use crate::error::{Error, Result};
use crate::models::Dataset;
use crate::numerics::{self, psd_sqrt, SymMatrix};

/// A Gaussian summarised by its mean and covariance. Used both for analytic
/// posteriors and for empirical sample distributions.
#[derive(Debug, Clone)]
pub struct GaussianSummary {
    pub mean: Vec<f64>,
    pub cov: SymMatrix,
}

impl GaussianSummary {
    pub fn new(mean: Vec<f64>, cov: SymMatrix) -> Result<Self> {
        if mean.len() != cov.dim() {
            return Err(Error::InvalidInput(format!(
                "mean length {} does not match covariance dimension {}",
                mean.len(),
                cov.dim()
            )));
        }
        Ok(Self { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// 2-Wasserstein distance between two Gaussians:
/// `W₂² = ‖m_a − m_b‖² + tr(Σ_a + Σ_b − 2 (Σ_b^{1/2} Σ_a Σ_b^{1/2})^{1/2})`.
///
/// The trace argument is clamped at zero; eigen-rounding makes it dip a hair
/// below for (near-)identical inputs.
pub fn w2_gaussian(a: &GaussianSummary, b: &GaussianSummary) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::InvalidInput(format!(
            "dimension mismatch: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    let root_b = psd_sqrt(&b.cov)?;
    let inner = a.cov.conjugate_by(&root_b)?;
    let cross = psd_sqrt(&inner)?;
    let trace_term = a.cov.trace() + b.cov.trace() - 2.0 * cross.trace();
    let mean_sq: f64 = a.mean.iter().zip(&b.mean).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok((mean_sq + trace_term.max(0.0)).sqrt())
}

/// Streaming mean and scatter accumulator (Welford update, rank-one scatter).
///
/// After `k` updates the mean equals the arithmetic mean of the inputs and
/// `scatter/(k-1)` is the unbiased sample covariance.
#[derive(Debug, Clone)]
pub struct RunningMoments {
    count: u64,
    mean: Vec<f64>,
    scatter: Vec<f64>, // row-major d×d
}

impl RunningMoments {
    pub fn new(dim: usize) -> Self {
        Self { count: 0, mean: vec![0.0; dim], scatter: vec![0.0; dim * dim] }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn update(&mut self, x: &[f64]) -> Result<()> {
        let d = self.mean.len();
        if x.len() != d {
            return Err(Error::InvalidInput(format!(
                "sample length {} does not match accumulator dimension {d}",
                x.len()
            )));
        }
        self.count += 1;
        let inv = 1.0 / self.count as f64;
        // delta against the old mean, delta2 against the new one
        let delta: Vec<f64> = x.iter().zip(&self.mean).map(|(xi, mi)| xi - mi).collect();
        for (mi, di) in self.mean.iter_mut().zip(&delta) {
            *mi += di * inv;
        }
        let delta2: Vec<f64> = x.iter().zip(&self.mean).map(|(xi, mi)| xi - mi).collect();
        for i in 0..d {
            let di = delta[i];
            let row = &mut self.scatter[i * d..(i + 1) * d];
            for (sij, d2j) in row.iter_mut().zip(&delta2) {
                *sij += di * d2j;
            }
        }
        Ok(())
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Unbiased sample covariance; `None` until two samples have arrived.
    pub fn covariance(&self) -> Option<SymMatrix> {
        if self.count < 2 {
            return None;
        }
        let w = 1.0 / (self.count - 1) as f64;
        let data = self.scatter.iter().map(|s| s * w).collect();
        Some(SymMatrix::new(self.dim(), data).expect("scatter is square"))
    }

    pub fn summary(&self) -> Option<GaussianSummary> {
        self.covariance().map(|cov| GaussianSummary { mean: self.mean.clone(), cov })
    }

    /// Pairwise merge of two accumulators over disjoint sample streams.
    pub fn merge(&self, other: &RunningMoments) -> Result<RunningMoments> {
        let d = self.dim();
        if other.dim() != d {
            return Err(Error::InvalidInput("accumulator dimensions differ".into()));
        }
        if self.count == 0 {
            return Ok(other.clone());
        }
        if other.count == 0 {
            return Ok(self.clone());
        }
        let na = self.count as f64;
        let nb = other.count as f64;
        let n = na + nb;
        let mean: Vec<f64> =
            self.mean.iter().zip(&other.mean).map(|(a, b)| (na * a + nb * b) / n).collect();
        let delta: Vec<f64> = other.mean.iter().zip(&self.mean).map(|(b, a)| b - a).collect();
        let w = na * nb / n;
        let mut scatter: Vec<f64> =
            self.scatter.iter().zip(&other.scatter).map(|(a, b)| a + b).collect();
        for i in 0..d {
            for j in 0..d {
                scatter[i * d + j] += w * delta[i] * delta[j];
            }
        }
        Ok(RunningMoments { count: self.count + other.count, mean, scatter })
    }
}

/// Shared stable evaluation of `log(1 + exp(-z))`, branching at |z| = 35
/// where the asymptotics are exact to double precision.
pub(crate) fn log1p_exp_neg(z: f64) -> f64 {
    if z > 35.0 {
        (-z).exp()
    } else if z < -35.0 {
        -z + z.exp()
    } else if z >= 0.0 {
        (-z).exp().ln_1p()
    } else {
        -z + z.exp().ln_1p()
    }
}

/// Test log likelihood of a logistic model at the parameter `theta`:
/// `Σ_i log σ(y_i θᵀ x_i)` over a test set with labels in {-1, +1}.
pub fn test_log_likelihood(theta: &[f64], test: &Dataset) -> f64 {
    let mut total = 0.0;
    for i in 0..test.count() {
        let margin = test.label(i) * numerics::dot(theta, test.feature(i));
        total -= log1p_exp_neg(margin);
    }
    total
}

/// Mean logistic loss over a test set; equals
/// `-test_log_likelihood(θ) / |test|`.
pub fn log_loss(theta: &[f64], test: &Dataset) -> f64 {
    let mut total = 0.0;
    for i in 0..test.count() {
        let margin = test.label(i) * numerics::dot(theta, test.feature(i));
        total += log1p_exp_neg(margin);
    }
    total / test.count() as f64
}

/// Mean of `log_loss` across posterior samples. Any non-finite sample (a
/// diverged chain) poisons the average to NaN, mirroring how diverged cells
/// are reported.
pub fn posterior_expected_log_loss(samples: &[Vec<f64>], test: &Dataset) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InvalidInput("no posterior samples".into()));
    }
    let mut total = 0.0;
    for theta in samples {
        if !numerics::all_finite(theta) {
            return Ok(f64::NAN);
        }
        total += log_loss(theta, test);
    }
    Ok(total / samples.len() as f64)
}

/// Streaming thermostat statistics: mean kinetic energy `pᵀM⁻¹p`, mean of
/// the thermostat variable, and its variance (Welford).
#[derive(Debug, Clone, Default)]
pub struct ThermostatStats {
    count: u64,
    mean_kinetic: f64,
    mean_xi: f64,
    m2_xi: f64,
}

impl ThermostatStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, kinetic: f64, xi: f64) {
        self.count += 1;
        let inv = 1.0 / self.count as f64;
        self.mean_kinetic += (kinetic - self.mean_kinetic) * inv;
        let delta = xi - self.mean_xi;
        self.mean_xi += delta * inv;
        self.m2_xi += delta * (xi - self.mean_xi);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean_kinetic(&self) -> f64 {
        if self.count == 0 {
            f64::NAN
        } else {
            self.mean_kinetic
        }
    }

    pub fn mean_xi(&self) -> f64 {
        if self.count == 0 {
            f64::NAN
        } else {
            self.mean_xi
        }
    }

    pub fn var_xi(&self) -> f64 {
        if self.count < 2 {
            f64::NAN
        } else {
            self.m2_xi / (self.count - 1) as f64
        }
    }
}
