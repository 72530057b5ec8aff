//! The four stochastic-gradient samplers.
//!
//! `mccadl_step` integrates the covariance-compensated thermostat with the
//! palindromic B-A-O-D-C-D-O-A-B splitting: B is the noisy-force kick, A the
//! position drift, O the exact Ornstein-Uhlenbeck momentum update with the
//! thermostat friction, D the thermostat feedback, and C the exact flow of
//! the covariance friction applied through the matrix-free exponential
//! action. One noisy force is evaluated per iteration; the closing kick's
//! force is reused to open the next iteration.
//!
//! `ccadl_step`, `sgnht_step`, and `sghmc_step` are the Euler-type baselines.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::expmv::{self, ExpmvPlan};
use crate::models::{self, Dataset, MinibatchForce, ModelSpec};
use crate::numerics::{self, SymMatrix};

/// Below this magnitude the thermostat variable is treated as zero in the
/// O-step and the analytic small-friction limit is used; the exact-zero
/// branch of the update formula is numerically fragile.
const XI_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerKind {
    Mccadl,
    Ccadl,
    Sgnht,
    Sghmc,
}

impl std::fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            SamplerKind::Mccadl => "mccadl",
            SamplerKind::Ccadl => "ccadl",
            SamplerKind::Sgnht => "sgnht",
            SamplerKind::Sghmc => "sghmc",
        };
        f.write_str(name)
    }
}

impl std::str::FromStr for SamplerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mccadl" => Ok(SamplerKind::Mccadl),
            "ccadl" => Ok(SamplerKind::Ccadl),
            "sgnht" => Ok(SamplerKind::Sgnht),
            "sghmc" => Ok(SamplerKind::Sghmc),
            other => Err(Error::InvalidInput(format!("unknown sampler '{other}'"))),
        }
    }
}

/// Full sampler state: position, momentum, and the thermostat variable.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterState {
    pub theta: Vec<f64>,
    pub momentum: Vec<f64>,
    pub xi: f64,
}

impl ParameterState {
    pub fn new(theta: Vec<f64>, momentum: Vec<f64>, xi: f64) -> Self {
        Self { theta, momentum, xi }
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    /// A non-finite entry anywhere marks the chain as diverged.
    pub fn is_finite(&self) -> bool {
        self.xi.is_finite()
            && numerics::all_finite(&self.theta)
            && numerics::all_finite(&self.momentum)
    }
}

/// Integrator parameters shared by all samplers.
#[derive(Debug, Clone)]
pub struct SamplerConfig {
    /// Stepsize h.
    pub stepsize: f64,
    /// Inverse temperature β.
    pub beta: f64,
    /// Effective friction A: strength of the artificial noise and the
    /// stationary mean of the thermostat variable.
    pub friction: f64,
    /// Thermal mass μ coupling the thermostat feedback.
    pub thermal_mass: f64,
    /// Diagonal of the mass matrix M.
    pub mass_diag: Vec<f64>,
    /// Minibatch size n.
    pub batch: usize,
    /// Experiment seed; chains derive their streams from (seed, stream id).
    pub seed: u64,
    /// Total passes over the dataset.
    pub passes: usize,
    /// Fraction of total steps discarded before statistics are collected.
    pub burn_in_fraction: f64,
}

impl SamplerConfig {
    /// Defaults per the benchmark settings: M = I, β = 1, A = 1, μ = N_d.
    pub fn new(dim: usize, stepsize: f64) -> Self {
        Self {
            stepsize,
            beta: 1.0,
            friction: 1.0,
            thermal_mass: dim as f64,
            mass_diag: vec![1.0; dim],
            batch: 1,
            seed: 0,
            passes: 1,
            burn_in_fraction: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.mass_diag.len()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.stepsize > 0.0) || !self.stepsize.is_finite() {
            return Err(Error::InvalidInput("stepsize must be positive".into()));
        }
        if !(self.beta > 0.0) {
            return Err(Error::InvalidInput("beta must be positive".into()));
        }
        if self.friction < 0.0 {
            return Err(Error::InvalidInput("friction must be nonnegative".into()));
        }
        if !(self.thermal_mass > 0.0) {
            return Err(Error::InvalidInput("thermal mass must be positive".into()));
        }
        if self.mass_diag.is_empty() || self.mass_diag.iter().any(|&m| !(m > 0.0)) {
            return Err(Error::InvalidInput("mass diagonal must be positive".into()));
        }
        if self.batch == 0 {
            return Err(Error::InvalidInput("batch size must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.burn_in_fraction) {
            return Err(Error::InvalidInput("burn-in fraction must lie in [0, 1)".into()));
        }
        Ok(())
    }

    fn kinetic(&self, p: &[f64]) -> f64 {
        p.iter().zip(&self.mass_diag).map(|(pi, mi)| pi * pi / mi).sum()
    }
}

/// Moving-average covariance estimate `Î_t = (1 - 1/t) Î_{t-1} + (1/t) V_t`
/// used by the original thermostat baseline. With κ_t = 1/t this is exactly
/// the running arithmetic mean of the V matrices seen so far.
#[derive(Debug, Clone)]
pub struct MovingAverageEstimator {
    mean: SymMatrix,
    steps: u64,
}

impl MovingAverageEstimator {
    pub fn new(dim: usize) -> Self {
        Self { mean: SymMatrix::zeros(dim), steps: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn current(&self) -> &SymMatrix {
        &self.mean
    }

    pub fn update(&mut self, v: &SymMatrix) -> Result<()> {
        if v.dim() != self.mean.dim() {
            return Err(Error::InvalidInput(format!(
                "covariance dimension {} does not match estimator dimension {}",
                v.dim(),
                self.mean.dim()
            )));
        }
        self.steps += 1;
        let kappa = 1.0 / self.steps as f64;
        self.mean = self.mean.scaled(1.0 - kappa).add(&v.scaled(kappa))?;
        Ok(())
    }
}

/// Exact Ornstein-Uhlenbeck half-step of the momenta:
/// `p ← e^{-ξh/2} p + sqrt(Aβ⁻¹ (1 - e^{-ξh})/ξ) M^{1/2} N(0, I)`,
/// falling back to the analytic ξ→0 limit `sqrt(hAβ⁻¹)` near zero.
pub fn ou_half_step<R: Rng>(p: &mut [f64], xi: f64, cfg: &SamplerConfig, rng: &mut R) {
    let h = cfg.stepsize;
    let (decay, noise_var) = if xi.abs() > XI_EPS {
        (
            (-xi * h / 2.0).exp(),
            (cfg.friction / cfg.beta * (1.0 - (-xi * h).exp()) / xi).max(0.0),
        )
    } else {
        (1.0, h * cfg.friction / cfg.beta)
    };
    let sd = noise_var.sqrt();
    for (pi, mi) in p.iter_mut().zip(&cfg.mass_diag) {
        let z: f64 = rng.sample(StandardNormal);
        *pi = decay * *pi + sd * mi.sqrt() * z;
    }
}

fn half_kick(p: &mut [f64], force: &[f64], h2: f64) {
    numerics::axpy(p, h2, force);
}

fn drift(theta: &mut [f64], p: &[f64], cfg: &SamplerConfig, h2: f64) {
    for ((ti, pi), mi) in theta.iter_mut().zip(p).zip(&cfg.mass_diag) {
        *ti += h2 * pi / mi;
    }
}

fn thermostat_half(xi: &mut f64, p: &[f64], cfg: &SamplerConfig, h2: f64) {
    let target = cfg.dim() as f64 / cfg.beta;
    *xi += h2 / cfg.thermal_mass * (cfg.kinetic(p) - target);
}

/// One B-A-O-D-C-D-O-A-B iteration.
///
/// `cached_force` must have been evaluated at `state.theta`; the step
/// evaluates exactly one fresh noisy force (at the new position) and returns
/// it for reuse by the next iteration. The C step applies
/// `exp(h · Σ̃)` to the momenta via the matrix-free exponential action, the
/// covariance friction's exact flow over the step length.
pub fn mccadl_step<R: Rng>(
    state: &mut ParameterState,
    model: &ModelSpec,
    data: &Dataset,
    cfg: &SamplerConfig,
    rng: &mut R,
    cached_force: &MinibatchForce,
) -> Result<MinibatchForce> {
    let h2 = cfg.stepsize / 2.0;

    half_kick(&mut state.momentum, &cached_force.force, h2);
    drift(&mut state.theta, &state.momentum, cfg, h2);
    ou_half_step(&mut state.momentum, state.xi, cfg, rng);
    thermostat_half(&mut state.xi, &state.momentum, cfg, h2);

    let plan = ExpmvPlan::for_operator(&cached_force.cov_op, cfg.stepsize)?;
    state.momentum = expmv::apply(&plan, &cached_force.cov_op, &state.momentum)?;

    thermostat_half(&mut state.xi, &state.momentum, cfg, h2);
    ou_half_step(&mut state.momentum, state.xi, cfg, rng);
    drift(&mut state.theta, &state.momentum, cfg, h2);

    let fresh = models::sample_force(model, data, &state.theta, cfg, rng)?;
    half_kick(&mut state.momentum, &fresh.force, h2);
    Ok(fresh)
}

/// One Euler-type step of the original covariance-controlled thermostat.
///
/// Draws a minibatch, folds the dense empirical gradient covariance into the
/// moving average, and applies the nonsymmetric update:
/// momentum first (force, covariance friction, thermostat friction, noise),
/// then position, then thermostat feedback.
pub fn ccadl_step<R: Rng>(
    state: &mut ParameterState,
    model: &ModelSpec,
    data: &Dataset,
    cfg: &SamplerConfig,
    rng: &mut R,
    est: &mut MovingAverageEstimator,
) -> Result<()> {
    let h = cfg.stepsize;
    let d = cfg.dim();

    // Noisy force plus the dense covariance estimate for this step. For the
    // toy target the injected-noise covariance is known and enters the
    // moving average unscaled.
    let (force, v, sigma_scale) = if model.uses_data() {
        let indices = models::draw_minibatch(data, cfg.batch, rng)?;
        let (grads, force) = models::minibatch_force_terms(model, data, &state.theta, &indices)?;
        let n = grads.len();
        let mut mean = vec![0.0; d];
        for g in &grads {
            numerics::axpy(&mut mean, 1.0 / n as f64, g);
        }
        let mut v = SymMatrix::zeros(d);
        if n > 1 {
            let w = 1.0 / (n as f64 - 1.0);
            for g in &grads {
                let c: Vec<f64> = g.iter().zip(&mean).map(|(a, b)| a - b).collect();
                v.add_outer(&c, w);
            }
        }
        let scale = (data.count() as f64).powi(2) / n as f64;
        (force, v, scale)
    } else {
        let sampled = models::sample_force(model, data, &state.theta, cfg, rng)?;
        let v = model.toy_noise_cov().cloned().unwrap_or_else(|| SymMatrix::zeros(d));
        (sampled.force, v, 1.0)
    };

    est.update(&v)?;
    let sigma_p = est.current().apply(&state.momentum);

    let noise_sd = (2.0 * cfg.friction * h / cfg.beta).sqrt();
    let cov_coef = h * (h / 2.0) * cfg.beta * sigma_scale;
    let xi = state.xi;
    for i in 0..d {
        let z: f64 = rng.sample(StandardNormal);
        state.momentum[i] += h * force[i] - cov_coef * sigma_p[i] - h * xi * state.momentum[i]
            + noise_sd * cfg.mass_diag[i].sqrt() * z;
    }
    drift(&mut state.theta, &state.momentum, cfg, h);
    thermostat_half(&mut state.xi, &state.momentum, cfg, h);
    Ok(())
}

/// One Euler-type step of the Nosé-Hoover thermostat baseline.
pub fn sgnht_step<R: Rng>(
    state: &mut ParameterState,
    model: &ModelSpec,
    data: &Dataset,
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Result<()> {
    let h = cfg.stepsize;
    let force = models::sample_force(model, data, &state.theta, cfg, rng)?.force;
    let noise_sd = (2.0 * cfg.friction * h / cfg.beta).sqrt();
    let xi = state.xi;
    for (i, pi) in state.momentum.iter_mut().enumerate() {
        let z: f64 = rng.sample(StandardNormal);
        *pi += h * force[i] - h * xi * *pi + noise_sd * cfg.mass_diag[i].sqrt() * z;
    }
    drift(&mut state.theta, &state.momentum, cfg, h);
    thermostat_half(&mut state.xi, &state.momentum, cfg, h);
    Ok(())
}

/// One Euler-type step of stochastic-gradient HMC with fixed friction; the
/// thermostat variable is unused and stays at zero.
pub fn sghmc_step<R: Rng>(
    state: &mut ParameterState,
    model: &ModelSpec,
    data: &Dataset,
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Result<()> {
    let h = cfg.stepsize;
    let force = models::sample_force(model, data, &state.theta, cfg, rng)?.force;
    let noise_sd = (2.0 * cfg.friction * h / cfg.beta).sqrt();
    for (i, pi) in state.momentum.iter_mut().enumerate() {
        let z: f64 = rng.sample(StandardNormal);
        *pi += h * force[i] - h * cfg.friction * *pi / cfg.mass_diag[i]
            + noise_sd * cfg.mass_diag[i].sqrt() * z;
    }
    drift(&mut state.theta, &state.momentum, cfg, h);
    Ok(())
}

/// Receives every post-burn-in state of a chain.
pub trait StateSink {
    fn record(&mut self, step: usize, state: &ParameterState);
}

impl<F: FnMut(usize, &ParameterState)> StateSink for F {
    fn record(&mut self, step: usize, state: &ParameterState) {
        self(step, state)
    }
}

/// Outcome of a chain run. Divergence is data, not failure: the first step
/// producing a non-finite coordinate (or a numerically failed exponential
/// action) is recorded and the chain stops.
#[derive(Debug, Clone)]
pub struct ChainReport {
    pub total_steps: usize,
    pub completed_steps: usize,
    pub recorded: usize,
    pub diverged_at: Option<usize>,
}

impl ChainReport {
    pub fn diverged(&self) -> bool {
        self.diverged_at.is_some()
    }
}

/// Steps per pass over the dataset; the toy target has no dataset and counts
/// one step per pass.
pub fn steps_per_pass(data: &Dataset, batch: usize) -> usize {
    if data.count() == 0 {
        1
    } else {
        data.count().div_ceil(batch)
    }
}

/// Runs one chain: θ₀ = 0, p₀ ~ N(0, β⁻¹M), ξ₀ = A, then
/// `passes · steps_per_pass` iterations, streaming post-burn-in states into
/// the sink. Fully deterministic given (seed, stream).
pub fn run_chain<S: StateSink>(
    kind: SamplerKind,
    model: &ModelSpec,
    data: &Dataset,
    cfg: &SamplerConfig,
    stream: u64,
    sink: &mut S,
) -> Result<ChainReport> {
    cfg.validate()?;
    if model.uses_data() {
        models::validate_pair(model, data)?;
    }
    let dim = model.dim();
    if cfg.dim() != dim {
        return Err(Error::InvalidInput(format!(
            "config dimension {} does not match model dimension {dim}",
            cfg.dim()
        )));
    }

    let total = cfg.passes * steps_per_pass(data, cfg.batch);
    let burn = (cfg.burn_in_fraction * total as f64).floor() as usize;
    let mut report =
        ChainReport { total_steps: total, completed_steps: 0, recorded: 0, diverged_at: None };
    if total == 0 {
        return Ok(report);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(stream);

    let theta = vec![0.0; dim];
    let momentum: Vec<f64> = cfg
        .mass_diag
        .iter()
        .map(|mi| (mi / cfg.beta).sqrt() * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let mut state = ParameterState::new(theta, momentum, cfg.friction);

    let mut cached = match kind {
        SamplerKind::Mccadl => Some(models::sample_force(model, data, &state.theta, cfg, &mut rng)?),
        _ => None,
    };
    let mut est = MovingAverageEstimator::new(dim);

    for step in 0..total {
        let outcome = match kind {
            SamplerKind::Mccadl => {
                let force = cached.take().expect("cached force present");
                match mccadl_step(&mut state, model, data, cfg, &mut rng, &force) {
                    Ok(fresh) => {
                        cached = Some(fresh);
                        Ok(())
                    }
                    Err(e) => Err(e),
                }
            }
            SamplerKind::Ccadl => ccadl_step(&mut state, model, data, cfg, &mut rng, &mut est),
            SamplerKind::Sgnht => sgnht_step(&mut state, model, data, cfg, &mut rng),
            SamplerKind::Sghmc => sghmc_step(&mut state, model, data, cfg, &mut rng),
        };
        match outcome {
            Ok(()) => {}
            Err(Error::NumericalFailure(_)) => {
                report.diverged_at = Some(step);
                break;
            }
            Err(e) => return Err(e),
        }
        if !state.is_finite() {
            report.diverged_at = Some(step);
            break;
        }
        report.completed_steps = step + 1;
        if step >= burn {
            sink.record(step, &state);
            report.recorded += 1;
        }
    }
    Ok(report)
}
