//! Experiment orchestration: loads data, builds the (sampler, stepsize,
//! friction) grid, runs every cell as an independent seeded chain on a
//! bounded worker pool, and emits per-cell and summary CSV files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::harness::config::{
    resolve_data_path, DatasetSource, ExperimentConfig, ModelConfig,
};
use crate::harness::{idx, libsvm, projection};
use crate::metrics::{
    log_loss, test_log_likelihood, w2_gaussian, GaussianSummary, RunningMoments, ThermostatStats,
};
use crate::models::{self, Dataset, ModelSpec};
use crate::numerics::SymMatrix;
use crate::samplers::{self, ParameterState, SamplerConfig, SamplerKind, StateSink};

/// Which evaluation metrics apply to the configured model.
#[derive(Debug)]
pub enum EvalContext {
    Toy,
    LinearRegression { posterior: GaussianSummary },
    Logistic { test: Dataset },
}

/// One grid cell.
#[derive(Debug, Clone, Copy)]
pub struct CellSpec {
    pub index: usize,
    pub sampler: SamplerKind,
    pub stepsize: f64,
    pub friction: f64,
}

/// One metrics row, written at pass checkpoints.
#[derive(Debug, Clone)]
pub struct MetricsRecord {
    pub pass: f64,
    pub w2: Option<f64>,
    pub test_ll: Option<f64>,
    pub log_loss: Option<f64>,
    pub mean_kinetic: f64,
    pub mean_xi: f64,
    pub diverged: bool,
}

/// Everything a finished cell reports.
#[derive(Debug, Clone)]
pub struct CellResult {
    pub spec: CellSpec,
    pub rows: Vec<MetricsRecord>,
    pub diverged_at_step: Option<usize>,
    pub final_w2: Option<f64>,
    pub final_test_ll: Option<f64>,
    pub final_log_loss: Option<f64>,
}

impl CellResult {
    pub fn diverged(&self) -> bool {
        self.diverged_at_step.is_some()
    }
}

/// Fully loaded and validated experiment, ready to run (fail fast: every
/// referenced file is read and checked before any chain starts).
pub struct PreparedExperiment {
    pub config: ExperimentConfig,
    pub model: ModelSpec,
    pub train: Dataset,
    pub eval: EvalContext,
    pub cells: Vec<CellSpec>,
}

fn load_source(source: &DatasetSource) -> Result<Option<Dataset>> {
    match source {
        DatasetSource::None => Ok(None),
        DatasetSource::Synthetic { n, dim, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let (data, _theta) = models::synth_linreg(*n, *dim, &mut rng)?;
            Ok(Some(data))
        }
        DatasetSource::Idx { images, labels, positive_digit, negative_digit } => {
            let data = idx::load_idx(
                &resolve_data_path(images),
                &resolve_data_path(labels),
                *positive_digit,
                *negative_digit,
            )?;
            Ok(Some(data))
        }
        DatasetSource::Libsvm { path } => Ok(Some(libsvm::load_libsvm(&resolve_data_path(path))?)),
    }
}

fn project_if_configured(cfg: &ExperimentConfig, data: Dataset) -> Result<Dataset> {
    match &cfg.projection {
        Some(p) => projection::random_projection(&data, p.out_dim, p.seed),
        None => Ok(data),
    }
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<PreparedExperiment> {
    cfg.basic_checks()?;

    let train = match load_source(&cfg.dataset)? {
        Some(data) => project_if_configured(cfg, data)?,
        None => Dataset::empty(0),
    };

    let model = match &cfg.model {
        ModelConfig::GaussianToy { dim, noise_cov_diag } => {
            let cov = match noise_cov_diag {
                Some(diag) => {
                    if diag.len() != *dim {
                        return Err(Error::Config(
                            "noise_cov_diag length does not match toy dimension".into(),
                        ));
                    }
                    Some(SymMatrix::from_diag(diag))
                }
                None => None,
            };
            ModelSpec::gaussian_toy(*dim, cov)?
        }
        ModelConfig::LinearRegression { prior_variance } => {
            ModelSpec::linear_regression(train.dim(), *prior_variance)?
        }
        ModelConfig::LogisticRegression { prior_variance } => {
            ModelSpec::logistic_regression(train.dim(), *prior_variance)?
        }
    };

    if model.uses_data() {
        models::validate_pair(&model, &train)?;
    } else if !matches!(cfg.dataset, DatasetSource::None) {
        return Err(Error::Config("the toy model takes no dataset".into()));
    }

    let eval = match &cfg.model {
        ModelConfig::GaussianToy { .. } => EvalContext::Toy,
        ModelConfig::LinearRegression { prior_variance } => EvalContext::LinearRegression {
            posterior: models::linreg_true_posterior(&train, *prior_variance)?,
        },
        ModelConfig::LogisticRegression { .. } => {
            let source = cfg.test_dataset.as_ref().ok_or_else(|| {
                Error::Config("logistic experiments need a test_dataset".into())
            })?;
            let test = load_source(source)?
                .ok_or_else(|| Error::Config("test_dataset cannot be 'none'".into()))?;
            let test = project_if_configured(cfg, test)?;
            models::validate_pair(&model, &test)?;
            EvalContext::Logistic { test }
        }
    };

    let mut cells = Vec::new();
    for &sampler in &cfg.samplers {
        for &stepsize in &cfg.stepsizes {
            for &friction in &cfg.frictions {
                cells.push(CellSpec { index: cells.len(), sampler, stepsize, friction });
            }
        }
    }

    Ok(PreparedExperiment { config: cfg.clone(), model, train, eval, cells })
}

/// Streams chain states into running metrics and emits a row at every pass
/// checkpoint (and at the final pass).
struct CellSink<'a> {
    mass_diag: &'a [f64],
    steps_per_pass: usize,
    checkpoint_steps: usize,
    total_steps: usize,
    eval: &'a EvalContext,
    moments: RunningMoments,
    thermo: ThermostatStats,
    loss_sum: f64,
    loss_count: u64,
    rows: Vec<MetricsRecord>,
}

impl<'a> CellSink<'a> {
    fn new(
        dim: usize,
        mass_diag: &'a [f64],
        steps_per_pass: usize,
        checkpoint_every: usize,
        total_steps: usize,
        eval: &'a EvalContext,
    ) -> Self {
        Self {
            mass_diag,
            steps_per_pass,
            checkpoint_steps: steps_per_pass * checkpoint_every,
            total_steps,
            eval,
            moments: RunningMoments::new(dim),
            thermo: ThermostatStats::new(),
            loss_sum: 0.0,
            loss_count: 0,
            rows: Vec::new(),
        }
    }

    fn emit_row(&mut self, steps_done: usize) {
        let pass = steps_done as f64 / self.steps_per_pass as f64;
        let (mut w2, mut test_ll, mut loss) = (None, None, None);
        match self.eval {
            EvalContext::Toy => {}
            EvalContext::LinearRegression { posterior } => {
                w2 = Some(match self.moments.summary() {
                    Some(empirical) => w2_gaussian(&empirical, posterior).unwrap_or_else(|e| {
                        log::warn!("2-Wasserstein evaluation failed: {e}");
                        f64::NAN
                    }),
                    None => f64::NAN,
                });
            }
            EvalContext::Logistic { test } => {
                test_ll = Some(test_log_likelihood(self.moments.mean(), test));
                loss = Some(if self.loss_count > 0 {
                    self.loss_sum / self.loss_count as f64
                } else {
                    f64::NAN
                });
            }
        }
        self.rows.push(MetricsRecord {
            pass,
            w2,
            test_ll,
            log_loss: loss,
            mean_kinetic: self.thermo.mean_kinetic(),
            mean_xi: self.thermo.mean_xi(),
            diverged: false,
        });
    }

    fn nan_row(&self, steps_done: usize) -> MetricsRecord {
        let pass = steps_done as f64 / self.steps_per_pass as f64;
        let (mut w2, mut test_ll, mut loss) = (None, None, None);
        match self.eval {
            EvalContext::Toy => {}
            EvalContext::LinearRegression { .. } => w2 = Some(f64::NAN),
            EvalContext::Logistic { .. } => {
                test_ll = Some(f64::NAN);
                loss = Some(f64::NAN);
            }
        }
        MetricsRecord {
            pass,
            w2,
            test_ll,
            log_loss: loss,
            mean_kinetic: f64::NAN,
            mean_xi: f64::NAN,
            diverged: true,
        }
    }
}

impl StateSink for CellSink<'_> {
    fn record(&mut self, step: usize, state: &ParameterState) {
        self.moments.update(&state.theta).expect("dimension fixed at construction");
        let kinetic: f64 =
            state.momentum.iter().zip(self.mass_diag).map(|(p, m)| p * p / m).sum();
        self.thermo.push(kinetic, state.xi);
        if let EvalContext::Logistic { test } = self.eval {
            self.loss_sum += log_loss(&state.theta, test);
            self.loss_count += 1;
        }
        let done = step + 1;
        if done % self.checkpoint_steps == 0 || done == self.total_steps {
            self.emit_row(done);
        }
    }
}

fn run_cell(prep: &PreparedExperiment, cell: CellSpec) -> Result<CellResult> {
    let cfg = &prep.config;
    let dim = prep.model.dim();
    let mut sampler_cfg = SamplerConfig::new(dim, cell.stepsize);
    sampler_cfg.beta = cfg.beta;
    sampler_cfg.friction = cell.friction;
    sampler_cfg.thermal_mass = cfg.thermal_mass.unwrap_or(dim as f64);
    sampler_cfg.batch = cfg.batch;
    sampler_cfg.seed = cfg.seed;
    sampler_cfg.passes = cfg.passes;
    sampler_cfg.burn_in_fraction = cfg.burn_in_fraction;

    let spp = samplers::steps_per_pass(&prep.train, cfg.batch);
    let total = cfg.passes * spp;
    let mut sink =
        CellSink::new(dim, &sampler_cfg.mass_diag, spp, cfg.checkpoint_every, total, &prep.eval);

    let report = samplers::run_chain(
        cell.sampler,
        &prep.model,
        &prep.train,
        &sampler_cfg,
        cell.index as u64,
        &mut sink,
    )?;

    let mut rows = std::mem::take(&mut sink.rows);
    if let Some(diverged_step) = report.diverged_at {
        // remaining checkpoints become NaN rows
        let mut done = sink.checkpoint_steps;
        while done <= total {
            if done > diverged_step {
                rows.push(sink.nan_row(done));
            }
            done += sink.checkpoint_steps;
        }
        if total % sink.checkpoint_steps != 0 && total > diverged_step {
            rows.push(sink.nan_row(total));
        }
    }

    let last = rows.last();
    Ok(CellResult {
        spec: cell,
        diverged_at_step: report.diverged_at,
        final_w2: last.and_then(|r| r.w2),
        final_test_ll: last.and_then(|r| r.test_ll),
        final_log_loss: last.and_then(|r| r.log_loss),
        rows,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn cell_file_name(cell: &CellSpec) -> String {
    format!("cell_{}_h{}_A{}.csv", cell.sampler, cell.stepsize, cell.friction)
}

fn write_cell_csv(dir: &Path, cell: &CellResult) -> Result<PathBuf> {
    let path = dir.join(cell_file_name(&cell.spec));
    let mut out = String::from("pass,w2,test_ll,log_loss,mean_kinetic,mean_xi,diverged\n");
    for row in &cell.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            row.pass,
            fmt_opt(row.w2),
            fmt_opt(row.test_ll),
            fmt_opt(row.log_loss),
            row.mean_kinetic,
            row.mean_xi,
            row.diverged
        ));
    }
    fs::write(&path, out)?;
    Ok(path)
}

fn write_summary_csv(dir: &Path, results: &[CellResult]) -> Result<PathBuf> {
    let path = dir.join("summary.csv");
    let mut out = String::from(
        "sampler,stepsize,friction,final_w2,final_test_ll,final_log_loss,diverged,diverged_at_step\n",
    );
    for r in results {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.spec.sampler,
            r.spec.stepsize,
            r.spec.friction,
            fmt_opt(r.final_w2),
            fmt_opt(r.final_test_ll),
            fmt_opt(r.final_log_loss),
            r.diverged(),
            r.diverged_at_step.map(|s| s.to_string()).unwrap_or_default()
        ));
    }
    fs::write(&path, out)?;
    Ok(path)
}

/// Runs every cell of the experiment grid and writes one CSV per cell plus
/// `summary.csv` into the configured output directory. Divergence is a
/// result, not an error.
pub fn run_experiment(cfg: &ExperimentConfig, jobs: Option<usize>) -> Result<Vec<CellResult>> {
    let prep = prepare(cfg)?;
    fs::create_dir_all(&cfg.out_dir)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;

    let results: Result<Vec<CellResult>> = pool.install(|| {
        prep.cells
            .par_iter()
            .map(|&cell| {
                let result = run_cell(&prep, cell)?;
                write_cell_csv(&cfg.out_dir, &result)?;
                Ok(result)
            })
            .collect()
    });
    let results = results?;
    write_summary_csv(&cfg.out_dir, &results)?;
    Ok(results)
}

/// Human-readable preflight report for `validate`.
pub fn describe(prep: &PreparedExperiment) -> String {
    let mut s = String::new();
    let train = &prep.train;
    let _ = writeln!(
        s,
        "model: {:?} (dim {}), train rows: {}, cells: {}",
        prep.model.kind(),
        prep.model.dim(),
        train.count(),
        prep.cells.len()
    );
    match &prep.eval {
        EvalContext::Toy => {
            let _ = writeln!(s, "eval: thermostat diagnostics only");
        }
        EvalContext::LinearRegression { .. } => {
            let _ = writeln!(s, "eval: 2-Wasserstein against the analytic posterior");
        }
        EvalContext::Logistic { test } => {
            let _ = writeln!(s, "eval: logistic metrics on {} test rows", test.count());
        }
    }
    let _ = writeln!(
        s,
        "steps per pass: {}, total steps per cell: {}",
        samplers::steps_per_pass(train, prep.config.batch),
        samplers::steps_per_pass(train, prep.config.batch) * prep.config.passes
    );
    s
}
