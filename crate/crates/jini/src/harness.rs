//! Monte Carlo experiment runner: reproduces the built-in simulation
//! studies (bias/RMSE over replications) and probes the bias function of
//! an initial estimator along one coordinate.
//!
//! Everything stochastic is derived from one master seed: the design
//! matrix and misclassification latents are drawn once per experiment,
//! and each replication gets independent substreams for its observed data
//! and for its solver bank. Replications are independent jobs; results
//! are reduced in replication order, so experiment output is bit-identical
//! for any worker count.

use anyhow::{anyhow, bail, Context, Result};
use jini_core::bias_correct::{
    bbc, ib_solve, simulated_mean, CorrectionMethod, FailurePolicy, IbConfig, SerialExecutor,
};
use jini_core::crn::{CrnBank, RngStream};
use jini_core::estimators::{FitConfig, Fitter};
use jini_core::models::{
    gen_design, synthetic_initial, DesignRecipe, MisclassLatents, ModelFamily, ModelSpec,
    ParamVec, SyntheticBias,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::time::Instant;

use crate::exec::ThreadPoolExecutor;

/// Built-in experiment settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SettingId {
    NegbinT2,
    NegbinCensoredT3,
    LogisticMisclassT4I,
    LogisticMisclassT4Ii,
    LogisticT6I,
    LogisticT6Ii,
    CensoredPoissonT8,
    Synthetic,
}

impl SettingId {
    pub const ALL: [SettingId; 8] = [
        SettingId::NegbinT2,
        SettingId::NegbinCensoredT3,
        SettingId::LogisticMisclassT4I,
        SettingId::LogisticMisclassT4Ii,
        SettingId::LogisticT6I,
        SettingId::LogisticT6Ii,
        SettingId::CensoredPoissonT8,
        SettingId::Synthetic,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SettingId::NegbinT2 => "negbin-t2",
            SettingId::NegbinCensoredT3 => "negbin-censored-t3",
            SettingId::LogisticMisclassT4I => "logistic-misclass-t4-i",
            SettingId::LogisticMisclassT4Ii => "logistic-misclass-t4-ii",
            SettingId::LogisticT6I => "logistic-t6-i",
            SettingId::LogisticT6Ii => "logistic-t6-ii",
            SettingId::CensoredPoissonT8 => "censored-poisson-t8",
            SettingId::Synthetic => "synthetic",
        }
    }

    pub fn parse(name: &str) -> Result<SettingId> {
        SettingId::ALL
            .into_iter()
            .find(|s| s.name() == name)
            .ok_or_else(|| {
                let names: Vec<&str> = SettingId::ALL.iter().map(|s| s.name()).collect();
                anyhow!("unknown setting '{name}'; available: {}", names.join(", "))
            })
    }
}

/// Estimation methods an experiment can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodId {
    /// The initial maximum-likelihood estimator (consistent settings).
    Mle,
    /// The initial estimator that ignores censoring or misclassification.
    NaiveMle,
    /// The consistent benchmark fit (censored-likelihood MLE).
    BenchmarkMle,
    /// One-step bootstrap bias correction.
    Bbc,
    /// Fixed point of the iterated correction.
    Jini,
}

impl MethodId {
    pub const ALL: [MethodId; 5] = [
        MethodId::Mle,
        MethodId::NaiveMle,
        MethodId::BenchmarkMle,
        MethodId::Bbc,
        MethodId::Jini,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            MethodId::Mle => "mle",
            MethodId::NaiveMle => "naive-mle",
            MethodId::BenchmarkMle => "benchmark-mle",
            MethodId::Bbc => "bbc",
            MethodId::Jini => "jini",
        }
    }

    pub fn parse(name: &str) -> Result<MethodId> {
        MethodId::ALL
            .into_iter()
            .find(|m| m.name() == name)
            .ok_or_else(|| anyhow!("unknown method '{name}'"))
    }
}

/// Synthetic linear-bias description in configuration form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSetting {
    /// Bias slope matrix, nested rows.
    pub slope: Vec<Vec<f64>>,
    pub offset: Vec<f64>,
    pub noise_sd: f64,
}

impl SyntheticSetting {
    pub fn to_bias(&self) -> Result<SyntheticBias> {
        let p = self.offset.len();
        let mut flat = Vec::with_capacity(p * p);
        for row in &self.slope {
            if row.len() != p {
                bail!("synthetic slope must be {p} x {p}");
            }
            flat.extend_from_slice(row);
        }
        Ok(SyntheticBias::new(flat, self.offset.clone(), self.noise_sd)?)
    }
}

/// Full description of one Monte Carlo experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub setting: SettingId,
    pub n: usize,
    pub p: usize,
    /// True parameter (overdispersion appended for negative binomial
    /// settings).
    pub theta0: Vec<f64>,
    pub censor_at: Option<u64>,
    /// Beta shapes of the false-positive-rate latents.
    pub misclass_fp: Option<(f64, f64)>,
    /// Beta shapes of the false-negative-rate latents.
    pub misclass_fn: Option<(f64, f64)>,
    pub synthetic: Option<SyntheticSetting>,
    /// Simulated samples per solver iteration.
    pub h: usize,
    pub reps: usize,
    pub master_seed: u64,
    pub methods: Vec<MethodId>,
    pub ib_tol: f64,
    pub ib_max_iter: usize,
}

impl ExperimentConfig {
    /// Desk-scale preset for a built-in setting (replications and H are
    /// half the full-scale study; see [`ExperimentConfig::paper_scale`]).
    ///
    /// Preset solver tolerances sit above the discreteness floor of each
    /// setting: with integer responses the simulated mean is a step
    /// function of the parameter, so step norms plateau at the count-flip
    /// granularity (about 1e-3 per coordinate here) instead of shrinking
    /// to zero. The synthetic setting is smooth and keeps a tight
    /// tolerance.
    pub fn preset(setting: SettingId) -> Self {
        match setting {
            SettingId::NegbinT2 => Self::nb_style(setting, 100, 20, None),
            SettingId::NegbinCensoredT3 => Self::nb_style(setting, 100, 20, Some(30)),
            SettingId::CensoredPoissonT8 => {
                let mut theta0 = vec![0.0; 50];
                theta0[0] = 0.5;
                theta0[1] = 0.8;
                theta0[2] = -0.4;
                Self {
                    setting,
                    n: 200,
                    p: 50,
                    theta0,
                    censor_at: Some(5),
                    misclass_fp: None,
                    misclass_fn: None,
                    synthetic: None,
                    h: 100,
                    reps: 200,
                    master_seed: 0,
                    methods: vec![MethodId::NaiveMle, MethodId::BenchmarkMle, MethodId::Jini],
                    ib_tol: 2e-2,
                    ib_max_iter: 100,
                }
            }
            SettingId::LogisticMisclassT4I | SettingId::LogisticMisclassT4Ii => {
                let n = if setting == SettingId::LogisticMisclassT4I { 2000 } else { 3000 };
                let mut cfg = Self::logistic_style(setting, n, 200);
                cfg.misclass_fp = Some((2.0, 50.0));
                cfg.misclass_fn = Some((2.0, 10.0));
                cfg.methods = vec![MethodId::NaiveMle, MethodId::Jini];
                cfg
            }
            SettingId::LogisticT6I | SettingId::LogisticT6Ii => {
                let n = if setting == SettingId::LogisticT6I { 2000 } else { 3000 };
                Self::logistic_style(setting, n, 200)
            }
            SettingId::Synthetic => {
                let p = 5;
                let mut slope = vec![vec![0.0; p]; p];
                for (i, row) in slope.iter_mut().enumerate() {
                    row[i] = 0.4;
                    if i + 1 < p {
                        row[i + 1] = 0.1;
                    }
                }
                let offset = (0..p).map(|j| 0.1 * (j as f64 + 1.0) / p as f64).collect();
                Self {
                    setting,
                    n: p,
                    p,
                    theta0: vec![0.5, -0.25, 1.0, 0.0, 0.75],
                    censor_at: None,
                    misclass_fp: None,
                    misclass_fn: None,
                    synthetic: Some(SyntheticSetting { slope, offset, noise_sd: 0.0 }),
                    h: 100,
                    reps: 200,
                    master_seed: 0,
                    methods: vec![MethodId::Mle, MethodId::Bbc, MethodId::Jini],
                    ib_tol: 1e-10,
                    ib_max_iter: 200,
                }
            }
        }
    }

    fn nb_style(setting: SettingId, n: usize, p: usize, censor_at: Option<u64>) -> Self {
        let mut theta0 = vec![0.0; p + 1];
        theta0[0] = 1.5;
        theta0[1] = 2.5;
        theta0[2] = -2.5;
        theta0[p] = 0.6;
        let methods = if censor_at.is_some() {
            vec![MethodId::NaiveMle, MethodId::BenchmarkMle, MethodId::Jini]
        } else {
            vec![MethodId::Mle, MethodId::Bbc, MethodId::Jini]
        };
        Self {
            setting,
            n,
            p,
            theta0,
            censor_at,
            misclass_fp: None,
            misclass_fn: None,
            synthetic: None,
            h: 100,
            reps: 200,
            master_seed: 0,
            methods,
            ib_tol: 1.5e-2,
            ib_max_iter: 100,
        }
    }

    fn logistic_style(setting: SettingId, n: usize, p: usize) -> Self {
        let mut theta0 = vec![0.0; p];
        theta0[0] = 5.0;
        theta0[1] = 5.0;
        if p > 2 {
            theta0[2] = -7.0;
        }
        if p > 3 {
            theta0[3] = -7.0;
        }
        Self {
            setting,
            n,
            p,
            theta0,
            censor_at: None,
            misclass_fp: None,
            misclass_fn: None,
            synthetic: None,
            h: 100,
            reps: 200,
            master_seed: 0,
            methods: vec![MethodId::Mle, MethodId::Bbc, MethodId::Jini],
            ib_tol: 2e-2,
            ib_max_iter: 100,
        }
    }

    /// Restores the full-scale study sizes (1000 replications, H = 200).
    pub fn paper_scale(mut self) -> Self {
        self.reps = 1000;
        self.h = 200;
        self
    }

    pub fn family(&self) -> ModelFamily {
        match self.setting {
            SettingId::NegbinT2 => ModelFamily::NegBin,
            SettingId::NegbinCensoredT3 => ModelFamily::NegBinCensored,
            SettingId::LogisticMisclassT4I | SettingId::LogisticMisclassT4Ii => {
                ModelFamily::LogisticMisclassified
            }
            SettingId::LogisticT6I | SettingId::LogisticT6Ii => ModelFamily::Logistic,
            SettingId::CensoredPoissonT8 => ModelFamily::PoissonCensored,
            SettingId::Synthetic => ModelFamily::SyntheticLinearBias,
        }
    }

    pub fn design_recipe(&self) -> Option<DesignRecipe> {
        match self.setting {
            SettingId::NegbinT2 | SettingId::NegbinCensoredT3 | SettingId::CensoredPoissonT8 => {
                Some(DesignRecipe::NbStyle)
            }
            SettingId::LogisticMisclassT4I | SettingId::LogisticT6I => {
                Some(DesignRecipe::LogisticI)
            }
            SettingId::LogisticMisclassT4Ii | SettingId::LogisticT6Ii => {
                Some(DesignRecipe::LogisticII)
            }
            SettingId::Synthetic => None,
        }
    }

    /// Parameter dimension (p, plus one for negative binomial settings).
    pub fn dim(&self) -> usize {
        self.theta0.len()
    }

    pub fn validate(&self) -> Result<()> {
        let want = match self.family() {
            ModelFamily::NegBin | ModelFamily::NegBinCensored => self.p + 1,
            _ => self.p,
        };
        if self.theta0.len() != want {
            bail!("theta0 has {} coordinates, setting needs {want}", self.theta0.len());
        }
        if self.reps == 0 || self.h == 0 {
            bail!("reps and H must be positive");
        }
        if self.setting == SettingId::Synthetic && self.synthetic.is_none() {
            bail!("synthetic setting requires a synthetic bias description");
        }
        Ok(())
    }

    /// Builds the model, drawing the fixed design and (where relevant) the
    /// misclassification latents from the master seed. Both are drawn once
    /// per experiment and shared by every replication.
    pub fn build_model(&self) -> Result<ModelSpec> {
        self.validate()?;
        let master = RngStream::new(self.master_seed);
        if self.setting == SettingId::Synthetic {
            let bias = self.synthetic.as_ref().expect("validated").to_bias()?;
            return Ok(ModelSpec::synthetic(bias)?);
        }
        let recipe = self.design_recipe().expect("non-synthetic settings have a recipe");
        let mut design_stream = master.substream(STREAM_DESIGN);
        let design = gen_design(recipe, self.n, self.p, &mut design_stream)?;
        let model = match self.family() {
            ModelFamily::Logistic => ModelSpec::logistic(design)?,
            ModelFamily::LogisticMisclassified => {
                let fp = self.misclass_fp.unwrap_or((2.0, 50.0));
                let fnr = self.misclass_fn.unwrap_or((2.0, 10.0));
                let mut latent_stream = master.substream(STREAM_LATENTS);
                let latents = MisclassLatents::sample(self.n, fp, fnr, &mut latent_stream)?;
                ModelSpec::logistic_misclassified(design, latents)?
            }
            ModelFamily::Poisson => ModelSpec::poisson(design)?,
            ModelFamily::PoissonCensored => ModelSpec::poisson_censored(
                design,
                self.censor_at.context("censoring threshold required")?,
            )?,
            ModelFamily::NegBin => ModelSpec::negbin(design)?,
            ModelFamily::NegBinCensored => ModelSpec::negbin_censored(
                design,
                self.censor_at.context("censoring threshold required")?,
            )?,
            ModelFamily::SyntheticLinearBias => unreachable!(),
        };
        Ok(model)
    }
}

const STREAM_DESIGN: u64 = 0xD0;
const STREAM_LATENTS: u64 = 0xA1;
const STREAM_DATA: u64 = 0xB5;
const STREAM_BANK: u64 = 0xBA;

/// Per-method aggregate of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodResult {
    pub method: MethodId,
    /// Successful estimates, tagged with their replication index.
    pub estimates: Vec<(usize, Vec<f64>)>,
    /// `mean(estimate_j) - theta0_j` over successful replications.
    pub bias: Vec<f64>,
    /// `sqrt(mean((estimate_j - theta0_j)^2))` over successful replications.
    pub rmse: Vec<f64>,
    /// Replications where this method failed (beyond initial-fit drops).
    pub failures: usize,
}

/// Everything one experiment run produces.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub methods: Vec<MethodResult>,
    /// Replications dropped because the initial fit failed on the observed
    /// sample.
    pub initial_failures: usize,
    /// Solver iteration count per successful corrected replication.
    pub jini_iterations: Vec<usize>,
    pub wall_secs: f64,
}

impl ExperimentResult {
    pub fn method(&self, id: MethodId) -> Option<&MethodResult> {
        self.methods.iter().find(|m| m.method == id)
    }

    pub fn iteration_histogram(&self) -> BTreeMap<usize, usize> {
        let mut hist = BTreeMap::new();
        for &k in &self.jini_iterations {
            *hist.entry(k).or_insert(0) += 1;
        }
        hist
    }
}

struct RepOutcome {
    rep: usize,
    initial_ok: bool,
    estimates: Vec<Option<Vec<f64>>>,
    jini_iterations: Option<usize>,
}

/// Runs an experiment on `workers` threads. Fully reproducible from the
/// config: reruns at any worker count produce identical results.
pub fn run_experiment(cfg: &ExperimentConfig, workers: usize) -> Result<ExperimentResult> {
    let start = Instant::now();
    cfg.validate()?;
    let model = cfg.build_model()?;
    let theta0 = ParamVec::new(cfg.theta0.clone());
    let fit_cfg = FitConfig::default();
    let master = RngStream::new(cfg.master_seed);
    let data_root = master.substream(STREAM_DATA);
    let bank_root = master.substream(STREAM_BANK);
    let needs_bank = cfg.methods.iter().any(|m| matches!(m, MethodId::Bbc | MethodId::Jini));

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .context("building worker pool")?;
    let outcomes: Vec<Result<RepOutcome>> = pool.install(|| {
        (0..cfg.reps)
            .into_par_iter()
            .map(|rep| {
                run_replication(cfg, &model, &theta0, &fit_cfg, &data_root, &bank_root, needs_bank, rep)
            })
            .collect()
    });

    let mut methods: Vec<MethodResult> = cfg
        .methods
        .iter()
        .map(|&m| MethodResult {
            method: m,
            estimates: Vec::new(),
            bias: vec![0.0; cfg.dim()],
            rmse: vec![0.0; cfg.dim()],
            failures: 0,
        })
        .collect();
    let mut initial_failures = 0usize;
    let mut jini_iterations = Vec::new();
    for outcome in outcomes {
        let out = outcome?;
        if !out.initial_ok {
            initial_failures += 1;
            continue;
        }
        for (slot, est) in methods.iter_mut().zip(out.estimates) {
            match est {
                Some(v) => slot.estimates.push((out.rep, v)),
                None => slot.failures += 1,
            }
        }
        if let Some(iters) = out.jini_iterations {
            jini_iterations.push(iters);
        }
    }
    if initial_failures == cfg.reps {
        bail!("every replication failed at the initial fit");
    }
    for slot in &mut methods {
        let (bias, rmse) = bias_rmse(&slot.estimates, &cfg.theta0);
        slot.bias = bias;
        slot.rmse = rmse;
    }
    Ok(ExperimentResult {
        config: cfg.clone(),
        methods,
        initial_failures,
        jini_iterations,
        wall_secs: start.elapsed().as_secs_f64(),
    })
}

#[allow(clippy::too_many_arguments)]
fn run_replication(
    cfg: &ExperimentConfig,
    model: &ModelSpec,
    theta0: &ParamVec,
    fit_cfg: &FitConfig,
    data_root: &RngStream,
    bank_root: &RngStream,
    needs_bank: bool,
    rep: usize,
) -> Result<RepOutcome> {
    let exec = SerialExecutor;
    let data_seed = data_root.substream(rep as u64).seed();
    let synthetic = model.family == ModelFamily::SyntheticLinearBias;
    // Unused on the synthetic path; any fitter stands in.
    let fitter = Fitter::initial_for(model.family).unwrap_or(Fitter::LogisticMle);

    // Observed sample and initial estimate.
    let (initial, observed) = if synthetic {
        let spec = model.synthetic.as_ref().expect("synthetic setting");
        let obs = CrnBank::new(data_seed, 1, spec.dim())?;
        (Some(synthetic_initial(spec, theta0, obs.row(0))), None)
    } else {
        let obs = CrnBank::new(data_seed, 1, model.n())?;
        let data = model.simulate(theta0, &obs, 0)?;
        let initial = match fitter.fit(&data, &model.bounds, fit_cfg) {
            Ok(fit) if fit.converged => Some(fit.params),
            _ => None,
        };
        (initial, Some(data))
    };
    let Some(initial) = initial else {
        return Ok(RepOutcome {
            rep,
            initial_ok: false,
            estimates: vec![None; cfg.methods.len()],
            jini_iterations: None,
        });
    };

    let bank = if needs_bank {
        Some(CrnBank::new(bank_root.substream(rep as u64).seed(), cfg.h, model.n())?)
    } else {
        None
    };
    let ib_cfg = IbConfig {
        h: cfg.h,
        tol: cfg.ib_tol,
        max_iter: cfg.ib_max_iter,
        seed: 0, // the bank is supplied explicitly
        failure_policy: FailurePolicy::Abort,
    };

    let mut estimates = Vec::with_capacity(cfg.methods.len());
    let mut jini_iterations = None;
    for &method in &cfg.methods {
        let est = match method {
            MethodId::Mle | MethodId::NaiveMle => Some(initial.as_slice().to_vec()),
            MethodId::BenchmarkMle => {
                let data = observed.as_ref().expect("benchmark needs a data model");
                Fitter::benchmark_for(model.family).and_then(|bench| {
                    match bench.fit(data, &model.bounds, fit_cfg) {
                        Ok(fit) if fit.converged => Some(fit.params.into_vec()),
                        _ => None,
                    }
                })
            }
            MethodId::Bbc => {
                let bank = bank.as_ref().expect("bank built for corrected methods");
                bbc(&initial, model, bank, fitter, fit_cfg, ib_cfg.failure_policy, &exec)
                    .ok()
                    .map(|corr| corr.estimate.into_vec())
            }
            MethodId::Jini => {
                let bank = bank.as_ref().expect("bank built for corrected methods");
                match ib_solve(&initial, model, bank, fitter, fit_cfg, &ib_cfg, &exec) {
                    Ok(corr) => {
                        debug_assert_eq!(corr.method, CorrectionMethod::Jini);
                        let trace = corr.trace.as_ref().expect("solver always traces");
                        jini_iterations = Some(trace.step_norms.len());
                        Some(corr.estimate.into_vec())
                    }
                    Err(_) => None,
                }
            }
        };
        estimates.push(est);
    }
    Ok(RepOutcome { rep, initial_ok: true, estimates, jini_iterations })
}

fn bias_rmse(estimates: &[(usize, Vec<f64>)], theta0: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let dim = theta0.len();
    let mut bias = vec![0.0; dim];
    let mut rmse = vec![0.0; dim];
    if estimates.is_empty() {
        return (bias, rmse);
    }
    let m = estimates.len() as f64;
    for (_, est) in estimates {
        for j in 0..dim {
            let d = est[j] - theta0[j];
            bias[j] += d;
            rmse[j] += d * d;
        }
    }
    for j in 0..dim {
        bias[j] /= m;
        rmse[j] = (rmse[j] / m).sqrt();
    }
    (bias, rmse)
}

/// Result of probing the bias function of the initial estimator along one
/// coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasProbeResult {
    /// Probed coordinate (zero-based).
    pub coord: usize,
    pub grid: Vec<f64>,
    /// One bias vector (`simulated_mean(theta) - theta`) per grid point.
    pub dstar: Vec<Vec<f64>>,
    pub h: usize,
    /// Empirical absolute bias of the initial estimator at theta0: the
    /// plausible-neighborhood half-width of the probed coordinate.
    pub halfwidth: f64,
}

/// Evaluates the simulated bias function along a grid in one coordinate,
/// holding the others at `theta0`. One fixed bank (`h` rows from `seed`)
/// is shared by every grid point, so the curve is smooth in the
/// common-random-numbers sense.
#[allow(clippy::too_many_arguments)]
pub fn bias_probe(
    model: &ModelSpec,
    fitter: Fitter,
    theta0: &ParamVec,
    coord: usize,
    grid: &[f64],
    h: usize,
    seed: u64,
    exec: &ThreadPoolExecutor,
) -> Result<BiasProbeResult> {
    if coord >= theta0.len() {
        bail!("coordinate {coord} out of range for dimension {}", theta0.len());
    }
    if grid.is_empty() {
        bail!("probe grid is empty");
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        bail!("grid values must be strictly increasing");
    }
    let fit_cfg = FitConfig::default();
    let bank = CrnBank::new(seed, h, model.n())?;
    let probe_one = |theta: &ParamVec| -> Result<Vec<f64>> {
        if !model.bounds.contains(theta.as_slice()) {
            bail!("grid point leaves the parameter box");
        }
        let sm = simulated_mean(model, theta, &bank, fitter, &fit_cfg, FailurePolicy::Abort, exec)?;
        Ok(sm
            .mean
            .as_slice()
            .iter()
            .zip(theta.as_slice())
            .map(|(m, t)| m - t)
            .collect())
    };
    let mut dstar = Vec::with_capacity(grid.len());
    for &g in grid {
        let mut values = theta0.as_slice().to_vec();
        values[coord] = g;
        dstar.push(probe_one(&ParamVec::new(values))?);
    }
    let halfwidth = probe_one(theta0)?[coord].abs();
    Ok(BiasProbeResult { coord, grid: grid.to_vec(), dstar, h, halfwidth })
}

/// One row of the bias/RMSE summary: parameters sharing a true value are
/// grouped (consecutively) and their absolute bias and RMSE averaged.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub method: String,
    pub group: String,
    pub abs_bias: f64,
    pub rmse: f64,
}

/// Parameter label: coefficients are `beta1..`, the trailing negative
/// binomial overdispersion is `alpha`, synthetic coordinates `theta1..`.
fn param_label(cfg: &ExperimentConfig, index: usize) -> String {
    match cfg.family() {
        ModelFamily::SyntheticLinearBias => format!("theta{}", index + 1),
        ModelFamily::NegBin | ModelFamily::NegBinCensored if index == cfg.p => "alpha".into(),
        _ => format!("beta{}", index + 1),
    }
}

/// Groups of consecutive coordinates sharing a true value; the trailing
/// overdispersion always stands alone.
fn param_groups(cfg: &ExperimentConfig) -> Vec<(usize, usize)> {
    let dim = cfg.dim();
    let mut groups = Vec::new();
    let mut start = 0;
    for j in 1..=dim {
        let split = j == dim
            || cfg.theta0[j] != cfg.theta0[start]
            || (cfg.family().is_negbin() && j == cfg.p);
        if split {
            groups.push((start, j - 1));
            start = j;
        }
    }
    groups
}

/// Serializes what the study figures plot: one row per (method, parameter
/// group) with average absolute bias and RMSE over the group.
pub fn summarize(result: &ExperimentResult) -> Vec<SummaryRow> {
    let cfg = &result.config;
    let groups = param_groups(cfg);
    let mut rows = Vec::new();
    for m in &result.methods {
        for &(lo, hi) in &groups {
            let label = if lo == hi {
                param_label(cfg, lo)
            } else {
                format!("beta{}:{}", lo + 1, hi + 1)
            };
            let width = (hi - lo + 1) as f64;
            let abs_bias = (lo..=hi).map(|j| m.bias[j].abs()).sum::<f64>() / width;
            let rmse = (lo..=hi).map(|j| m.rmse[j]).sum::<f64>() / width;
            rows.push(SummaryRow { method: m.method.name().into(), group: label, abs_bias, rmse });
        }
    }
    rows
}
