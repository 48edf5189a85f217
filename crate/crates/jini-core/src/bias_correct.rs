//! Simulation-based bias correction.
//!
//! Given an initial estimate computed on the observed sample, the solver
//! repeatedly re-estimates on samples simulated from the current parameter
//! value (always through the same [`CrnBank`], so the parameter is the only
//! thing that changes between iterations) and moves the parameter by the
//! gap between the observed estimate and the simulated mean:
//!
//! ```text
//! theta(k+1) = clamp( theta(k) + initial - mean_h estimate(simulate(theta(k), row h)) )
//! ```
//!
//! One step of this map is the classic parametric bootstrap bias
//! correction; its fixed point is the just-identified indirect-inference
//! estimator, which matches the observed estimate in simulation. The
//! iteration contracts at a geometric rate whenever the estimator's bias
//! function is a mild contraction, so a converged run ends with the
//! residual `|initial - simulated_mean(estimate)|` at the step tolerance.

use crate::crn::CrnBank;
use crate::estimators::{FitConfig, Fitter};
use crate::models::{synthetic_initial, ModelFamily, ModelSpec, ParamVec};
use crate::{Error, Result};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

/// Runs independent jobs and returns their results in job order. The
/// reduction done by the callers is always sequential over that order, so
/// results are identical no matter how the jobs were scheduled.
pub trait Executor: Sync {
    fn run<T, F>(&self, jobs: usize, job: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync;
}

/// Runs every job on the calling thread.
pub struct SerialExecutor;

impl Executor for SerialExecutor {
    fn run<T, F>(&self, jobs: usize, job: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync,
    {
        (0..jobs).map(job).collect()
    }
}

/// What to do when re-estimation fails outright on a simulated sample
/// (numeric failure, not mere non-convergence).
///
/// Skipping changes which samples enter the average, which silently breaks
/// the fixed-bank determinism contract across parameter values, so it is
/// opt-in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FailurePolicy {
    #[default]
    Abort,
    SkipAndAverage,
}

/// Controls for the fixed-point iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct IbConfig {
    /// Number of simulated samples per iteration.
    pub h: usize,
    /// Stop when the L2 step norm falls below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Seed of the uniform bank built for the run.
    pub seed: u64,
    pub failure_policy: FailurePolicy,
}

impl IbConfig {
    pub fn new(h: usize, seed: u64) -> Self {
        Self { h, tol: 1e-4, max_iter: 100, seed, failure_policy: FailurePolicy::Abort }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }
}

/// Average of the initial estimator over the simulated samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedMean {
    pub mean: ParamVec,
    /// Inner fits that ended non-converged (their projected last iterate
    /// still enters the average).
    pub fit_failures: usize,
    /// Samples dropped under [`FailurePolicy::SkipAndAverage`].
    pub skipped: usize,
}

/// Iterate history of one solver run.
#[derive(Debug, Clone, PartialEq)]
pub struct IbTrace {
    /// theta(0..=K); the first entry is the initial estimate.
    pub iterates: Vec<ParamVec>,
    /// L2 norms of the K accepted steps.
    pub step_norms: Vec<f64>,
    /// `|initial - simulated_mean(theta(k))|` for k = 0..=K; the last
    /// entry is evaluated at the returned estimate.
    pub residuals: Vec<f64>,
    pub converged: bool,
    /// Total non-converged inner fits across all iterations.
    pub fit_failures: usize,
}

/// How an estimate was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorrectionMethod {
    /// The raw initial estimator.
    InitialOnly,
    /// One-step bootstrap bias correction.
    Bbc,
    /// Fixed point of the iterated correction.
    Jini,
}

/// A corrected estimate together with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Corrected {
    pub estimate: ParamVec,
    pub method: CorrectionMethod,
    pub trace: Option<IbTrace>,
    /// The initial estimate the correction started from.
    pub initial: ParamVec,
    /// Whether box projection altered any accepted iterate.
    pub box_projected: bool,
}

/// Mean of the initial estimator over all `H` rows of the bank at `theta`,
/// reduced in row order so totals are reproducible under any scheduling.
pub fn simulated_mean<E: Executor>(
    model: &ModelSpec,
    theta: &ParamVec,
    bank: &CrnBank,
    fitter: Fitter,
    fit_cfg: &FitConfig,
    policy: FailurePolicy,
    exec: &E,
) -> Result<SimulatedMean> {
    let dim = model.dim();
    if theta.len() != dim {
        return Err(Error::InvalidArgument(format!(
            "theta has {} coordinates, model needs {dim}",
            theta.len()
        )));
    }
    let rows = bank.rows();
    let per_sample = exec.run(rows, |h| estimate_on_sample(model, theta, bank, h, fitter, fit_cfg));
    let mut sum = vec![0.0; dim];
    let mut used = 0usize;
    let mut fit_failures = 0usize;
    let mut skipped = 0usize;
    for (h, outcome) in per_sample.into_iter().enumerate() {
        match outcome {
            Ok((estimate, converged)) => {
                for (s, v) in sum.iter_mut().zip(estimate.as_slice()) {
                    *s += v;
                }
                used += 1;
                if !converged {
                    fit_failures += 1;
                }
            }
            Err(e) => match policy {
                FailurePolicy::Abort => {
                    return Err(Error::NumericFailure(format!(
                        "re-estimation failed on simulated sample {h}: {e}"
                    )))
                }
                FailurePolicy::SkipAndAverage => skipped += 1,
            },
        }
    }
    if used == 0 {
        return Err(Error::NumericFailure(String::from(
            "re-estimation failed on every simulated sample",
        )));
    }
    for s in &mut sum {
        *s /= used as f64;
    }
    Ok(SimulatedMean { mean: ParamVec::new(sum), fit_failures, skipped })
}

fn estimate_on_sample(
    model: &ModelSpec,
    theta: &ParamVec,
    bank: &CrnBank,
    h: usize,
    fitter: Fitter,
    fit_cfg: &FitConfig,
) -> Result<(ParamVec, bool)> {
    if model.family == ModelFamily::SyntheticLinearBias {
        let spec = model.synthetic.as_ref().expect("validated at construction");
        if bank.cols() < spec.dim() {
            return Err(Error::InvalidArgument(format!(
                "bank width {} is smaller than the parameter dimension {}",
                bank.cols(),
                spec.dim()
            )));
        }
        return Ok((synthetic_initial(spec, theta, bank.row(h)), true));
    }
    let data = model.simulate(theta, bank, h)?;
    // Warm-start at the simulating parameter: the re-estimate is within
    // sampling distance of it, and the start point is part of the fixed
    // inputs, so determinism and worker invariance are untouched.
    let fit = fitter.fit_from(&data, &model.bounds, fit_cfg, Some(theta.as_slice()))?;
    Ok((fit.params, fit.converged))
}

/// One update of the correction map, clamped to the box. Both the one-step
/// correction and the solver use this exact expression, so the one-step
/// estimate and the first solver iterate are bit-identical.
fn correction_step(
    current: &ParamVec,
    initial: &ParamVec,
    sim_mean: &ParamVec,
    model: &ModelSpec,
) -> (ParamVec, bool) {
    let mut v: Vec<f64> = current
        .as_slice()
        .iter()
        .zip(initial.as_slice().iter().zip(sim_mean.as_slice()))
        .map(|(t, (p, m))| t + (p - m))
        .collect();
    let unclamped = v.clone();
    model.bounds.clamp_in_place(&mut v);
    let clamped = v.iter().zip(&unclamped).any(|(a, b)| a != b);
    (ParamVec::new(v), clamped)
}

/// One-step bootstrap bias correction: the initial estimate moved by its
/// own simulated bias, `2 * initial - simulated_mean(initial)`.
pub fn bbc<E: Executor>(
    initial: &ParamVec,
    model: &ModelSpec,
    bank: &CrnBank,
    fitter: Fitter,
    fit_cfg: &FitConfig,
    policy: FailurePolicy,
    exec: &E,
) -> Result<Corrected> {
    let start = model.bounds.project(initial);
    let sm = simulated_mean(model, &start, bank, fitter, fit_cfg, policy, exec)?;
    let (estimate, clamped) = correction_step(&start, initial, &sm.mean, model);
    Ok(Corrected {
        estimate,
        method: CorrectionMethod::Bbc,
        trace: None,
        initial: initial.clone(),
        box_projected: clamped,
    })
}

/// Iterates the correction map from the initial estimate until the step
/// norm drops below `cfg.tol` or `cfg.max_iter` is reached, recording the
/// full trace. The returned trace carries one residual per visited iterate
/// including a final evaluation at the returned estimate.
pub fn ib_solve<E: Executor>(
    initial: &ParamVec,
    model: &ModelSpec,
    bank: &CrnBank,
    fitter: Fitter,
    fit_cfg: &FitConfig,
    cfg: &IbConfig,
    exec: &E,
) -> Result<Corrected> {
    if !initial.is_finite() {
        return Err(Error::InvalidArgument(String::from(
            "initial estimate must be finite",
        )));
    }
    let mut current = model.bounds.project(initial);
    let mut iterates = vec![initial.clone()];
    let mut step_norms = Vec::new();
    let mut residuals = Vec::new();
    let mut fit_failures = 0usize;
    let mut box_projected = current.as_slice() != initial.as_slice();
    let mut converged = false;
    for k in 0..cfg.max_iter {
        let sm = simulated_mean(model, &current, bank, fitter, fit_cfg, cfg.failure_policy, exec)?;
        fit_failures += sm.fit_failures;
        residuals.push(initial.l2_distance(&sm.mean));
        let (next, clamped) = correction_step(&current, initial, &sm.mean, model);
        if !next.is_finite() {
            return Err(Error::NumericFailure(format!(
                "non-finite iterate at step {}",
                k + 1
            )));
        }
        box_projected |= clamped;
        let step = next.l2_distance(&current);
        step_norms.push(step);
        iterates.push(next.clone());
        current = next;
        if step < cfg.tol {
            converged = true;
            break;
        }
    }
    // Residual at the returned estimate, for the fixed-point diagnostic.
    let sm = simulated_mean(model, &current, bank, fitter, fit_cfg, cfg.failure_policy, exec)?;
    fit_failures += sm.fit_failures;
    residuals.push(initial.l2_distance(&sm.mean));
    Ok(Corrected {
        estimate: current,
        method: CorrectionMethod::Jini,
        trace: Some(IbTrace { iterates, step_norms, residuals, converged, fit_failures }),
        initial: initial.clone(),
        box_projected,
    })
}

/// Fits the initial estimator on the observed data, builds the uniform
/// bank from the config seed, and solves for the corrected estimate.
pub fn jini<E: Executor>(
    data: &crate::models::Dataset,
    model: &ModelSpec,
    fitter: Fitter,
    fit_cfg: &FitConfig,
    cfg: &IbConfig,
    exec: &E,
) -> Result<Corrected> {
    if model.family == ModelFamily::SyntheticLinearBias {
        return Err(Error::InvalidArgument(String::from(
            "the synthetic pseudo-model has no observed-data path; use ib_solve directly",
        )));
    }
    let fit = fitter
        .fit(data, &model.bounds, fit_cfg)
        .map_err(|e| Error::InitialEstimatorFailure(format!("{e}")))?;
    if !fit.converged {
        return Err(Error::InitialEstimatorFailure(String::from(
            "initial fit did not converge on the observed sample",
        )));
    }
    let bank = CrnBank::new(cfg.seed, cfg.h, model.n())?;
    ib_solve(&fit.params, model, &bank, fitter, fit_cfg, cfg, exec)
}
