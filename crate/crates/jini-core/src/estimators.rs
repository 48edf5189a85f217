//! Maximum-likelihood fitters used as initial and benchmark estimators.
//!
//! All fitters maximize inside the model's parameter box and never panic on
//! degenerate samples: a fit that runs into separation or another boundary
//! returns the box-projected last iterate with `converged = false`, because
//! inside the bias-correction loop a hard failure on one of H simulated
//! samples would abort the whole run. The solver layer decides what to do
//! with non-converged inner fits.
//!
//! Reported `grad_norm` is the norm of the *projected* gradient (gradient
//! components that push against an active box face are zeroed), so the
//! `converged => grad_norm <= grad_tol` contract also holds for solutions
//! pinned at the overdispersion edge.

use crate::linalg::{l2_norm, solve_spd_regularized, weighted_normal_equations};
use crate::math::{exp, ln, ln_1p, ln_1p_exp, ln_gamma, sigmoid};
use crate::models::{Dataset, ModelFamily, ParamBox, ParamVec, ResponseKind};
use crate::{Error, Result};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

/// Temporary instrumentation counter (beta steps).
pub static BETA_STEP_COUNT: core::sync::atomic::AtomicUsize =
    core::sync::atomic::AtomicUsize::new(0);
pub static LL_EVAL_COUNT: core::sync::atomic::AtomicUsize =
    core::sync::atomic::AtomicUsize::new(0);

/// Tolerances and iteration caps shared by every fitter.
#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub max_iter: usize,
    pub grad_tol: f64,
    pub step_halvings: usize,
    pub ridge: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self { max_iter: 100, grad_tol: 1e-8, step_halvings: 30, ridge: 0.0 }
    }
}

/// Outcome of a maximum-likelihood fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: ParamVec,
    pub converged: bool,
    pub iterations: usize,
    pub loglik: f64,
    /// Projected-gradient Euclidean norm at the returned parameters.
    pub grad_norm: f64,
}

/// The available likelihood fitters. `Poisson` and `NegBin` deliberately
/// ignore a censoring flag on the data: applied to censored responses they
/// are the readily available but inconsistent initial estimators that the
/// bias-correction solver starts from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fitter {
    LogisticMle,
    PoissonMle,
    NegBinMle,
    CensoredPoissonMle,
    CensoredNegBinMle,
}

impl Fitter {
    /// The initial estimator conventionally paired with a model family
    /// (the plain MLE that ignores censoring or misclassification).
    pub fn initial_for(family: ModelFamily) -> Option<Fitter> {
        match family {
            ModelFamily::Logistic | ModelFamily::LogisticMisclassified => {
                Some(Fitter::LogisticMle)
            }
            ModelFamily::Poisson | ModelFamily::PoissonCensored => Some(Fitter::PoissonMle),
            ModelFamily::NegBin | ModelFamily::NegBinCensored => Some(Fitter::NegBinMle),
            ModelFamily::SyntheticLinearBias => None,
        }
    }

    /// The consistent benchmark fitter for a family, where one exists.
    pub fn benchmark_for(family: ModelFamily) -> Option<Fitter> {
        match family {
            ModelFamily::PoissonCensored => Some(Fitter::CensoredPoissonMle),
            ModelFamily::NegBinCensored => Some(Fitter::CensoredNegBinMle),
            ModelFamily::Logistic => Some(Fitter::LogisticMle),
            ModelFamily::Poisson => Some(Fitter::PoissonMle),
            ModelFamily::NegBin => Some(Fitter::NegBinMle),
            _ => None,
        }
    }

    pub fn fit(&self, data: &Dataset, bounds: &ParamBox, cfg: &FitConfig) -> Result<FitResult> {
        self.fit_from(data, bounds, cfg, None)
    }

    /// Like [`Fitter::fit`], but optionally warm-started (the full
    /// parameter vector, overdispersion included for negative binomial
    /// fits). The solver warm-starts every re-fit at the simulating
    /// parameter, which roughly halves the inner iteration count.
    pub fn fit_from(
        &self,
        data: &Dataset,
        bounds: &ParamBox,
        cfg: &FitConfig,
        start: Option<&[f64]>,
    ) -> Result<FitResult> {
        match self {
            Fitter::LogisticMle => {
                if data.kind != ResponseKind::Binary {
                    return Err(Error::InvalidArgument(String::from(
                        "logistic fit requires binary responses",
                    )));
                }
                check_dims(data, bounds, false)?;
                maximize_beta(data, &BetaObjective::Logistic { y: &data.y }, bounds, cfg, start)
            }
            Fitter::PoissonMle => {
                if data.kind != ResponseKind::Count {
                    return Err(Error::InvalidArgument(String::from(
                        "poisson fit requires count responses",
                    )));
                }
                check_dims(data, bounds, false)?;
                let obj =
                    BetaObjective::Poisson { y: &data.y, ln_fact: ln_factorial_sum(&data.y) };
                maximize_beta(data, &obj, bounds, cfg, start)
            }
            Fitter::NegBinMle => fit_negbin_family(data, bounds, cfg, None, start),
            Fitter::CensoredPoissonMle => {
                if data.kind != ResponseKind::Count {
                    return Err(Error::InvalidArgument(String::from(
                        "censored poisson fit requires count responses",
                    )));
                }
                let c = require_censoring(data)?;
                check_dims(data, bounds, false)?;
                maximize_beta(
                    data,
                    &BetaObjective::CensoredPoisson { y: &data.y, c },
                    bounds,
                    cfg,
                    start,
                )
            }
            Fitter::CensoredNegBinMle => {
                let c = require_censoring(data)?;
                fit_negbin_family(data, bounds, cfg, Some(c), start)
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Log-likelihoods and analytic scores
// ---------------------------------------------------------------------------

fn ln_factorial_sum(y: &[u64]) -> f64 {
    y.iter().map(|&v| ln_gamma(v as f64 + 1.0)).sum()
}

/// Bernoulli log-likelihood with logit link.
pub fn logistic_loglik(data: &Dataset, beta: &[f64]) -> Result<f64> {
    let eta = crate::models::linear_predictor(&data.design, beta)?;
    Ok(logistic_ll_eta(&data.y, &eta))
}

fn logistic_ll_eta(y: &[u64], eta: &[f64]) -> f64 {
    let mut ll = 0.0;
    for (yi, e) in y.iter().zip(eta) {
        ll += *yi as f64 * e - ln_1p_exp(*e);
    }
    ll
}

/// Score of the Bernoulli log-likelihood: `X' (y - mu)`.
pub fn logistic_score(data: &Dataset, beta: &[f64]) -> Result<Vec<f64>> {
    let eta = crate::models::linear_predictor(&data.design, beta)?;
    let g: Vec<f64> = data
        .y
        .iter()
        .zip(&eta)
        .map(|(&yi, &e)| yi as f64 - sigmoid(e))
        .collect();
    Ok(design_t_times(&data.design, &g))
}

/// Poisson log-likelihood with log link, censoring flag ignored.
pub fn poisson_loglik(data: &Dataset, beta: &[f64]) -> Result<f64> {
    let eta = crate::models::linear_predictor(&data.design, beta)?;
    Ok(poisson_ll_eta(&data.y, &eta, ln_factorial_sum(&data.y)))
}

fn poisson_ll_eta(y: &[u64], eta: &[f64], ln_fact: f64) -> f64 {
    let mut ll = -ln_fact;
    for (yi, e) in y.iter().zip(eta) {
        ll += *yi as f64 * e - exp(*e);
    }
    ll
}

/// Score of the Poisson log-likelihood: `X' (y - exp(eta))`.
pub fn poisson_score(data: &Dataset, beta: &[f64]) -> Result<Vec<f64>> {
    let eta = crate::models::linear_predictor(&data.design, beta)?;
    let g: Vec<f64> = data
        .y
        .iter()
        .zip(&eta)
        .map(|(&yi, &e)| yi as f64 - exp(e))
        .collect();
    Ok(design_t_times(&data.design, &g))
}

/// Log pmf of the negative binomial response with mean `mu` and
/// overdispersion `alpha` (`r = 1/alpha`). The log-gamma difference is a
/// plain sum of logs for small counts and a two-term `ln_gamma` difference
/// beyond that.
fn negbin_ln_pmf(y: u64, mu: f64, r: f64, alpha: f64) -> f64 {
    lgamma_ratio(y, r) - ln_gamma(y as f64 + 1.0) + r_ln_q(mu, alpha)
        + y as f64 * ln_pp(mu, r)
}

/// `ln Gamma(y + r) - ln Gamma(r)` for integer `y`.
fn lgamma_ratio(y: u64, r: f64) -> f64 {
    if y <= 16 {
        let mut s = 0.0;
        for j in 0..y {
            s += ln(r + j as f64);
        }
        s
    } else {
        ln_gamma(y as f64 + r) - ln_gamma(r)
    }
}

/// `r * ln(r / (r + mu))`, conditioned for alpha near zero.
#[inline]
fn r_ln_q(mu: f64, alpha: f64) -> f64 {
    -ln_1p(alpha * mu) / alpha
}

/// `ln(mu / (r + mu))`.
#[inline]
fn ln_pp(mu: f64, r: f64) -> f64 {
    ln(mu) - ln(r + mu)
}

/// Negative binomial log-likelihood; `params` is the coefficient vector
/// with the overdispersion appended.
pub fn negbin_loglik(data: &Dataset, params: &[f64]) -> Result<f64> {
    let (beta, alpha) = split_negbin_params(data, params)?;
    let eta = crate::models::linear_predictor(&data.design, beta)?;
    Ok(negbin_ll_eta(&data.y, &eta, alpha))
}

fn negbin_ll_eta(y: &[u64], eta: &[f64], alpha: f64) -> f64 {
    let r = 1.0 / alpha;
    let mut ll = 0.0;
    for (yi, e) in y.iter().zip(eta) {
        ll += negbin_ln_pmf(*yi, exp(*e), r, alpha);
    }
    ll
}

/// Score of the negative binomial log-likelihood with respect to
/// `(beta, alpha)`. The digamma differences reduce to harmonic-style sums
/// for integer counts.
pub fn negbin_score(data: &Dataset, params: &[f64]) -> Result<Vec<f64>> {
    let (beta, alpha) = split_negbin_params(data, params)?;
    let eta = crate::models::linear_predictor(&data.design, beta)?;
    let r = 1.0 / alpha;
    let n = data.n();
    let mut g_eta = vec![0.0; n];
    let mut dll_dr = 0.0;
    for i in 0..n {
        let yi = data.y[i] as f64;
        let mu = exp(eta[i]);
        g_eta[i] = (yi - mu) * r / (r + mu);
        dll_dr += digamma_ratio(data.y[i], r) + ln(r) - ln(r + mu) + (mu - yi) / (r + mu);
    }
    let mut g = design_t_times(&data.design, &g_eta);
    // d/d alpha = -r^2 d/dr.
    g.push(-r * r * dll_dr);
    Ok(g)
}

/// `psi(y + r) - psi(r)` for integer `y`.
#[inline]
fn digamma_ratio(y: u64, r: f64) -> f64 {
    let mut s = 0.0;
    for j in 0..y {
        s += 1.0 / (r + j as f64);
    }
    s
}

/// `psi'(y + r) - psi'(r)` for integer `y`.
#[inline]
fn trigamma_ratio(y: u64, r: f64) -> f64 {
    let mut s = 0.0;
    for j in 0..y {
        let t = r + j as f64;
        s -= 1.0 / (t * t);
    }
    s
}

fn split_negbin_params<'a>(data: &Dataset, params: &'a [f64]) -> Result<(&'a [f64], f64)> {
    let p = data.design.cols();
    if params.len() != p + 1 {
        return Err(Error::InvalidArgument(format!(
            "expected {} parameters (coefficients plus overdispersion), got {}",
            p + 1,
            params.len()
        )));
    }
    let alpha = params[p];
    if !(alpha > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "overdispersion must be positive, got {alpha}"
        )));
    }
    Ok((&params[..p], alpha))
}

/// Upper-tail state of a censored Poisson observation: `S` is the tail sum
/// scaled by `pmf(C)`, and `rho1 = pmf(C-1) / P(Y >= C)`.
struct PoissonTail {
    ln_tail: f64,
    rho1: f64,
    rho2: f64,
}

fn poisson_tail(c: u64, mu: f64) -> Result<PoissonTail> {
    debug_assert!(c >= 1);
    // The lower sum has only C terms; carry the pmf recurrence in log
    // space so large means do not underflow the early terms.
    let ln_mu = ln(mu);
    let mut lower = 0.0;
    let mut pmf_cm1 = 0.0;
    let mut pmf_cm2 = 0.0;
    let mut ln_pmf = -mu;
    for k in 0..c {
        let pk = exp(ln_pmf);
        if k + 1 == c {
            pmf_cm1 = pk;
        }
        if k + 2 == c {
            pmf_cm2 = pk;
        }
        lower += pk;
        ln_pmf += ln_mu - ln(k as f64 + 1.0);
    }
    if lower <= 0.5 {
        // Tail is the complement of a small lower mass.
        let tail = 1.0 - lower;
        return Ok(PoissonTail { ln_tail: ln_1p(-lower), rho1: pmf_cm1 / tail, rho2: pmf_cm2 / tail });
    }
    // Mean well below the threshold: sum the tail by pmf ratios upward
    // from C, stopping on a geometric remainder bound.
    let ln_pmf_c = c as f64 * ln_mu - mu - ln_gamma(c as f64 + 1.0);
    let mut s = 1.0;
    let mut term = 1.0;
    let mut k = c;
    loop {
        k += 1;
        term *= mu / k as f64;
        s += term;
        let ratio = mu / (k as f64 + 1.0);
        if ratio < 1.0 && term * ratio / (1.0 - ratio) < 1e-14 * s {
            break;
        }
        if k > c + 10_000_000 {
            return Err(Error::NumericFailure(String::from(
                "censored poisson tail sum did not converge",
            )));
        }
    }
    if !ln_pmf_c.is_finite() || !s.is_finite() {
        return Err(Error::NumericFailure(String::from(
            "censored poisson tail probability underflowed",
        )));
    }
    // pmf(C-1)/T = (C/mu)/S and pmf(C-2) = pmf(C-1) * (C-1)/mu.
    let rho1 = (c as f64 / mu) / s;
    let rho2 = if c >= 2 { rho1 * (c as f64 - 1.0) / mu } else { 0.0 };
    Ok(PoissonTail { ln_tail: ln_pmf_c + ln(s), rho1, rho2 })
}

/// Censored Poisson log-likelihood: exact pmf below the threshold, upper
/// tail mass at it.
pub fn censored_poisson_loglik(data: &Dataset, beta: &[f64]) -> Result<f64> {
    let c = require_censoring(data)?;
    let eta = crate::models::linear_predictor(&data.design, beta)?;
    censored_poisson_ll_eta(&data.y, &eta, c)
}

fn censored_poisson_ll_eta(y: &[u64], eta: &[f64], c: u64) -> Result<f64> {
    let mut ll = 0.0;
    for (yi, e) in y.iter().zip(eta) {
        let mu = exp(*e);
        if *yi < c {
            ll += *yi as f64 * e - mu - ln_gamma(*yi as f64 + 1.0);
        } else {
            ll += poisson_tail(c, mu)?.ln_tail;
        }
    }
    Ok(ll)
}

/// Score of the censored Poisson log-likelihood.
pub fn censored_poisson_score(data: &Dataset, beta: &[f64]) -> Result<Vec<f64>> {
    let c = require_censoring(data)?;
    let eta = crate::models::linear_predictor(&data.design, beta)?;
    let mut g_eta = vec![0.0; data.n()];
    for i in 0..data.n() {
        let mu = exp(eta[i]);
        g_eta[i] = if data.y[i] < c {
            data.y[i] as f64 - mu
        } else {
            mu * poisson_tail(c, mu)?.rho1
        };
    }
    Ok(design_t_times(&data.design, &g_eta))
}

/// Tail state of a censored negative binomial observation.
struct NegBinTail {
    ln_tail: f64,
    /// d loglik / d eta of the censored term.
    dll_deta: f64,
    /// d loglik / d r of the censored term.
    dll_dr: f64,
}

fn negbin_tail(c: u64, mu: f64, r: f64, alpha: f64) -> Result<NegBinTail> {
    debug_assert!(c >= 1);
    let pp = alpha * mu / (1.0 + alpha * mu);
    // d ln pmf(k) / dr at k = 0, updated by 1/(r+k) - 1/(r+mu) per step.
    let w0 = ln(r) - ln(r + mu) + mu / (r + mu);
    // Lower sum over the C uncensored support points, in log space.
    let mut lower = 0.0;
    let mut lower_dr = 0.0;
    let mut pmf_cm1 = 0.0;
    let mut ln_pmf = r_ln_q(mu, alpha);
    let mut w = w0;
    for k in 0..c {
        let pk = exp(ln_pmf);
        if k + 1 == c {
            pmf_cm1 = pk;
        }
        lower += pk;
        lower_dr += pk * w;
        let kf = k as f64;
        ln_pmf += ln((kf + r) * pp / (kf + 1.0));
        w += 1.0 / (r + kf) - 1.0 / (r + mu);
    }
    if lower <= 0.5 {
        let tail = 1.0 - lower;
        // d/d mu P(Y >= C) = (C - 1 + r)/(r + mu) * pmf(C-1).
        let dll_deta = mu * (c as f64 - 1.0 + r) / (r + mu) * pmf_cm1 / tail;
        return Ok(NegBinTail {
            ln_tail: ln_1p(-lower),
            dll_deta,
            dll_dr: -lower_dr / tail,
        });
    }
    // Mean well below the threshold: scaled tail sum
    // S = sum_{k >= C} pmf(k)/pmf(C) and its r-derivative companion,
    // accumulated until the geometric remainder bound drops below 1e-12
    // of the running total. At this point `ln_pmf` and `w` sit at k = C.
    let ln_pmf_c = ln_pmf;
    let mut s = 1.0;
    let mut term = 1.0;
    let mut ws = w;
    let mut kf = c as f64;
    loop {
        let ratio = (kf + r) / (kf + 1.0) * pp;
        term *= ratio;
        w += 1.0 / (r + kf) - 1.0 / (r + mu);
        kf += 1.0;
        s += term;
        ws += term * w;
        let next_ratio = (kf + r) / (kf + 1.0) * pp;
        let bound = if r >= 1.0 { next_ratio } else { pp.max(next_ratio) };
        if bound < 1.0 && term * bound / (1.0 - bound) < 1e-12 * s {
            break;
        }
        if kf > c as f64 + 10_000_000.0 {
            return Err(Error::NumericFailure(String::from(
                "censored negative binomial tail sum did not converge",
            )));
        }
    }
    if !ln_pmf_c.is_finite() || !s.is_finite() || !ws.is_finite() {
        return Err(Error::NumericFailure(String::from(
            "censored negative binomial tail probability underflowed",
        )));
    }
    Ok(NegBinTail {
        ln_tail: ln_pmf_c + ln(s),
        // d/d eta ln P(Y >= C) = C / S for count tails with log link.
        dll_deta: c as f64 / s,
        dll_dr: ws / s,
    })
}

/// Censored negative binomial log-likelihood.
pub fn censored_negbin_loglik(data: &Dataset, params: &[f64]) -> Result<f64> {
    let c = require_censoring(data)?;
    let (beta, alpha) = split_negbin_params(data, params)?;
    let eta = crate::models::linear_predictor(&data.design, beta)?;
    censored_negbin_ll_eta(&data.y, &eta, alpha, c)
}

fn censored_negbin_ll_eta(y: &[u64], eta: &[f64], alpha: f64, c: u64) -> Result<f64> {
    let r = 1.0 / alpha;
    let mut ll = 0.0;
    for (yi, e) in y.iter().zip(eta) {
        let mu = exp(*e);
        if *yi < c {
            ll += negbin_ln_pmf(*yi, mu, r, alpha);
        } else {
            ll += negbin_tail(c, mu, r, alpha)?.ln_tail;
        }
    }
    Ok(ll)
}

/// Score of the censored negative binomial log-likelihood with respect to
/// `(beta, alpha)`.
pub fn censored_negbin_score(data: &Dataset, params: &[f64]) -> Result<Vec<f64>> {
    let c = require_censoring(data)?;
    let (beta, alpha) = split_negbin_params(data, params)?;
    let eta = crate::models::linear_predictor(&data.design, beta)?;
    let r = 1.0 / alpha;
    let mut g_eta = vec![0.0; data.n()];
    let mut dll_dr = 0.0;
    for i in 0..data.n() {
        let yi = data.y[i];
        let mu = exp(eta[i]);
        if yi < c {
            g_eta[i] = (yi as f64 - mu) * r / (r + mu);
            dll_dr += digamma_ratio(yi, r) + ln(r) - ln(r + mu) + (mu - yi as f64) / (r + mu);
        } else {
            let tail = negbin_tail(c, mu, r, alpha)?;
            g_eta[i] = tail.dll_deta;
            dll_dr += tail.dll_dr;
        }
    }
    let mut g = design_t_times(&data.design, &g_eta);
    g.push(-r * r * dll_dr);
    Ok(g)
}

fn require_censoring(data: &Dataset) -> Result<u64> {
    data.censor_at.ok_or_else(|| {
        Error::InvalidArgument(String::from(
            "censored-likelihood fit requires a censoring threshold on the dataset",
        ))
    })
}

fn design_t_times(design: &crate::models::DesignMatrix, g: &[f64]) -> Vec<f64> {
    let p = design.cols();
    let mut out = vec![0.0; p];
    for i in 0..design.rows() {
        let row = design.row(i);
        let gi = g[i];
        for j in 0..p {
            out[j] += gi * row[j];
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Scoring loop shared by the coefficient updates of every fitter
// ---------------------------------------------------------------------------

/// Per-observation quantities for one Newton/Fisher step on the
/// coefficients: log-likelihood at eta, d ll / d eta, and a positive
/// curvature weight.
struct BetaDerivs {
    ll: f64,
    g_eta: Vec<f64>,
    weight: Vec<f64>,
}

enum BetaObjective<'a> {
    Logistic { y: &'a [u64] },
    Poisson { y: &'a [u64], ln_fact: f64 },
    NegBin { y: &'a [u64], alpha: f64, gamma: Vec<f64> },
    CensoredPoisson { y: &'a [u64], c: u64 },
    CensoredNegBin { y: &'a [u64], alpha: f64, c: u64, gamma: Vec<f64> },
}

/// Per-observation `ln Gamma(y + r) - ln Gamma(r) - ln Gamma(y + 1)`,
/// fixed while the overdispersion is: cached so coefficient steps pay
/// only the mean-dependent part of the likelihood.
fn negbin_gamma_terms(y: &[u64], alpha: f64) -> Vec<f64> {
    let r = 1.0 / alpha;
    y.iter()
        .map(|&yi| lgamma_ratio(yi, r) - ln_gamma(yi as f64 + 1.0))
        .collect()
}

fn negbin_objective(y: &[u64], alpha: f64) -> BetaObjective<'_> {
    BetaObjective::NegBin { y, alpha, gamma: negbin_gamma_terms(y, alpha) }
}

fn censored_negbin_objective(y: &[u64], alpha: f64, c: u64) -> BetaObjective<'_> {
    BetaObjective::CensoredNegBin { y, alpha, c, gamma: negbin_gamma_terms(y, alpha) }
}

impl BetaObjective<'_> {
    fn loglik(&self, eta: &[f64]) -> Result<f64> {
        match self {
            BetaObjective::Logistic { y } => Ok(logistic_ll_eta(y, eta)),
            BetaObjective::Poisson { y, ln_fact } => Ok(poisson_ll_eta(y, eta, *ln_fact)),
            BetaObjective::NegBin { y, alpha, gamma } => {
                let r = 1.0 / alpha;
                let mut ll = 0.0;
                for ((yi, e), g) in y.iter().zip(eta).zip(gamma) {
                    let mu = exp(*e);
                    ll += g + r_ln_q(mu, *alpha) + *yi as f64 * (*e - ln(r + mu));
                }
                Ok(ll)
            }
            BetaObjective::CensoredPoisson { y, c } => censored_poisson_ll_eta(y, eta, *c),
            BetaObjective::CensoredNegBin { y, alpha, c, gamma } => {
                let r = 1.0 / alpha;
                let mut ll = 0.0;
                for ((yi, e), g) in y.iter().zip(eta).zip(gamma) {
                    let mu = exp(*e);
                    if *yi < *c {
                        ll += g + r_ln_q(mu, *alpha) + *yi as f64 * (*e - ln(r + mu));
                    } else {
                        ll += negbin_tail(*c, mu, r, *alpha)?.ln_tail;
                    }
                }
                Ok(ll)
            }
        }
    }

    fn derivs(&self, eta: &[f64]) -> Result<BetaDerivs> {
        let n = eta.len();
        let mut g_eta = vec![0.0; n];
        let mut weight = vec![0.0; n];
        let ll = self.loglik(eta)?;
        match self {
            BetaObjective::Logistic { y } => {
                for i in 0..n {
                    let mu = sigmoid(eta[i]);
                    g_eta[i] = y[i] as f64 - mu;
                    weight[i] = mu * (1.0 - mu);
                }
            }
            BetaObjective::Poisson { y, .. } => {
                for i in 0..n {
                    let mu = exp(eta[i]);
                    g_eta[i] = y[i] as f64 - mu;
                    weight[i] = mu;
                }
            }
            BetaObjective::NegBin { y, alpha, .. } => {
                let r = 1.0 / alpha;
                for i in 0..n {
                    let mu = exp(eta[i]);
                    let rm = r + mu;
                    g_eta[i] = (y[i] as f64 - mu) * r / rm;
                    // Observed information: nonnegative for every count,
                    // and exact curvature makes the step a true Newton
                    // step (expected information converges only linearly
                    // on overdispersed samples).
                    weight[i] = r * mu * (r + y[i] as f64) / (rm * rm);
                }
            }
            BetaObjective::CensoredPoisson { y, c } => {
                for i in 0..n {
                    let mu = exp(eta[i]);
                    if y[i] < *c {
                        g_eta[i] = y[i] as f64 - mu;
                        weight[i] = mu;
                    } else {
                        let tail = poisson_tail(*c, mu)?;
                        g_eta[i] = mu * tail.rho1;
                        // Observed information of the tail term.
                        let d2 = mu * tail.rho1
                            + mu * mu * (tail.rho2 - tail.rho1 - tail.rho1 * tail.rho1);
                        weight[i] = (-d2).max(0.0);
                    }
                }
            }
            BetaObjective::CensoredNegBin { y, alpha, c, .. } => {
                let r = 1.0 / alpha;
                for i in 0..n {
                    let mu = exp(eta[i]);
                    let rm = r + mu;
                    if y[i] < *c {
                        g_eta[i] = (y[i] as f64 - mu) * r / rm;
                        weight[i] = r * mu * (r + y[i] as f64) / (rm * rm);
                    } else {
                        g_eta[i] = negbin_tail(*c, mu, r, *alpha)?.dll_deta;
                        // Expected-information stand-in for the tail term;
                        // positive semidefinite, exact gradient above.
                        weight[i] = mu * r / rm;
                    }
                }
            }
        }
        Ok(BetaDerivs { ll, g_eta, weight })
    }
}

enum StepOutcome {
    /// Projected gradient is inside tolerance.
    Converged { grad_norm: f64 },
    /// Accepted an ascent step.
    Moved,
    /// No admissible ascent step exists (boundary or numerical flatness).
    Stuck { grad_norm: f64 },
    /// The likelihood is numerically flat along an unbounded ascent
    /// direction (separation-style divergence); the state was pushed along
    /// that direction onto the box.
    Diverged { grad_norm: f64 },
}

struct BetaState {
    beta: Vec<f64>,
    eta: Vec<f64>,
    ll: f64,
}

/// One safeguarded Fisher/Newton step on the coefficients, clamped to the
/// box. Mutates `state` in place when a step is accepted.
fn beta_step(
    data: &Dataset,
    obj: &BetaObjective<'_>,
    bounds_lo: &[f64],
    bounds_hi: &[f64],
    cfg: &FitConfig,
    state: &mut BetaState,
) -> Result<StepOutcome> {
    let p = data.design.cols();
    let n = data.n();
    BETA_STEP_COUNT.fetch_add(1, core::sync::atomic::Ordering::Relaxed);
    let d = obj.derivs(&state.eta)?;
    state.ll = d.ll;
    let grad = design_t_times(&data.design, &d.g_eta);
    let pg = projected_gradient(&grad, &state.beta, bounds_lo, bounds_hi);
    let pg_norm = l2_norm(&pg);
    let (a, rhs) = weighted_normal_equations(data.design.as_flat(), n, p, &d.weight, &d.g_eta);
    let step = solve_spd_regularized(&a, p, &rhs, cfg.ridge).ok_or_else(|| {
        Error::NumericFailure(String::from("normal equations could not be factorized"))
    })?;
    // A small gradient alone does not mean an optimum: on a separated
    // sample the likelihood plateaus and the gradient decays while the
    // Newton direction stays order one, walking the coefficient toward
    // the box. Converge only when the direction has collapsed too.
    let dir_norm = l2_norm(&step);
    let small_dir = 1e-4 * (1.0 + l2_norm(&state.beta));
    if pg_norm <= cfg.grad_tol && dir_norm <= small_dir {
        return Ok(StepOutcome::Converged { grad_norm: pg_norm });
    }
    let flat_tol = 1e-12 * (1.0 + state.ll.abs());
    let mut scale = 1.0;
    let mut saw_finite = false;
    for halving in 0..=cfg.step_halvings {
        let mut cand = state.beta.clone();
        for j in 0..p {
            cand[j] = (cand[j] + scale * step[j]).clamp(bounds_lo[j], bounds_hi[j]);
        }
        let eta = crate::models::linear_predictor(&data.design, &cand)?;
        LL_EVAL_COUNT.fetch_add(1, core::sync::atomic::Ordering::Relaxed);
        let ll = obj.loglik(&eta)?;
        if ll.is_finite() {
            saw_finite = true;
            // Tiny gradient, large direction, and a full step that no
            // longer moves the likelihood at float precision: the
            // estimate is running off to infinity. Pin it to the box and
            // flag it instead of creeping until the iteration cap.
            if halving == 0
                && pg_norm <= cfg.grad_tol
                && dir_norm > small_dir
                && (ll - state.ll).abs() <= flat_tol
            {
                let mut ray = state.beta.clone();
                for j in 0..p {
                    ray[j] = (ray[j] + 1e12 * step[j]).clamp(bounds_lo[j], bounds_hi[j]);
                }
                let ray_eta = crate::models::linear_predictor(&data.design, &ray)?;
                let ray_ll = obj.loglik(&ray_eta)?;
                if ray_ll.is_finite() && ray_ll >= state.ll - 1e-9 * (1.0 + state.ll.abs()) {
                    state.beta = ray;
                    state.eta = ray_eta;
                    state.ll = ray_ll;
                    return Ok(StepOutcome::Diverged { grad_norm: pg_norm });
                }
            }
            if ll >= state.ll - 1e-12 * (1.0 + state.ll.abs()) {
                let moved = cand
                    .iter()
                    .zip(&state.beta)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0_f64, f64::max);
                if moved <= 1e-15 * (1.0 + l2_norm(&state.beta)) {
                    return Ok(StepOutcome::Stuck { grad_norm: pg_norm });
                }
                state.beta = cand;
                state.eta = eta;
                state.ll = ll;
                return Ok(StepOutcome::Moved);
            }
        }
        scale *= 0.5;
    }
    if !saw_finite {
        return Err(Error::NumericFailure(String::from(
            "log-likelihood non-finite after exhausting step halvings",
        )));
    }
    Ok(StepOutcome::Stuck { grad_norm: pg_norm })
}

/// Zeroes gradient components that push against an active box face.
fn projected_gradient(g: &[f64], x: &[f64], lo: &[f64], hi: &[f64]) -> Vec<f64> {
    g.iter()
        .enumerate()
        .map(|(j, &gj)| {
            if (x[j] <= lo[j] && gj < 0.0) || (x[j] >= hi[j] && gj > 0.0) {
                0.0
            } else {
                gj
            }
        })
        .collect()
}

/// True when a coordinate sits on a box face that its gradient still pushes
/// against — the signature of separation-style divergence.
fn any_binding(g: &[f64], x: &[f64], lo: &[f64], hi: &[f64]) -> bool {
    g.iter()
        .enumerate()
        .any(|(j, &gj)| (x[j] <= lo[j] && gj < 0.0) || (x[j] >= hi[j] && gj > 0.0))
}

/// Ridge least squares on a link-transformed response; the standard robust
/// starting point for every fitter here.
fn initial_beta(data: &Dataset, lo: &[f64], hi: &[f64]) -> Vec<f64> {
    let p = data.design.cols();
    let n = data.n();
    let z: Vec<f64> = match data.kind {
        ResponseKind::Binary => data
            .y
            .iter()
            .map(|&yi| {
                let q = (yi as f64 + 0.5) / 2.0;
                ln(q / (1.0 - q))
            })
            .collect(),
        ResponseKind::Count => data.y.iter().map(|&yi| ln(yi as f64 + 0.5)).collect(),
    };
    let w = vec![1.0; n];
    let (mut a, rhs) = weighted_normal_equations(data.design.as_flat(), n, p, &w, &z);
    let mut trace = 0.0;
    for j in 0..p {
        trace += a[j * p + j];
    }
    let lambda = 1e-6 * (trace / p as f64).max(1e-6);
    for j in 0..p {
        a[j * p + j] += lambda;
    }
    let mut beta = match solve_spd_regularized(&a, p, &rhs, 0.0) {
        Some(b) => b,
        None => vec![0.0; p],
    };
    for j in 0..p {
        beta[j] = beta[j].clamp(lo[j], hi[j]);
    }
    beta
}

fn check_dims(data: &Dataset, bounds: &ParamBox, with_alpha: bool) -> Result<()> {
    let want = data.design.cols() + usize::from(with_alpha);
    if data.design.cols() == 0 {
        return Err(Error::InvalidArgument(String::from("design has no columns")));
    }
    if bounds.dim() != want {
        return Err(Error::InvalidArgument(format!(
            "box dimension {} does not match the {want} model parameters",
            bounds.dim()
        )));
    }
    Ok(())
}

/// Drives `beta_step` to convergence for the coefficient-only likelihoods.
fn maximize_beta(
    data: &Dataset,
    obj: &BetaObjective<'_>,
    bounds: &ParamBox,
    cfg: &FitConfig,
    start: Option<&[f64]>,
) -> Result<FitResult> {
    let lo = &bounds.lower()[..data.design.cols()];
    let hi = &bounds.upper()[..data.design.cols()];
    let beta = match start {
        Some(s) => {
            let mut b = s[..data.design.cols()].to_vec();
            for j in 0..b.len() {
                b[j] = b[j].clamp(lo[j], hi[j]);
            }
            b
        }
        None => initial_beta(data, lo, hi),
    };
    let eta = crate::models::linear_predictor(&data.design, &beta)?;
    let ll = obj.loglik(&eta)?;
    if !ll.is_finite() {
        return Err(Error::NumericFailure(String::from(
            "log-likelihood non-finite at the starting point",
        )));
    }
    let mut state = BetaState { beta, eta, ll };
    let mut iterations = 0;
    let mut converged = false;
    let mut grad_norm = f64::INFINITY;
    while iterations < cfg.max_iter {
        match beta_step(data, obj, lo, hi, cfg, &mut state)? {
            StepOutcome::Converged { grad_norm: gn } => {
                grad_norm = gn;
                converged = true;
                break;
            }
            StepOutcome::Moved => iterations += 1,
            StepOutcome::Stuck { grad_norm: gn } | StepOutcome::Diverged { grad_norm: gn } => {
                grad_norm = gn;
                break;
            }
        }
    }
    if converged {
        // Separation-style divergence pins a coefficient against the box
        // with the gradient still pushing outward; report it honestly.
        let d = obj.derivs(&state.eta)?;
        let grad = design_t_times(&data.design, &d.g_eta);
        if any_binding(&grad, &state.beta, lo, hi) {
            converged = false;
        }
    } else if grad_norm.is_infinite() {
        let d = obj.derivs(&state.eta)?;
        let grad = design_t_times(&data.design, &d.g_eta);
        grad_norm = l2_norm(&projected_gradient(&grad, &state.beta, lo, hi));
    }
    Ok(FitResult {
        params: ParamVec::new(state.beta),
        converged,
        iterations,
        loglik: state.ll,
        grad_norm,
    })
}

/// IRLS (Fisher scoring) maximum likelihood for the logistic regression.
pub fn fit_logistic_mle(data: &Dataset, bounds: &ParamBox, cfg: &FitConfig) -> Result<FitResult> {
    Fitter::LogisticMle.fit(data, bounds, cfg)
}

/// IRLS maximum likelihood for the Poisson regression. A censoring flag on
/// the data is deliberately ignored: this is the naive initial estimator.
pub fn fit_poisson_mle(data: &Dataset, bounds: &ParamBox, cfg: &FitConfig) -> Result<FitResult> {
    Fitter::PoissonMle.fit(data, bounds, cfg)
}

/// Newton maximum likelihood for the censored Poisson regression:
/// uncensored observations contribute the exact pmf, censored ones the
/// upper-tail probability.
pub fn fit_censored_poisson_mle(
    data: &Dataset,
    bounds: &ParamBox,
    cfg: &FitConfig,
) -> Result<FitResult> {
    Fitter::CensoredPoissonMle.fit(data, bounds, cfg)
}

// ---------------------------------------------------------------------------
// Negative binomial fitters: alternate coefficient scoring with a
// safeguarded Newton update of the overdispersion on the log scale.
// ---------------------------------------------------------------------------

/// Analytic second derivative of the log-likelihood in s = ln(alpha) at
/// fixed coefficients, available for the uncensored family only.
fn nb_alpha_curvature(y: &[u64], eta: &[f64], alpha: f64, c: Option<u64>) -> Option<f64> {
    if c.is_some() {
        return None;
    }
    let r = 1.0 / alpha;
    let mut dll_dr = 0.0;
    let mut d2ll_dr2 = 0.0;
    for (yi, e) in y.iter().zip(eta) {
        let mu = exp(*e);
        dll_dr += digamma_ratio(*yi, r) + ln(r) - ln(r + mu) + (mu - *yi as f64) / (r + mu);
        d2ll_dr2 += trigamma_ratio(*yi, r) + 1.0 / r - 1.0 / (r + mu)
            - (mu - *yi as f64) / ((r + mu) * (r + mu));
    }
    // s = ln alpha, r = e^{-s}: d/ds = -r d/dr.
    Some(r * dll_dr + r * r * d2ll_dr2)
}

/// Outcome of refitting the coefficients to convergence at a fixed
/// overdispersion.
enum BetaRefit {
    Clean,
    /// Separation-style boundary behavior; the state holds the projected
    /// point.
    Boundary,
}

fn refit_beta(
    data: &Dataset,
    obj: &BetaObjective<'_>,
    lo: &[f64],
    hi: &[f64],
    cfg: &FitConfig,
    state: &mut BetaState,
) -> Result<BetaRefit> {
    for _ in 0..cfg.max_iter {
        match beta_step(data, obj, lo, hi, cfg, state)? {
            StepOutcome::Moved => {}
            StepOutcome::Converged { .. } => return Ok(BetaRefit::Clean),
            StepOutcome::Stuck { .. } | StepOutcome::Diverged { .. } => {
                return Ok(BetaRefit::Boundary)
            }
        }
    }
    Ok(BetaRefit::Boundary)
}

/// Profile maximization for the negative binomial families: at every
/// overdispersion value the coefficients are refit to convergence, so the
/// overdispersion score at the refitted point is exactly the profile score
/// (envelope theorem). The overdispersion then moves by a safeguarded
/// secant/Newton step on that score, which is immune to the slow crawl of
/// plain coordinate alternation under strong coefficient-dispersion
/// coupling.
fn fit_negbin_family(
    data: &Dataset,
    bounds: &ParamBox,
    cfg: &FitConfig,
    c: Option<u64>,
    start: Option<&[f64]>,
) -> Result<FitResult> {
    if data.kind != ResponseKind::Count {
        return Err(Error::InvalidArgument(String::from(
            "negative binomial fit requires count responses",
        )));
    }
    check_dims(data, bounds, true)?;
    let p = data.design.cols();
    let lo = &bounds.lower()[..p];
    let hi = &bounds.upper()[..p];
    let (a_lo, a_hi) = (bounds.lower()[p], bounds.upper()[p]);

    let beta = match start {
        Some(s) => {
            let mut b = s[..p].to_vec();
            for j in 0..p {
                b[j] = b[j].clamp(lo[j], hi[j]);
            }
            b
        }
        None => initial_beta(data, lo, hi),
    };
    let eta = crate::models::linear_predictor(&data.design, &beta)?;
    let mut alpha = start.map(|s| s[p]).unwrap_or(0.5).clamp(a_lo, a_hi);
    let obj_for = |alpha: f64| match c {
        None => negbin_objective(&data.y, alpha),
        Some(c) => censored_negbin_objective(&data.y, alpha, c),
    };
    let ll = obj_for(alpha).loglik(&eta)?;
    if !ll.is_finite() {
        return Err(Error::NumericFailure(String::from(
            "log-likelihood non-finite at the starting point",
        )));
    }
    let mut state = BetaState { beta, eta, ll };
    let mut beta_clean = matches!(
        refit_beta(data, &obj_for(alpha), lo, hi, cfg, &mut state)?,
        BetaRefit::Clean
    );
    let mut outer = 0;
    let mut converged = false;
    let mut grad_norm = f64::INFINITY;
    // Previous (s, profile score) pair for the secant step.
    let mut prev: Option<(f64, f64)> = None;
    while outer < cfg.max_iter {
        outer += 1;
        let params = joined(&state.beta, alpha);
        let grad = match c {
            None => negbin_score(data, &params)?,
            Some(_) => censored_negbin_score(data, &params)?,
        };
        let pg = projected_gradient(&grad, &params, bounds.lower(), bounds.upper());
        grad_norm = l2_norm(&pg);
        if grad_norm <= cfg.grad_tol {
            // Binding on a coefficient means divergence; binding on the
            // overdispersion edge is a legitimate boundary solution.
            converged = beta_clean && !any_binding(&grad[..p], &state.beta, lo, hi);
            break;
        }
        // Profile score in s = ln(alpha): d ll / ds = alpha * d ll / d alpha.
        let s = ln(alpha);
        let g_s = alpha * grad[p];
        let mut delta = match prev {
            Some((s_prev, g_prev))
                if (g_s - g_prev).abs() > 1e-14 * (1.0 + g_s.abs()) && s != s_prev =>
            {
                let slope = (g_s - g_prev) / (s - s_prev);
                if slope < 0.0 {
                    -g_s / slope
                } else {
                    g_s.signum() * 0.5
                }
            }
            _ => match nb_alpha_curvature(&data.y, &state.eta, alpha, c) {
                Some(h) if h < -1e-12 => -g_s / h,
                _ => {
                    if g_s == 0.0 {
                        0.0
                    } else {
                        g_s.signum() * 0.5
                    }
                }
            },
        };
        delta = delta.clamp(-3.0, 3.0);
        prev = Some((s, g_s));
        // Halve on the fixed-coefficient likelihood, which lower-bounds
        // the profile, so accepted moves always ascend the profile too.
        let mut scale = 1.0;
        let mut alpha_new = alpha;
        for _ in 0..=cfg.step_halvings {
            let cand = exp(s + scale * delta).clamp(a_lo, a_hi);
            let ll_new = obj_for(cand).loglik(&state.eta)?;
            if ll_new.is_finite() && ll_new >= state.ll - 1e-12 * (1.0 + state.ll.abs()) {
                alpha_new = cand;
                state.ll = ll_new;
                break;
            }
            scale *= 0.5;
        }
        if alpha_new == alpha {
            // The dispersion cannot move (pinned at a box face or a zero
            // step); with the coefficients already refit, nothing would
            // change on another pass.
            break;
        }
        alpha = alpha_new;
        beta_clean = matches!(
            refit_beta(data, &obj_for(alpha), lo, hi, cfg, &mut state)?,
            BetaRefit::Clean
        );
    }
    Ok(FitResult {
        params: ParamVec::new(joined(&state.beta, alpha)),
        converged,
        iterations: outer,
        loglik: state.ll,
        grad_norm,
    })
}

fn joined(beta: &[f64], alpha: f64) -> Vec<f64> {
    let mut v = beta.to_vec();
    v.push(alpha);
    v
}

/// Alternating maximum likelihood for the negative binomial regression.
/// Ignores a censoring flag (naive initial estimator).
pub fn fit_negbin_mle(data: &Dataset, bounds: &ParamBox, cfg: &FitConfig) -> Result<FitResult> {
    fit_negbin_family(data, bounds, cfg, None, None)
}

/// Maximum likelihood for the censored negative binomial regression; the
/// censored terms use upper-tail sums with a 1e-12 remainder bound.
pub fn fit_censored_negbin_mle(
    data: &Dataset,
    bounds: &ParamBox,
    cfg: &FitConfig,
) -> Result<FitResult> {
    let c = require_censoring(data)?;
    fit_negbin_family(data, bounds, cfg, Some(c), None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crn::{CrnBank, RngStream};
    use crate::models::{gen_design, Dataset, DesignMatrix, DesignRecipe, ModelSpec, ParamVec};

    const LN3: f64 = 1.0986122886681098;

    fn binary(y: &[u64]) -> Dataset {
        Dataset::new(DesignMatrix::intercept_only(y.len()), y.to_vec(), ResponseKind::Binary, None)
            .unwrap()
    }

    fn counts(y: &[u64], censor_at: Option<u64>) -> Dataset {
        Dataset::new(
            DesignMatrix::intercept_only(y.len()),
            y.to_vec(),
            ResponseKind::Count,
            censor_at,
        )
        .unwrap()
    }

    fn beta_box(p: usize) -> ParamBox {
        ParamBox::symmetric(p, crate::models::BETA_BOUND)
    }

    fn nb_box(p: usize) -> ParamBox {
        ParamBox::with_overdispersion(p)
    }

    #[test]
    fn logistic_intercept_only_closed_forms() {
        let cfg = FitConfig::default();
        let even = fit_logistic_mle(&binary(&[0, 1, 0, 1]), &beta_box(1), &cfg).unwrap();
        assert!(even.converged);
        assert!(even.params[0].abs() < 1e-9, "got {}", even.params[0]);

        // logit(3/4) = ln 3.
        let skew = fit_logistic_mle(&binary(&[1, 1, 1, 0]), &beta_box(1), &cfg).unwrap();
        assert!(skew.converged);
        assert!((skew.params[0] - LN3).abs() < 1e-8, "got {}", skew.params[0]);
        assert!(skew.grad_norm <= cfg.grad_tol);
    }

    #[test]
    fn logistic_separation_lands_flagged_on_the_box() {
        let cfg = FitConfig::default();
        let fit = fit_logistic_mle(&binary(&[1, 1, 1, 1]), &beta_box(1), &cfg).unwrap();
        assert!(!fit.converged);
        assert_eq!(fit.params[0], crate::models::BETA_BOUND);
    }

    #[test]
    fn poisson_intercept_only_closed_forms() {
        let cfg = FitConfig::default();
        let fit = fit_poisson_mle(&counts(&[2, 4], None), &beta_box(1), &cfg).unwrap();
        assert!(fit.converged);
        assert!((fit.params[0] - LN3).abs() < 1e-9, "got {}", fit.params[0]);

        let zeros = fit_poisson_mle(&counts(&[0, 0, 0], None), &beta_box(1), &cfg).unwrap();
        assert!(!zeros.converged);
        assert_eq!(zeros.params[0], -crate::models::BETA_BOUND);
    }

    #[test]
    fn converged_poisson_fit_satisfies_the_first_order_condition() {
        let mut stream = RngStream::new(4);
        let design = gen_design(DesignRecipe::NbStyle, 80, 5, &mut stream).unwrap();
        let model = ModelSpec::poisson(design).unwrap();
        let theta = ParamVec::new(vec![0.8, 0.4, -0.5, 0.2, -0.1]);
        let bank = CrnBank::new(6, 1, 80).unwrap();
        let data = model.simulate(&theta, &bank, 0).unwrap();
        let cfg = FitConfig::default();
        let fit = fit_poisson_mle(&data, &beta_box(5), &cfg).unwrap();
        assert!(fit.converged);
        let score = poisson_score(&data, fit.params.as_slice()).unwrap();
        assert!(l2_norm(&score) <= cfg.grad_tol, "score norm {}", l2_norm(&score));
    }

    #[test]
    fn negbin_intercept_only_mean_matches_regardless_of_dispersion() {
        let cfg = FitConfig::default();
        let fit = fit_negbin_mle(&counts(&[2, 4], None), &nb_box(1), &cfg).unwrap();
        assert!((fit.params[0] - LN3).abs() < 1e-7, "got {}", fit.params[0]);
        // Profile grid over the dispersion confirms the mean coordinate
        // is flat: beta = ln(mean) maximizes at every alpha.
        for &alpha in &[0.05, 0.3, 1.0, 5.0] {
            let at = |b: f64| negbin_loglik(&counts(&[2, 4], None), &[b, alpha]).unwrap();
            assert!(at(LN3) >= at(LN3 + 0.05) && at(LN3) >= at(LN3 - 0.05));
        }
    }

    #[test]
    fn negbin_without_overdispersion_parks_dispersion_at_the_floor() {
        // Counts with variance at most the mean: the profile in alpha is
        // decreasing, so the fit sits at the lower box edge and still
        // reports success.
        let cfg = FitConfig::default();
        let flat = counts(&[3; 50], None);
        let fit = fit_negbin_mle(&flat, &nb_box(1), &cfg).unwrap();
        assert!(fit.converged, "boundary dispersion should still converge");
        assert_eq!(fit.params[1], crate::models::ALPHA_LOWER);
        assert!((fit.params[0] - LN3).abs() < 1e-7);
    }

    #[test]
    fn negbin_recovers_table2_parameters_at_large_n() {
        let n = 100_000;
        let p = 20;
        let mut stream = RngStream::new(12);
        let design = gen_design(DesignRecipe::NbStyle, n, p, &mut stream).unwrap();
        let model = ModelSpec::negbin(design).unwrap();
        let mut theta = vec![0.0; p + 1];
        theta[0] = 1.5;
        theta[1] = 2.5;
        theta[2] = -2.5;
        theta[p] = 0.6;
        let bank = CrnBank::new(77, 1, n).unwrap();
        let data = model.simulate(&ParamVec::new(theta.clone()), &bank, 0).unwrap();
        let fit = fit_negbin_mle(&data, &nb_box(p), &FitConfig::default()).unwrap();
        assert!(fit.converged);
        // The first three coefficients and the overdispersion gain
        // information with n; the zero block does not (its covariate
        // variance is 16/n by construction, so its Fisher information is
        // O(1) at any n) and is held to three standard errors instead.
        for j in 0..3 {
            assert!(
                (fit.params[j] - theta[j]).abs() < 0.02,
                "beta[{j}] = {} vs {}",
                fit.params[j],
                theta[j]
            );
        }
        for j in 3..p {
            assert!(
                (fit.params[j] - theta[j]).abs() < 0.75,
                "beta[{j}] = {} vs {}",
                fit.params[j],
                theta[j]
            );
        }
        assert!((fit.params[p] - 0.6).abs() < 0.05, "alpha = {}", fit.params[p]);
    }

    #[test]
    fn censored_poisson_reduces_to_poisson_without_censored_rows() {
        let mut stream = RngStream::new(9);
        let design = gen_design(DesignRecipe::NbStyle, 60, 4, &mut stream).unwrap();
        let model = ModelSpec::poisson(design.clone()).unwrap();
        let bank = CrnBank::new(14, 1, 60).unwrap();
        let mut data = model
            .simulate(&ParamVec::new(vec![0.6, 0.3, -0.4, 0.2]), &bank, 0)
            .unwrap();
        // Threshold far above every observed count.
        let c = data.y.iter().max().unwrap() + 50;
        data.censor_at = Some(c);
        let mut cfg = FitConfig::default();
        cfg.grad_tol = 1e-10;
        let plain = fit_poisson_mle(&data, &beta_box(4), &cfg).unwrap();
        let cens = fit_censored_poisson_mle(&data, &beta_box(4), &cfg).unwrap();
        let dist = plain.params.l2_distance(&cens.params);
        assert!(dist <= 1e-8, "fits differ by {dist}");
    }

    #[test]
    fn censored_poisson_matches_the_analytic_toy_solution() {
        // ll = 2 ln P(Y >= 1) + ln P(Y = 0) is maximized at mean ln 3,
        // so the log-link coefficient is ln(ln 3).
        let cfg = FitConfig::default();
        let data = counts(&[1, 1, 0], Some(1));
        let fit = fit_censored_poisson_mle(&data, &beta_box(1), &cfg).unwrap();
        assert!(fit.converged);
        assert!(
            (exp(fit.params[0]) - LN3).abs() < 1e-8,
            "mean {} vs ln 3",
            exp(fit.params[0])
        );
        // One-dimensional grid oracle around the solution.
        let ll = |b: f64| censored_poisson_loglik(&data, &[b]).unwrap();
        let best = fit.params[0];
        for k in 1..=40 {
            let off = k as f64 * 0.05;
            assert!(ll(best) >= ll(best - off));
            assert!(ll(best) >= ll(best + off));
        }
    }

    #[test]
    fn censored_poisson_recovers_table8_parameters_at_large_n() {
        let n = 10_000;
        let p = 50;
        let mut stream = RngStream::new(16);
        let design = gen_design(DesignRecipe::NbStyle, n, p, &mut stream).unwrap();
        let model = ModelSpec::poisson_censored(design, 5).unwrap();
        let mut theta = vec![0.0; p];
        theta[0] = 0.5;
        theta[1] = 0.8;
        theta[2] = -0.4;
        let bank = CrnBank::new(23, 1, n).unwrap();
        let data = model.simulate(&ParamVec::new(theta.clone()), &bank, 0).unwrap();
        assert!(data.y.iter().filter(|&&v| v == 5).count() > 0);
        let fit = fit_censored_poisson_mle(&data, &beta_box(p), &FitConfig::default()).unwrap();
        assert!(fit.converged);
        for j in 0..3 {
            assert!(
                (fit.params[j] - theta[j]).abs() < 0.05,
                "beta[{j}] = {} vs {}",
                fit.params[j],
                theta[j]
            );
        }
    }

    #[test]
    fn censored_negbin_reduces_to_negbin_without_censored_rows() {
        let mut stream = RngStream::new(19);
        let design = gen_design(DesignRecipe::NbStyle, 80, 4, &mut stream).unwrap();
        let model = ModelSpec::negbin(design).unwrap();
        let bank = CrnBank::new(3, 1, 80).unwrap();
        let mut data = model
            .simulate(&ParamVec::new(vec![0.8, 0.3, -0.2, 0.1, 0.5]), &bank, 0)
            .unwrap();
        let c = data.y.iter().max().unwrap() + 40;
        data.censor_at = Some(c);
        let mut cfg = FitConfig::default();
        cfg.grad_tol = 1e-9;
        let plain = fit_negbin_mle(&data, &nb_box(4), &cfg).unwrap();
        let cens = fit_censored_negbin_mle(&data, &nb_box(4), &cfg).unwrap();
        for j in 0..5 {
            assert!(
                (plain.params[j] - cens.params[j]).abs() <= 1e-6,
                "coordinate {j}: {} vs {}",
                plain.params[j],
                cens.params[j]
            );
        }
    }

    #[test]
    fn censored_negbin_recovers_table3_parameters_at_large_n() {
        let n = 10_000;
        let p = 20;
        let mut stream = RngStream::new(25);
        let design = gen_design(DesignRecipe::NbStyle, n, p, &mut stream).unwrap();
        let model = ModelSpec::negbin_censored(design, 30).unwrap();
        let mut theta = vec![0.0; p + 1];
        theta[0] = 1.5;
        theta[1] = 2.5;
        theta[2] = -2.5;
        theta[p] = 0.6;
        let bank = CrnBank::new(41, 1, n).unwrap();
        let data = model.simulate(&ParamVec::new(theta.clone()), &bank, 0).unwrap();
        let frac_censored =
            data.y.iter().filter(|&&v| v == 30).count() as f64 / n as f64;
        assert!(frac_censored > 0.05, "censoring fraction {frac_censored}");
        let fit = fit_censored_negbin_mle(&data, &nb_box(p), &FitConfig::default()).unwrap();
        assert!(fit.converged);
        // As in the uncensored study, the zero block keeps O(1) Fisher
        // information at every n (and censoring inflates it further);
        // hold it to a coarse sanity band only.
        for j in 0..3 {
            assert!(
                (fit.params[j] - theta[j]).abs() < 0.1,
                "beta[{j}] = {} vs {}",
                fit.params[j],
                theta[j]
            );
        }
        for j in 3..p {
            assert!(
                (fit.params[j] - theta[j]).abs() < 1.0,
                "beta[{j}] = {} vs {}",
                fit.params[j],
                theta[j]
            );
        }
        assert!((fit.params[p] - 0.6).abs() < 0.1, "alpha = {}", fit.params[p]);
    }

    #[test]
    fn censored_negbin_handles_a_single_censored_observation() {
        let data = counts(&[3, 1, 4, 2, 50], Some(50));
        let fit = fit_censored_negbin_mle(&data, &nb_box(1), &FitConfig::default()).unwrap();
        assert!(fit.params.is_finite());
        let ll = censored_negbin_loglik(&data, fit.params.as_slice()).unwrap();
        assert!(ll.is_finite() && ll < 0.0);
    }

    fn central_diff(f: impl Fn(&[f64]) -> f64, at: &[f64], j: usize) -> f64 {
        let h = 1e-5 * (1.0 + at[j].abs());
        let mut hi = at.to_vec();
        let mut lo = at.to_vec();
        hi[j] += h;
        lo[j] -= h;
        (f(&hi) - f(&lo)) / (2.0 * h)
    }

    fn assert_score_matches_fd(
        name: &str,
        ll: impl Fn(&[f64]) -> f64,
        score: &[f64],
        at: &[f64],
    ) {
        for j in 0..at.len() {
            let fd = central_diff(&ll, at, j);
            let tol = 1e-5 * (1.0 + fd.abs());
            assert!(
                (score[j] - fd).abs() <= tol,
                "{name} coordinate {j}: analytic {} vs fd {fd}",
                score[j]
            );
        }
    }

    #[test]
    fn scores_match_finite_differences_on_random_points() {
        let mut stream = RngStream::new(33);
        let design = gen_design(DesignRecipe::NbStyle, 50, 4, &mut stream).unwrap();
        let bin = ModelSpec::logistic(design.clone()).unwrap();
        let cnt = ModelSpec::poisson(design.clone()).unwrap();
        let bank = CrnBank::new(51, 2, 50).unwrap();
        let bdata = bin.simulate(&ParamVec::new(vec![0.3, -0.2, 0.5, 0.1]), &bank, 0).unwrap();
        let mut cdata = cnt.simulate(&ParamVec::new(vec![0.7, 0.2, -0.3, 0.0]), &bank, 1).unwrap();
        cdata.censor_at = Some(4);
        for v in &mut cdata.y {
            *v = (*v).min(4);
        }
        let mut point_stream = RngStream::new(8);
        for _ in 0..6 {
            let at: Vec<f64> =
                (0..4).map(|_| point_stream.normal(0.0, 0.4).unwrap()).collect();
            assert_score_matches_fd(
                "logistic",
                |b| logistic_loglik(&bdata, b).unwrap(),
                &logistic_score(&bdata, &at).unwrap(),
                &at,
            );
            assert_score_matches_fd(
                "poisson",
                |b| poisson_loglik(&cdata, b).unwrap(),
                &poisson_score(&cdata, &at).unwrap(),
                &at,
            );
            assert_score_matches_fd(
                "censored poisson",
                |b| censored_poisson_loglik(&cdata, b).unwrap(),
                &censored_poisson_score(&cdata, &at).unwrap(),
                &at,
            );
            let mut nb_at = at.clone();
            nb_at.push(0.2 + point_stream.uniform());
            assert_score_matches_fd(
                "negbin",
                |p| negbin_loglik(&cdata, p).unwrap(),
                &negbin_score(&cdata, &nb_at).unwrap(),
                &nb_at,
            );
            assert_score_matches_fd(
                "censored negbin",
                |p| censored_negbin_loglik(&cdata, p).unwrap(),
                &censored_negbin_score(&cdata, &nb_at).unwrap(),
                &nb_at,
            );
        }
    }

    #[test]
    fn fits_never_decrease_the_likelihood_from_the_start() {
        let mut stream = RngStream::new(62);
        let design = gen_design(DesignRecipe::NbStyle, 70, 5, &mut stream).unwrap();
        let model = ModelSpec::negbin(design.clone()).unwrap();
        let bank = CrnBank::new(71, 3, 70).unwrap();
        for h in 0..3 {
            let data = model
                .simulate(&ParamVec::new(vec![0.9, 0.4, -0.5, 0.1, 0.0, 0.8]), &bank, h)
                .unwrap();
            let fit = fit_negbin_mle(&data, &nb_box(5), &FitConfig::default()).unwrap();
            let bounds = nb_box(5);
            let start = initial_beta(&data, &bounds.lower()[..5], &bounds.upper()[..5]);
            let mut start_params = start.clone();
            start_params.push(0.5);
            let ll0 = negbin_loglik(&data, &start_params).unwrap();
            assert!(fit.loglik >= ll0 - 1e-9, "ll {} below start {ll0}", fit.loglik);
        }
    }

    #[test]
    fn fitters_validate_inputs() {
        let cfg = FitConfig::default();
        let bdata = binary(&[0, 1]);
        assert!(fit_poisson_mle(&bdata, &beta_box(1), &cfg).is_err());
        let cdata = counts(&[1, 2], None);
        assert!(fit_logistic_mle(&cdata, &beta_box(1), &cfg).is_err());
        assert!(fit_censored_poisson_mle(&cdata, &beta_box(1), &cfg).is_err());
        assert!(fit_logistic_mle(&binary(&[0, 1]), &beta_box(2), &cfg).is_err());
    }
}
