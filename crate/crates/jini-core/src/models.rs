//! Parametric model definitions and their simulators.
//!
//! A [`ModelSpec`] couples a fixed design matrix with a response family and
//! owns the compact parameter box that the solver projects onto. Simulation
//! draws a full response vector from one row of a [`CrnBank`], so the same
//! bank row always maps a parameter value to the same dataset.

use crate::crn::{bernoulli_quantile, negbin_quantile, poisson_quantile, CrnBank, RngStream};
use crate::math::{exp, probit, sigmoid, sqrt};
use crate::{Error, Result};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

/// Largest simulated mean accepted by the count simulators. Beyond this the
/// quantile scan would approach the support cap, so the simulator reports
/// an overflow instead.
pub const SIMULATION_MEAN_CAP: f64 = 1e6;

/// A point in the parameter space. For negative binomial models the last
/// coordinate is the overdispersion on its natural scale.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVec {
    values: Vec<f64>,
}

impl ParamVec {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn l2_distance(&self, other: &ParamVec) -> f64 {
        let mut s = 0.0;
        for (a, b) in self.values.iter().zip(&other.values) {
            let d = a - b;
            s += d * d;
        }
        sqrt(s)
    }
}

impl From<Vec<f64>> for ParamVec {
    fn from(values: Vec<f64>) -> Self {
        ParamVec::new(values)
    }
}

impl core::ops::Index<usize> for ParamVec {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}

/// Box bounds realizing the compact parameter space: coordinate-wise
/// `lower <= theta <= upper`, with Euclidean projection being the
/// coordinate-wise clamp.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

/// Default bounds for regression coefficients.
pub const BETA_BOUND: f64 = 50.0;
/// Default bounds for the negative binomial overdispersion coordinate.
pub const ALPHA_LOWER: f64 = 1e-4;
pub const ALPHA_UPPER: f64 = 1e2;

impl ParamBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::InvalidArgument(String::from(
                "box bounds must have matching lengths",
            )));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l < u)) {
            return Err(Error::InvalidArgument(String::from(
                "box requires lower < upper in every coordinate",
            )));
        }
        Ok(Self { lower, upper })
    }

    /// Symmetric coefficient box of the given dimension.
    pub fn symmetric(dim: usize, bound: f64) -> Self {
        Self {
            lower: vec![-bound; dim],
            upper: vec![bound; dim],
        }
    }

    /// Coefficient box with a positive overdispersion coordinate appended.
    pub fn with_overdispersion(p: usize) -> Self {
        let mut lower = vec![-BETA_BOUND; p];
        let mut upper = vec![BETA_BOUND; p];
        lower.push(ALPHA_LOWER);
        upper.push(ALPHA_UPPER);
        Self { lower, upper }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.dim()
            && theta
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(t, (l, u))| *t >= *l && *t <= *u)
    }

    pub fn clamp_in_place(&self, theta: &mut [f64]) {
        for (t, (l, u)) in theta.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *t = t.clamp(*l, *u);
        }
    }

    pub fn project(&self, theta: &ParamVec) -> ParamVec {
        let mut v = theta.as_slice().to_vec();
        self.clamp_in_place(&mut v);
        ParamVec::new(v)
    }
}

/// Fixed covariates, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    n: usize,
    p: usize,
    x: Vec<f64>,
}

impl DesignMatrix {
    pub fn from_flat(n: usize, p: usize, x: Vec<f64>) -> Result<Self> {
        if x.len() != n * p {
            return Err(Error::InvalidArgument(format!(
                "design storage is {} values, expected {n} x {p}",
                x.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(String::from(
                "design entries must be finite",
            )));
        }
        Ok(Self { n, p, x })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::InvalidArgument(String::from(
                "design rows must have equal lengths",
            )));
        }
        let mut x = Vec::with_capacity(n * p);
        for r in rows {
            x.extend_from_slice(r);
        }
        Self::from_flat(n, p, x)
    }

    /// An n-row design with no columns; placeholder for the synthetic
    /// pseudo-model, which has no data space.
    pub fn empty(n: usize) -> Self {
        Self { n, p: 0, x: Vec::new() }
    }

    /// Intercept-only design.
    pub fn intercept_only(n: usize) -> Self {
        Self { n, p: 1, x: vec![1.0; n] }
    }

    pub fn rows(&self) -> usize {
        self.n
    }

    pub fn cols(&self) -> usize {
        self.p
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.x
    }
}

/// Response kind carried by a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResponseKind {
    Binary,
    Count,
}

/// A design matrix with its integer response vector and, for censored
/// families, the known censoring threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub design: DesignMatrix,
    pub y: Vec<u64>,
    pub kind: ResponseKind,
    pub censor_at: Option<u64>,
}

impl Dataset {
    pub fn new(
        design: DesignMatrix,
        y: Vec<u64>,
        kind: ResponseKind,
        censor_at: Option<u64>,
    ) -> Result<Self> {
        if y.len() != design.rows() {
            return Err(Error::InvalidArgument(format!(
                "response length {} does not match {} design rows",
                y.len(),
                design.rows()
            )));
        }
        if y.is_empty() {
            return Err(Error::InvalidArgument(String::from("dataset is empty")));
        }
        if kind == ResponseKind::Binary && y.iter().any(|&v| v > 1) {
            return Err(Error::InvalidArgument(String::from(
                "binary responses must lie in {0, 1}",
            )));
        }
        if let Some(c) = censor_at {
            if c == 0 {
                return Err(Error::InvalidArgument(String::from(
                    "censoring threshold must be positive",
                )));
            }
            if y.iter().any(|&v| v > c) {
                return Err(Error::InvalidArgument(format!(
                    "responses exceed the censoring threshold {c}"
                )));
            }
        }
        Ok(Self { design, y, kind, censor_at })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }
}

/// Per-observation misclassification rates, drawn once at model
/// construction and held fixed for the whole solver run.
#[derive(Debug, Clone, PartialEq)]
pub struct MisclassLatents {
    /// False-positive rate per observation.
    pub false_pos: Vec<f64>,
    /// False-negative rate per observation.
    pub false_neg: Vec<f64>,
}

impl MisclassLatents {
    pub fn new(false_pos: Vec<f64>, false_neg: Vec<f64>) -> Result<Self> {
        if false_pos.len() != false_neg.len() {
            return Err(Error::InvalidArgument(String::from(
                "misclassification rate vectors must have matching lengths",
            )));
        }
        let in_unit = |v: &f64| (0.0..=1.0).contains(v);
        if !false_pos.iter().all(in_unit) || !false_neg.iter().all(in_unit) {
            return Err(Error::InvalidArgument(String::from(
                "misclassification rates must lie in [0, 1]",
            )));
        }
        Ok(Self { false_pos, false_neg })
    }

    /// Draws the per-observation rates from Beta distributions; the draw
    /// happens exactly once here and the latents never change afterwards.
    pub fn sample(
        n: usize,
        fp_shape: (f64, f64),
        fn_shape: (f64, f64),
        stream: &mut RngStream,
    ) -> Result<Self> {
        let mut false_pos = Vec::with_capacity(n);
        let mut false_neg = Vec::with_capacity(n);
        for _ in 0..n {
            false_pos.push(stream.beta(fp_shape.0, fp_shape.1)?);
        }
        for _ in 0..n {
            false_neg.push(stream.beta(fn_shape.0, fn_shape.1)?);
        }
        Ok(Self { false_pos, false_neg })
    }

    pub fn len(&self) -> usize {
        self.false_pos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.false_pos.is_empty()
    }
}

/// Linear finite-sample bias `B theta + c` plus optional Gaussian noise:
/// the synthetic pseudo-model whose corrected estimator is known exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticBias {
    /// Bias slope, row-major p x p.
    pub slope: Vec<f64>,
    /// Bias offset, length p.
    pub offset: Vec<f64>,
    pub noise_sd: f64,
}

impl SyntheticBias {
    pub fn new(slope: Vec<f64>, offset: Vec<f64>, noise_sd: f64) -> Result<Self> {
        let p = offset.len();
        if slope.len() != p * p {
            return Err(Error::InvalidArgument(format!(
                "bias slope is {} values, expected {p} x {p}",
                slope.len()
            )));
        }
        if !(noise_sd >= 0.0) {
            return Err(Error::InvalidArgument(String::from(
                "noise standard deviation must be non-negative",
            )));
        }
        Ok(Self { slope, offset, noise_sd })
    }

    pub fn dim(&self) -> usize {
        self.offset.len()
    }

    /// The bias value `B theta + c`.
    pub fn bias_at(&self, theta: &[f64]) -> Vec<f64> {
        let p = self.dim();
        let mut out = self.offset.clone();
        for i in 0..p {
            let row = &self.slope[i * p..(i + 1) * p];
            for (j, t) in theta.iter().enumerate() {
                out[i] += row[j] * t;
            }
        }
        out
    }
}

/// Response families with simulators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelFamily {
    Logistic,
    LogisticMisclassified,
    Poisson,
    PoissonCensored,
    NegBin,
    NegBinCensored,
    SyntheticLinearBias,
}

impl ModelFamily {
    pub fn is_censored(&self) -> bool {
        matches!(self, ModelFamily::PoissonCensored | ModelFamily::NegBinCensored)
    }

    pub fn is_negbin(&self) -> bool {
        matches!(self, ModelFamily::NegBin | ModelFamily::NegBinCensored)
    }

    pub fn response_kind(&self) -> ResponseKind {
        match self {
            ModelFamily::Logistic | ModelFamily::LogisticMisclassified => ResponseKind::Binary,
            _ => ResponseKind::Count,
        }
    }
}

/// A simulable parametric model: family, fixed design, the family's extra
/// state, and the parameter box.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub family: ModelFamily,
    pub design: DesignMatrix,
    pub censor_at: Option<u64>,
    pub misclass: Option<MisclassLatents>,
    pub synthetic: Option<SyntheticBias>,
    pub bounds: ParamBox,
}

impl ModelSpec {
    pub fn new(
        family: ModelFamily,
        design: DesignMatrix,
        censor_at: Option<u64>,
        misclass: Option<MisclassLatents>,
        synthetic: Option<SyntheticBias>,
    ) -> Result<Self> {
        if family.is_censored() != censor_at.is_some() {
            return Err(Error::InvalidArgument(String::from(
                "censoring threshold is required exactly for censored families",
            )));
        }
        if (family == ModelFamily::LogisticMisclassified) != misclass.is_some() {
            return Err(Error::InvalidArgument(String::from(
                "misclassification latents are required exactly for the misclassified family",
            )));
        }
        if (family == ModelFamily::SyntheticLinearBias) != synthetic.is_some() {
            return Err(Error::InvalidArgument(String::from(
                "synthetic bias specification is required exactly for the synthetic family",
            )));
        }
        if let Some(lat) = &misclass {
            if lat.len() != design.rows() {
                return Err(Error::InvalidArgument(String::from(
                    "misclassification latents must have one entry per observation",
                )));
            }
        }
        let bounds = match (&synthetic, family.is_negbin()) {
            (Some(s), _) => ParamBox::symmetric(s.dim(), BETA_BOUND),
            (None, true) => ParamBox::with_overdispersion(design.cols()),
            (None, false) => ParamBox::symmetric(design.cols(), BETA_BOUND),
        };
        Ok(Self { family, design, censor_at, misclass, synthetic, bounds })
    }

    pub fn logistic(design: DesignMatrix) -> Result<Self> {
        Self::new(ModelFamily::Logistic, design, None, None, None)
    }

    pub fn logistic_misclassified(design: DesignMatrix, latents: MisclassLatents) -> Result<Self> {
        Self::new(ModelFamily::LogisticMisclassified, design, None, Some(latents), None)
    }

    pub fn poisson(design: DesignMatrix) -> Result<Self> {
        Self::new(ModelFamily::Poisson, design, None, None, None)
    }

    pub fn poisson_censored(design: DesignMatrix, c: u64) -> Result<Self> {
        Self::new(ModelFamily::PoissonCensored, design, Some(c), None, None)
    }

    pub fn negbin(design: DesignMatrix) -> Result<Self> {
        Self::new(ModelFamily::NegBin, design, None, None, None)
    }

    pub fn negbin_censored(design: DesignMatrix, c: u64) -> Result<Self> {
        Self::new(ModelFamily::NegBinCensored, design, Some(c), None, None)
    }

    pub fn synthetic(spec: SyntheticBias) -> Result<Self> {
        let n = spec.dim();
        Self::new(
            ModelFamily::SyntheticLinearBias,
            DesignMatrix::empty(n),
            None,
            None,
            Some(spec),
        )
    }

    /// Replaces the default parameter box.
    pub fn with_bounds(mut self, bounds: ParamBox) -> Result<Self> {
        if bounds.dim() != self.dim() {
            return Err(Error::InvalidArgument(String::from(
                "box dimension does not match the parameter dimension",
            )));
        }
        self.bounds = bounds;
        Ok(self)
    }

    /// Sample size of the model's data space (for the synthetic family,
    /// the bank width consumed per sample).
    pub fn n(&self) -> usize {
        self.design.rows()
    }

    /// Parameter dimension: the coefficient count, plus one for the
    /// overdispersion coordinate of negative binomial families.
    pub fn dim(&self) -> usize {
        match self.family {
            ModelFamily::SyntheticLinearBias => {
                self.synthetic.as_ref().map_or(0, SyntheticBias::dim)
            }
            f if f.is_negbin() => self.design.cols() + 1,
            _ => self.design.cols(),
        }
    }

    /// Simulates the response vector for parameter `theta` from row `h` of
    /// the bank. Identical `(theta, bank, h)` always yields an identical
    /// dataset.
    pub fn simulate(&self, theta: &ParamVec, bank: &CrnBank, h: usize) -> Result<Dataset> {
        if self.family == ModelFamily::SyntheticLinearBias {
            return Err(Error::InvalidArgument(String::from(
                "the synthetic pseudo-model has no data-space simulator",
            )));
        }
        if h >= bank.rows() {
            return Err(Error::InvalidArgument(format!(
                "bank row {h} out of range (H = {})",
                bank.rows()
            )));
        }
        let n = self.n();
        if bank.cols() < n {
            return Err(Error::InvalidArgument(format!(
                "bank width {} is smaller than the sample size {n}",
                bank.cols()
            )));
        }
        if theta.len() != self.dim() {
            return Err(Error::InvalidArgument(format!(
                "theta has {} coordinates, model needs {}",
                theta.len(),
                self.dim()
            )));
        }
        let p = self.design.cols();
        let beta = &theta.as_slice()[..p];
        let u = bank.row(h);
        let eta = linear_predictor(&self.design, beta)?;
        let mut y = Vec::with_capacity(n);
        match self.family {
            ModelFamily::Logistic => {
                for i in 0..n {
                    y.push(bernoulli_quantile(u[i], sigmoid(eta[i]))?);
                }
            }
            ModelFamily::LogisticMisclassified => {
                let lat = self.misclass.as_ref().expect("validated at construction");
                let mu = mean_logistic(&eta);
                let mu_star = mean_misclassified(&mu, lat)?;
                for i in 0..n {
                    y.push(bernoulli_quantile(u[i], mu_star[i])?);
                }
            }
            ModelFamily::Poisson | ModelFamily::PoissonCensored => {
                for i in 0..n {
                    let mu = exp(eta[i]);
                    y.push(count_draw(u[i], mu, None, i)?);
                }
            }
            ModelFamily::NegBin | ModelFamily::NegBinCensored => {
                let alpha = theta[p];
                if !(alpha > 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "overdispersion must be positive, got {alpha}"
                    )));
                }
                for i in 0..n {
                    let mu = exp(eta[i]);
                    y.push(count_draw(u[i], mu, Some(alpha), i)?);
                }
            }
            ModelFamily::SyntheticLinearBias => unreachable!(),
        }
        if let Some(c) = self.censor_at {
            for v in &mut y {
                *v = (*v).min(c);
            }
        }
        Dataset::new(self.design.clone(), y, self.family.response_kind(), self.censor_at)
    }
}

fn count_draw(u: f64, mu: f64, alpha: Option<f64>, index: usize) -> Result<u64> {
    if !mu.is_finite() || mu > SIMULATION_MEAN_CAP {
        return Err(Error::SimulationOverflow { index });
    }
    let q = match alpha {
        None => poisson_quantile(u, mu),
        Some(a) => negbin_quantile(u, mu, a),
    };
    match q {
        Ok(v) => Ok(v),
        Err(Error::SupportCapExceeded { .. }) => Err(Error::SimulationOverflow { index }),
        Err(e) => Err(e),
    }
}

/// Row-wise inner products `x_i . beta`.
pub fn linear_predictor(design: &DesignMatrix, beta: &[f64]) -> Result<Vec<f64>> {
    if beta.len() != design.cols() {
        return Err(Error::InvalidArgument(format!(
            "coefficient length {} does not match {} design columns",
            beta.len(),
            design.cols()
        )));
    }
    let mut eta = Vec::with_capacity(design.rows());
    for i in 0..design.rows() {
        eta.push(crate::linalg::dot(design.row(i), beta));
    }
    Ok(eta)
}

/// Componentwise overflow-safe logistic mean.
pub fn mean_logistic(eta: &[f64]) -> Vec<f64> {
    eta.iter().map(|&e| sigmoid(e)).collect()
}

/// Success probability of the observed (misclassified) response:
/// `fp * (1 - mu) + (1 - fn) * mu` per observation.
pub fn mean_misclassified(mu: &[f64], latents: &MisclassLatents) -> Result<Vec<f64>> {
    if mu.len() != latents.len() {
        return Err(Error::InvalidArgument(format!(
            "mean length {} does not match {} latent entries",
            mu.len(),
            latents.len()
        )));
    }
    Ok(mu
        .iter()
        .zip(latents.false_pos.iter().zip(&latents.false_neg))
        .map(|(&m, (&fp, &fnr))| fp * (1.0 - m) + (1.0 - fnr) * m)
        .collect())
}

/// Design-matrix recipes used by the built-in studies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DesignRecipe {
    /// Intercept, one standard normal column, a dummy column with the
    /// first half zeros, then N(0, 4^2/n) columns.
    NbStyle,
    /// Every entry N(0, 4^2/n).
    LogisticI,
    /// Every entry N(0.6, 4^2/n).
    LogisticII,
}

/// Generates a design matrix; deterministic in `(recipe, n, p, stream)`.
pub fn gen_design(
    recipe: DesignRecipe,
    n: usize,
    p: usize,
    stream: &mut RngStream,
) -> Result<DesignMatrix> {
    if n == 0 || p == 0 {
        return Err(Error::InvalidArgument(String::from(
            "design dimensions must be positive",
        )));
    }
    let mut x = vec![0.0; n * p];
    match recipe {
        DesignRecipe::NbStyle => {
            if p < 3 {
                return Err(Error::InvalidArgument(format!(
                    "the intercept/normal/dummy recipe needs p >= 3, got {p}"
                )));
            }
            let sd_tail = 4.0 / sqrt(n as f64);
            for i in 0..n {
                x[i * p] = 1.0;
            }
            for i in 0..n {
                x[i * p + 1] = stream.normal(0.0, 1.0)?;
            }
            // First half zeros; odd n puts the extra observation in the
            // zero block.
            let zeros = n.div_ceil(2);
            for i in zeros..n {
                x[i * p + 2] = 1.0;
            }
            for j in 3..p {
                for i in 0..n {
                    x[i * p + j] = stream.normal(0.0, sd_tail)?;
                }
            }
        }
        DesignRecipe::LogisticI | DesignRecipe::LogisticII => {
            let mean = if recipe == DesignRecipe::LogisticII { 0.6 } else { 0.0 };
            let sd = 4.0 / sqrt(n as f64);
            for j in 0..p {
                for i in 0..n {
                    x[i * p + j] = stream.normal(mean, sd)?;
                }
            }
        }
    }
    DesignMatrix::from_flat(n, p, x)
}

/// The synthetic pseudo-model's initial estimator: `theta + B theta + c`
/// plus noise inverted from the first `p` entries of the bank row.
pub fn synthetic_initial(spec: &SyntheticBias, theta: &ParamVec, row: &[f64]) -> ParamVec {
    let mut out = spec.bias_at(theta.as_slice());
    for (j, o) in out.iter_mut().enumerate() {
        *o += theta[j];
        if spec.noise_sd > 0.0 {
            *o += spec.noise_sd * probit(row[j]);
        }
    }
    ParamVec::new(out)
}
