//! Deterministic random-number infrastructure.
//!
//! Every stochastic quantity in the crate flows through [`RngStream`] or a
//! [`CrnBank`]. The bank holds the uniform draws that are fixed once per
//! solver run and re-used at every iteration, so that the current parameter
//! value is the only thing that changes between iterations (common random
//! numbers). Responses are produced from the bank by inverting the target
//! distribution's CDF.
//!
//! The generator is counter-based (a SplitMix64-style mixer over
//! `seed + index`), so a draw is addressed by `(seed, h, i)` with no
//! sequential dependence, and regenerating a bank from the same
//! `(seed, H, n)` is bit-identical.

use crate::math::{exp, ln, ln_1p, powf, probit, sqrt};
use crate::{Error, Result};
use alloc::format;
use alloc::vec::Vec;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// Hard cap on the support scan of the discrete quantile functions.
pub const QUANTILE_SUPPORT_CAP: u64 = 10_000_000;

#[inline]
fn mix(z: u64) -> u64 {
    let mut z = z;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[inline]
fn u64_at(seed: u64, index: u64) -> u64 {
    mix(seed.wrapping_add(GOLDEN.wrapping_mul(index.wrapping_add(1))))
}

/// Converts raw bits to a uniform strictly inside (0, 1).
#[inline]
fn open_unit(bits: u64) -> f64 {
    ((bits >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0)
}

/// A seeded, splittable stream of deterministic draws.
///
/// Identical `(seed, counter)` state always produces identical draws, and
/// [`RngStream::substream`] derives an independent child stream from an
/// index, so a whole experiment can be rebuilt from one master seed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RngStream {
    seed: u64,
    counter: u64,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self { seed, counter: 0 }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Derives an independent child stream. Does not advance `self`.
    pub fn substream(&self, index: u64) -> RngStream {
        RngStream::new(mix(self.seed ^ u64_at(GOLDEN, index)))
    }

    pub fn next_u64(&mut self) -> u64 {
        let v = u64_at(self.seed, self.counter);
        self.counter += 1;
        v
    }

    /// Uniform draw strictly inside (0, 1).
    pub fn uniform(&mut self) -> f64 {
        open_unit(self.next_u64())
    }

    /// Gaussian draw by inverting the normal CDF; `sd = 0` returns `mean`
    /// exactly (and consumes nothing).
    pub fn normal(&mut self, mean: f64, sd: f64) -> Result<f64> {
        if !(sd >= 0.0) || !sd.is_finite() || !mean.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "normal draw requires finite mean and sd >= 0, got ({mean}, {sd})"
            )));
        }
        if sd == 0.0 {
            return Ok(mean);
        }
        Ok(mean + sd * probit(self.uniform()))
    }

    /// Beta(a, b) draw via two gamma draws (Marsaglia-Tsang).
    pub fn beta(&mut self, a: f64, b: f64) -> Result<f64> {
        if !(a > 0.0) || !(b > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "beta shapes must be positive, got ({a}, {b})"
            )));
        }
        let x = self.gamma(a);
        let y = self.gamma(b);
        if x + y == 0.0 {
            // Both draws underflowed; fall back to the shape-ratio mean.
            return Ok(a / (a + b));
        }
        Ok(x / (x + y))
    }

    /// Gamma(shape, 1) draw (Marsaglia-Tsang squeeze, with the shape boost
    /// for shape < 1).
    fn gamma(&mut self, shape: f64) -> f64 {
        if shape < 1.0 {
            let boost = powf(self.uniform(), 1.0 / shape);
            return self.gamma(shape + 1.0) * boost;
        }
        let d = shape - 1.0 / 3.0;
        let c = 1.0 / sqrt(9.0 * d);
        loop {
            let z = probit(self.uniform());
            let t = 1.0 + c * z;
            if t <= 0.0 {
                continue;
            }
            let v = t * t * t;
            let u = self.uniform();
            if ln(u) < 0.5 * z * z + d - d * v + d * ln(v) {
                return d * v;
            }
        }
    }
}

/// The fixed uniform bank shared by every iteration of a solver run:
/// `H` simulated samples of size `n`, one uniform per response.
///
/// The bank is immutable after construction; the solver only reads it.
/// Rebuilding with the same `(seed, H, n)` yields a bit-identical matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CrnBank {
    seed: u64,
    h: usize,
    n: usize,
    u: Vec<f64>,
}

impl CrnBank {
    pub fn new(seed: u64, h: usize, n: usize) -> Result<Self> {
        if h == 0 || n == 0 {
            return Err(Error::InvalidArgument(format!(
                "bank dimensions must be positive, got H={h}, n={n}"
            )));
        }
        let mut u = Vec::with_capacity(h * n);
        for idx in 0..(h as u64 * n as u64) {
            u.push(open_unit(u64_at(seed, idx)));
        }
        Ok(Self { seed, h, n, u })
    }

    /// Number of simulated samples H.
    pub fn rows(&self) -> usize {
        self.h
    }

    /// Sample size n.
    pub fn cols(&self) -> usize {
        self.n
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// The uniforms for the h-th simulated sample.
    pub fn row(&self, h: usize) -> &[f64] {
        &self.u[h * self.n..(h + 1) * self.n]
    }
}

/// Bernoulli inversion: 1 iff `u < mu`. The strict-less convention is fixed
/// so that coupled simulations at nearby means flip as few responses as
/// possible.
pub fn bernoulli_quantile(u: f64, mu: f64) -> Result<u64> {
    if !(0.0..=1.0).contains(&mu) {
        return Err(Error::InvalidArgument(format!(
            "bernoulli mean must lie in [0, 1], got {mu}"
        )));
    }
    Ok(u64::from(u < mu))
}

/// Smallest k with `PoissonCDF(k; lambda) >= u`, by incremental pmf
/// summation. The pmf recurrence is carried in log space so large means do
/// not underflow the starting term.
pub fn poisson_quantile(u: f64, lambda: f64) -> Result<u64> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "poisson mean must be finite and non-negative, got {lambda}"
        )));
    }
    if lambda == 0.0 {
        return Ok(0);
    }
    let ln_lambda = ln(lambda);
    let mut log_pmf = -lambda;
    let mut cdf = exp(log_pmf);
    let mut k: u64 = 0;
    while cdf < u {
        if k >= QUANTILE_SUPPORT_CAP {
            return Err(Error::SupportCapExceeded { cap: QUANTILE_SUPPORT_CAP });
        }
        k += 1;
        log_pmf += ln_lambda - ln(k as f64);
        let term = exp(log_pmf);
        // Past the mode the remaining mass shrinks geometrically; once it
        // can no longer move the accumulator the quantile is exhausted.
        if cdf + term == cdf && k as f64 > lambda {
            break;
        }
        cdf += term;
    }
    Ok(k)
}

/// Smallest k with `NegBinCDF(k; mu, alpha) >= u`, where the distribution
/// has mean `mu` and variance `mu + alpha * mu^2`. The pmf is evaluated by
/// a multiplicative recurrence in log space, which stays stable down to
/// the Poisson limit `alpha -> 0`.
pub fn negbin_quantile(u: f64, mu: f64, alpha: f64) -> Result<u64> {
    if !(mu >= 0.0) || !mu.is_finite() || !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "negative binomial requires mu >= 0 and alpha > 0, got ({mu}, {alpha})"
        )));
    }
    if mu == 0.0 {
        return Ok(0);
    }
    let r = 1.0 / alpha;
    // Success-probability parts: q = r/(r+mu), pp = mu/(r+mu).
    let am = alpha * mu;
    let pp = am / (1.0 + am);
    let mut log_pmf = -ln_1p(am) / alpha; // r * ln q
    let mut cdf = exp(log_pmf);
    let mut k: u64 = 0;
    while cdf < u {
        if k >= QUANTILE_SUPPORT_CAP {
            return Err(Error::SupportCapExceeded { cap: QUANTILE_SUPPORT_CAP });
        }
        let kf = k as f64;
        // pmf(k+1)/pmf(k) = (k + r) * pp / (k + 1); grouped to stay
        // conditioned when r is huge (alpha near zero).
        log_pmf += ln((kf + r) * pp / (kf + 1.0));
        k += 1;
        let term = exp(log_pmf);
        if cdf + term == cdf && k as f64 > mu {
            break;
        }
        cdf += term;
    }
    Ok(k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn bank_regeneration_is_bit_identical() {
        let a = CrnBank::new(42, 2, 3).unwrap();
        let b = CrnBank::new(42, 2, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.rows(), 2);
        assert_eq!(a.cols(), 3);
        let c = CrnBank::new(43, 2, 3).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn bank_entries_stay_strictly_inside_unit_interval() {
        let bank = CrnBank::new(42, 200, 100).unwrap();
        for h in 0..bank.rows() {
            for &v in bank.row(h) {
                assert!(v > 0.0 && v < 1.0);
            }
        }
        let tiny = CrnBank::new(1, 1, 1).unwrap();
        assert!(tiny.row(0)[0] > 0.0 && tiny.row(0)[0] < 1.0);
    }

    #[test]
    fn bank_rejects_empty_dimensions() {
        assert!(CrnBank::new(1, 0, 5).is_err());
        assert!(CrnBank::new(1, 5, 0).is_err());
    }

    #[test]
    fn substreams_are_reproducible_and_distinct() {
        let root = RngStream::new(7);
        let mut a = root.substream(3);
        let mut b = root.substream(3);
        let mut c = root.substream(4);
        for _ in 0..32 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
        assert_ne!(a.substream(0), c.substream(0));
    }

    #[test]
    fn bernoulli_quantile_follows_the_stated_convention() {
        assert_eq!(bernoulli_quantile(0.3, 0.5).unwrap(), 1);
        assert_eq!(bernoulli_quantile(0.9, 0.0).unwrap(), 0);
        assert_eq!(bernoulli_quantile(0.1, 1.0).unwrap(), 1);
        assert!(bernoulli_quantile(0.5, 1.5).is_err());
    }

    #[test]
    fn poisson_quantile_matches_hand_checked_cdf() {
        // CDF(0; 1) = 0.3679, CDF(1; 1) = 0.7358, CDF(3; 1) = 0.9810,
        // CDF(4; 1) = 0.9963.
        assert_eq!(poisson_quantile(0.5, 1.0).unwrap(), 1);
        assert_eq!(poisson_quantile(0.99, 1.0).unwrap(), 4);
        assert_eq!(poisson_quantile(0.37, 0.0).unwrap(), 0);
        assert!(poisson_quantile(0.5, -1.0).is_err());
        assert!(poisson_quantile(0.5, f64::NAN).is_err());
    }

    #[test]
    fn poisson_quantile_survives_large_means() {
        // exp(-1000) underflows; the log-space recurrence must not.
        let q = poisson_quantile(0.5, 1000.0).unwrap();
        assert!((q as f64 - 1000.0).abs() < 5.0, "median {q} too far from 1000");
        let hi = poisson_quantile(1.0 - 1e-12, 1000.0).unwrap();
        assert!(hi > q && hi < 1300);
    }

    /// Brute-force CDF by direct gamma-function evaluation of each pmf term.
    fn poisson_cdf_oracle(k: u64, lambda: f64) -> f64 {
        let mut s = 0.0;
        for j in 0..=k {
            s += exp(j as f64 * ln(lambda) - lambda - libm::lgamma(j as f64 + 1.0));
        }
        s
    }

    fn negbin_cdf_oracle(k: u64, mu: f64, alpha: f64) -> f64 {
        let r = 1.0 / alpha;
        let q = r / (r + mu);
        let pp = mu / (r + mu);
        let mut s = 0.0;
        for j in 0..=k {
            let jf = j as f64;
            s += exp(
                libm::lgamma(jf + r) - libm::lgamma(jf + 1.0) - libm::lgamma(r)
                    + r * ln(q)
                    + jf * ln(pp),
            );
        }
        s
    }

    #[test]
    fn quantiles_agree_with_summation_oracles() {
        for &lambda in &[0.2, 1.0, 3.7, 25.0] {
            for i in 1..20 {
                let u = i as f64 / 20.0;
                let k = poisson_quantile(u, lambda).unwrap();
                assert!(poisson_cdf_oracle(k, lambda) >= u);
                assert!(k == 0 || poisson_cdf_oracle(k - 1, lambda) < u);
            }
        }
        for &(mu, alpha) in &[(2.0, 0.6), (0.5, 1.2), (8.0, 0.3)] {
            for i in 1..20 {
                let u = i as f64 / 20.0;
                let k = negbin_quantile(u, mu, alpha).unwrap();
                assert!(negbin_cdf_oracle(k, mu, alpha) >= u);
                assert!(k == 0 || negbin_cdf_oracle(k - 1, mu, alpha) < u);
            }
        }
    }

    #[test]
    fn negbin_quantile_handles_edge_parameters() {
        assert_eq!(negbin_quantile(0.97, 0.0, 0.6).unwrap(), 0);
        // NB CDF(1; mu=2, alpha=0.6) = 0.513 >= 0.5 > CDF(0) = 0.269.
        assert_eq!(negbin_quantile(0.5, 2.0, 0.6).unwrap(), 1);
        assert!(negbin_quantile(0.5, 2.0, 0.0).is_err());
        assert!(negbin_quantile(0.5, -1.0, 0.6).is_err());
    }

    #[test]
    fn negbin_quantile_reaches_the_poisson_limit() {
        for i in 1..40 {
            let u = i as f64 / 40.0;
            assert_eq!(
                negbin_quantile(u, 2.0, 1e-6).unwrap(),
                poisson_quantile(u, 2.0).unwrap(),
                "u = {u}"
            );
        }
    }

    #[test]
    fn beta_sampler_matches_its_moments() {
        let check = |a: f64, b: f64, tol: f64, seed: u64| {
            let mut s = RngStream::new(seed);
            let n = 100_000;
            let mean = (0..n).map(|_| s.beta(a, b).unwrap()).sum::<f64>() / n as f64;
            let want = a / (a + b);
            assert!((mean - want).abs() < tol, "Beta({a},{b}) mean {mean} vs {want}");
        };
        check(2.0, 50.0, 0.005, 11); // false-positive-rate latents
        check(2.0, 10.0, 0.01, 12); // false-negative-rate latents
    }

    #[test]
    fn beta_one_one_is_uniform() {
        let mut s = RngStream::new(5);
        let n = 10_000;
        let mut draws: Vec<f64> = (0..n).map(|_| s.beta(1.0, 1.0).unwrap()).collect();
        draws.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut ks = 0.0_f64;
        for (i, v) in draws.iter().enumerate() {
            let empirical_hi = (i + 1) as f64 / n as f64;
            let empirical_lo = i as f64 / n as f64;
            ks = ks.max((empirical_hi - v).abs()).max((v - empirical_lo).abs());
        }
        assert!(ks < 0.02, "KS statistic {ks}");
        assert!(s.beta(0.0, 1.0).is_err());
    }

    #[test]
    fn normal_sampler_moments_and_degenerate_case() {
        let mut s = RngStream::new(9);
        assert_eq!(s.normal(3.0, 0.0).unwrap(), 3.0);
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| s.normal(0.0, 1.0).unwrap()).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "var {var}");
        assert!(s.normal(0.0, -1.0).is_err());
        // Shifted/scaled draw as used by the covariate generators.
        let d = s.normal(0.6, 4.0 / sqrt(3000.0)).unwrap();
        assert!(d.is_finite());
    }

    proptest! {
        #[test]
        fn count_quantiles_are_monotone_in_u(
            u1 in 1e-9_f64..1.0, u2 in 1e-9_f64..1.0,
            lambda in 0.0_f64..80.0, mu in 0.0_f64..40.0, alpha in 1e-4_f64..5.0,
        ) {
            let (lo, hi) = if u1 <= u2 { (u1, u2) } else { (u2, u1) };
            prop_assert!(poisson_quantile(lo, lambda).unwrap() <= poisson_quantile(hi, lambda).unwrap());
            prop_assert!(negbin_quantile(lo, mu, alpha).unwrap() <= negbin_quantile(hi, mu, alpha).unwrap());
        }

        #[test]
        fn bernoulli_is_monotone_in_the_mean(
            u in 1e-9_f64..1.0, m1 in 0.0_f64..=1.0, m2 in 0.0_f64..=1.0,
        ) {
            let (lo, hi) = if m1 <= m2 { (m1, m2) } else { (m2, m1) };
            prop_assert!(bernoulli_quantile(u, lo).unwrap() <= bernoulli_quantile(u, hi).unwrap());
        }
    }
}
