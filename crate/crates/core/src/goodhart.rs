//! Regressional Goodhart closed form and the noise-selection model of
//! best-of-n, with Monte Carlo and quadrature machinery.
//!
//! The model: a proxy `X + Z` equals the true quantity `X` plus independent
//! noise `Z`. Conditioning on the proxy splits its value between signal and
//! noise in proportion to their variances, so selecting hard on the proxy
//! spends part of the selection pressure on noise. Under this model alone the
//! conditional mean is monotone in the proxy, which is what makes observed
//! non-monotone gold curves diagnostic of something beyond noise.

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use rayon::prelude::*;
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::seeding::{stream_rng, streams};

/// Sampling distribution for the Monte Carlo oracle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DistSpec {
    Normal { mean: f64, sd: f64 },
    /// Bounded noise for the `|Z - E[Z]| < delta` case.
    Uniform { lo: f64, hi: f64 },
}

impl DistSpec {
    pub fn mean(&self) -> f64 {
        match *self {
            DistSpec::Normal { mean, .. } => mean,
            DistSpec::Uniform { lo, hi } => 0.5 * (lo + hi),
        }
    }

    pub fn var(&self) -> f64 {
        match *self {
            DistSpec::Normal { sd, .. } => sd * sd,
            DistSpec::Uniform { lo, hi } => (hi - lo) * (hi - lo) / 12.0,
        }
    }

    fn sample(&self, rng: &mut impl Rng) -> f64 {
        match *self {
            DistSpec::Normal { mean, sd } => Normal::new(mean, sd).unwrap().sample(rng),
            DistSpec::Uniform { lo, hi } => Uniform::new(lo, hi).unwrap().sample(rng),
        }
    }
}

/// `E[X | X + Z = c]` for normal `X` and independent noise `Z`:
/// `E[X] + (c - E[X] - E[Z]) * Var(X) / (Var(X) + Var(Z))`.
pub fn conditional_mean(mean_x: f64, var_x: f64, mean_z: f64, var_z: f64, c: f64) -> Result<f64> {
    if !(var_x > 0.0) {
        return Err(Error::Domain(format!("Var(X) must be > 0, got {var_x}")));
    }
    if !(var_z >= 0.0) {
        return Err(Error::Domain(format!("Var(Z) must be >= 0, got {var_z}")));
    }
    Ok(mean_x + (c - mean_x - mean_z) * var_x / (var_x + var_z))
}

/// Rejection-sampling estimate of `E[X | X + Z in (c - w, c + w)]`.
///
/// Returns `(estimate, standard_error)`. Sampling is sharded with per-shard
/// seeds and reduced in shard order, so the result is independent of thread
/// count.
pub fn mc_conditional_mean(
    dist_x: DistSpec,
    dist_z: DistSpec,
    c: f64,
    window_halfwidth: f64,
    sample_count: u64,
    seed: u64,
) -> Result<(f64, f64)> {
    if !(window_halfwidth > 0.0) {
        return Err(Error::Domain(format!(
            "window halfwidth must be > 0, got {window_halfwidth}"
        )));
    }
    if sample_count < 10_000 {
        return Err(Error::Usage(format!(
            "sample_count must be >= 10000, got {sample_count}"
        )));
    }

    const SHARDS: u64 = 64;
    let per_shard = sample_count / SHARDS;
    let remainder = sample_count % SHARDS;
    let partials: Vec<(u64, f64, f64)> = (0..SHARDS)
        .into_par_iter()
        .map(|shard| {
            let mut rng = stream_rng(seed, &[streams::MC_CONDITIONAL, shard]);
            let n = per_shard + if shard < remainder { 1 } else { 0 };
            let mut count = 0u64;
            let mut sum = 0.0;
            let mut sumsq = 0.0;
            for _ in 0..n {
                let x = dist_x.sample(&mut rng);
                let z = dist_z.sample(&mut rng);
                if (x + z - c).abs() < window_halfwidth {
                    count += 1;
                    sum += x;
                    sumsq += x * x;
                }
            }
            (count, sum, sumsq)
        })
        .collect();

    let mut count = 0u64;
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for (k, s, ss) in partials {
        count += k;
        sum += s;
        sumsq += ss;
    }
    if count < 2 {
        return Err(Error::Usage(format!(
            "only {count} samples accepted in the conditioning window; widen window_halfwidth"
        )));
    }
    let k = count as f64;
    let mean = sum / k;
    let var = (sumsq - k * mean * mean).max(0.0) / (k - 1.0);
    Ok((mean, (var / k).sqrt()))
}

/// Adaptive-Simpson settings for the expected-maximum integral.
#[derive(Debug, Clone, Copy)]
pub struct QuadratureConfig {
    pub abs_tol: f64,
    pub max_depth: u32,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig {
            abs_tol: 1e-10,
            max_depth: 60,
        }
    }
}

/// Standard normal CDF.
fn phi_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal density.
fn phi_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// `E[max of n i.i.d. standard normals]` by adaptive Simpson quadrature of
/// `x * n * phi(x) * Phi(x)^(n-1)`.
pub fn expected_max_std_normal(n: u64, quad: &QuadratureConfig) -> Result<f64> {
    if n < 1 {
        return Err(Error::Domain(format!("n must be >= 1, got {n}")));
    }
    if n == 1 {
        return Ok(0.0);
    }
    let nf = n as f64;
    let integrand = move |x: f64| nf * x * phi_pdf(x) * phi_cdf(x).powf(nf - 1.0);
    // The integrand is negligible outside this range for n up to the
    // exact-combinatorics pool limit.
    let upper = (2.0 * nf.ln()).sqrt() + 10.0;
    adaptive_simpson(&integrand, -13.0, upper, quad)
}

/// Expected gold score when the best of `n` is chosen by proxy `X + Z`
/// (zero means): `E[max_n N(0, var_x + var_z)] * var_x / (var_x + var_z)`.
pub fn bon_gold_under_noise(
    n: u64,
    var_x: f64,
    var_z: f64,
    quad: &QuadratureConfig,
) -> Result<f64> {
    if n < 1 {
        return Err(Error::Domain(format!("n must be >= 1, got {n}")));
    }
    if !(var_x > 0.0) {
        return Err(Error::Domain(format!("Var(X) must be > 0, got {var_x}")));
    }
    if !(var_z >= 0.0) {
        return Err(Error::Domain(format!("Var(Z) must be >= 0, got {var_z}")));
    }
    let emax = expected_max_std_normal(n, quad)?;
    Ok(emax * var_x / (var_x + var_z).sqrt())
}

fn adaptive_simpson(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    quad: &QuadratureConfig,
) -> Result<f64> {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &impl Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        eps: f64,
        depth: u32,
    ) -> std::result::Result<f64, ()> {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if delta.abs() <= 15.0 * eps {
            return Ok(left + right + delta / 15.0);
        }
        if depth == 0 {
            return Err(());
        }
        let l = recurse(f, a, m, fa, flm, fm, left, eps / 2.0, depth - 1)?;
        let r = recurse(f, m, b, fm, frm, fb, right, eps / 2.0, depth - 1)?;
        Ok(l + r)
    }

    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = simpson(fa, fm, fb, a, b);
    recurse(f, a, b, fa, fm, fb, whole, quad.abs_tol, quad.max_depth)
        .map_err(|_| Error::Integration("adaptive quadrature did not converge".into()))
}
