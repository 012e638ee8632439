//! Functional forms for gold score vs `d = sqrt(KL)` and their fits.
//!
//! Best-of-n curves follow `R(d) = d(alpha - beta*d)`; RL curves follow
//! `R(d) = d(alpha - beta*log d)`. Both are linear in `(alpha, beta)` and are
//! fit by (optionally weighted) least squares in closed form. Two alternative
//! RL forms with finite slope at the origin are available for comparison:
//! `d(alpha - beta*log(1+d))` and the power family `d(alpha - beta*d^gamma)`,
//! the latter fit by a golden-section search over `gamma` with an inner
//! linear solve.
//!
//! The RL form has infinite slope at the origin, so RL fits exclude points
//! with `d` at or below a small floor.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Points with `d` at or below this are rejected by the RL-form fits.
pub const DEFAULT_D_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitForm {
    Bon,
    Rl,
    RlLog1p,
    RlPower,
}

impl std::fmt::Display for FitForm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FitForm::Bon => write!(f, "bon"),
            FitForm::Rl => write!(f, "rl"),
            FitForm::RlLog1p => write!(f, "rl_log1p"),
            FitForm::RlPower => write!(f, "rl_power"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalFit {
    pub form: FitForm,
    pub alpha: f64,
    pub beta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    pub rmse: f64,
    pub fit_range: (f64, f64),
    pub point_count: usize,
    pub weights_used: bool,
}

impl FunctionalFit {
    pub fn eval(&self, d: f64) -> f64 {
        eval_form(self.form, self.alpha, self.beta, self.gamma, d)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Evaluates a form at `d`; all forms satisfy `R(0) = 0`.
pub fn eval_form(form: FitForm, alpha: f64, beta: f64, gamma: Option<f64>, d: f64) -> f64 {
    if d == 0.0 {
        return 0.0;
    }
    match form {
        FitForm::Bon => d * (alpha - beta * d),
        FitForm::Rl => d * (alpha - beta * d.ln()),
        FitForm::RlLog1p => d * (alpha - beta * d.ln_1p()),
        FitForm::RlPower => {
            let g = gamma.unwrap_or(1.0);
            d * (alpha - beta * d.powf(g))
        }
    }
}

/// Least-squares fit of `R = alpha*d - beta*d^2`.
pub fn fit_bon(points: &[(f64, f64)], weights: Option<&[f64]>) -> Result<FunctionalFit> {
    validate_points(points, weights)?;
    let distinct = distinct_positive_d(points);
    if distinct < 2 {
        return Err(Error::Fit(format!(
            "need at least 2 distinct d > 0 values, got {distinct}"
        )));
    }
    if points.iter().any(|&(d, _)| d < 0.0) {
        return Err(Error::Fit("points with d < 0 are invalid".into()));
    }
    let coef = solve_two_basis(points, weights, |d| [d, -d * d])?;
    Ok(finish_fit(FitForm::Bon, coef[0], coef[1], None, points, weights))
}

/// Least-squares fit of `R = alpha*d - beta*d*log d`, excluding the origin.
pub fn fit_rl(points: &[(f64, f64)], weights: Option<&[f64]>) -> Result<FunctionalFit> {
    fit_rl_with_floor(points, weights, DEFAULT_D_FLOOR)
}

pub fn fit_rl_with_floor(
    points: &[(f64, f64)],
    weights: Option<&[f64]>,
    d_floor: f64,
) -> Result<FunctionalFit> {
    validate_points(points, weights)?;
    check_rl_floor(points, d_floor)?;
    let coef = solve_two_basis(points, weights, |d| [d, -d * d.ln()])?;
    Ok(finish_fit(FitForm::Rl, coef[0], coef[1], None, points, weights))
}

/// Joint RL fit over a family of traces holding `alpha` shared; returns the
/// shared `alpha` and one per-trace fit.
pub fn fit_rl_joint(families: &[Vec<(f64, f64)>]) -> Result<(f64, Vec<FunctionalFit>)> {
    if families.is_empty() {
        return Err(Error::Fit("no traces to fit".into()));
    }
    for points in families {
        validate_points(points, None)?;
        check_rl_floor(points, DEFAULT_D_FLOOR)?;
    }
    let k = families.len();
    let total: usize = families.iter().map(|p| p.len()).sum();
    let mut design = DMatrix::zeros(total, k + 1);
    let mut target = DVector::zeros(total);
    let mut row = 0;
    for (j, points) in families.iter().enumerate() {
        for &(d, r) in points {
            design[(row, 0)] = d;
            design[(row, 1 + j)] = -d * d.ln();
            target[row] = r;
            row += 1;
        }
    }
    let xtx = design.transpose() * &design;
    let xty = design.transpose() * target;
    let solution = xtx
        .lu()
        .solve(&xty)
        .ok_or_else(|| Error::Fit("rank-deficient joint design".into()))?;
    let alpha = solution[0];
    let fits = families
        .iter()
        .enumerate()
        .map(|(j, points)| {
            let beta = solution[1 + j];
            finish_fit(FitForm::Rl, alpha, beta, None, points, None)
        })
        .collect();
    Ok((alpha, fits))
}

/// Alternative RL forms: `rl_log1p` solves linearly; `rl_power` golden-section
/// searches `gamma` in `[0.01, 2]` with an inner linear solve.
pub fn fit_alt_rl_forms(
    points: &[(f64, f64)],
    form: FitForm,
    weights: Option<&[f64]>,
) -> Result<FunctionalFit> {
    validate_points(points, weights)?;
    check_rl_floor(points, DEFAULT_D_FLOOR)?;
    match form {
        FitForm::RlLog1p => {
            let coef = solve_two_basis(points, weights, |d| [d, -d * d.ln_1p()])?;
            Ok(finish_fit(FitForm::RlLog1p, coef[0], coef[1], None, points, weights))
        }
        FitForm::RlPower => {
            if points.len() < 3 {
                return Err(Error::Fit(
                    "power form needs at least 3 points".into(),
                ));
            }
            let sse_at = |gamma: f64| -> f64 {
                match solve_two_basis(points, weights, |d| [d, -d.powf(1.0 + gamma)]) {
                    Ok(coef) => weighted_sse(points, weights, |d| {
                        eval_form(FitForm::RlPower, coef[0], coef[1], Some(gamma), d)
                    }),
                    Err(_) => f64::INFINITY,
                }
            };
            let (lo, hi) = (0.01, 2.0);
            let gamma = golden_min(sse_at, lo, hi, 90);
            if !sse_at(gamma).is_finite() {
                return Err(Error::Fit("gamma search not bracketed".into()));
            }
            let coef = solve_two_basis(points, weights, |d| [d, -d.powf(1.0 + gamma)])?;
            Ok(finish_fit(
                FitForm::RlPower,
                coef[0],
                coef[1],
                Some(gamma),
                points,
                weights,
            ))
        }
        other => Err(Error::Usage(format!(
            "fit_alt_rl_forms handles rl_log1p and rl_power, not {other}"
        ))),
    }
}

/// Dispatch to the fitter for `form`.
pub fn fit_with_form(
    points: &[(f64, f64)],
    form: FitForm,
    weights: Option<&[f64]>,
) -> Result<FunctionalFit> {
    match form {
        FitForm::Bon => fit_bon(points, weights),
        FitForm::Rl => fit_rl(points, weights),
        FitForm::RlLog1p | FitForm::RlPower => fit_alt_rl_forms(points, form, weights),
    }
}

/// Fits every form and returns them sorted by RMSE, best first.
pub fn compare_forms(points: &[(f64, f64)], weights: Option<&[f64]>) -> Vec<FunctionalFit> {
    let mut fits: Vec<FunctionalFit> = [FitForm::Bon, FitForm::Rl, FitForm::RlLog1p, FitForm::RlPower]
        .into_iter()
        .filter_map(|form| fit_with_form(points, form, weights).ok())
        .collect();
    fits.sort_by(|a, b| a.rmse.total_cmp(&b.rmse));
    fits
}

/// Stationary point of the fitted form: `(d_star, R_star)`.
pub fn predict_peak(fit: &FunctionalFit) -> Result<(f64, f64)> {
    if !(fit.beta > 0.0) {
        return Err(Error::Fit(format!(
            "no peak: beta = {} is not positive, curve is monotone",
            fit.beta
        )));
    }
    let (alpha, beta) = (fit.alpha, fit.beta);
    match fit.form {
        FitForm::Bon => Ok((alpha / (2.0 * beta), alpha * alpha / (4.0 * beta))),
        FitForm::Rl => {
            let d_star = (alpha / beta - 1.0).exp();
            Ok((d_star, beta * d_star))
        }
        FitForm::RlPower => {
            let gamma = fit
                .gamma
                .ok_or_else(|| Error::Fit("power fit missing gamma".into()))?;
            if !(alpha > 0.0) {
                return Err(Error::Fit("no interior peak: alpha <= 0".into()));
            }
            let d_star = (alpha / (beta * (1.0 + gamma))).powf(1.0 / gamma);
            Ok((d_star, fit.eval(d_star)))
        }
        FitForm::RlLog1p => {
            // alpha = beta * (log(1+d) + d/(1+d)) has a unique root for
            // alpha > 0; bisect on an expanding bracket.
            if !(alpha > 0.0) {
                return Err(Error::Fit("no interior peak: alpha <= 0".into()));
            }
            let g = |d: f64| alpha - beta * (d.ln_1p() + d / (1.0 + d));
            let mut hi = 1.0;
            while g(hi) > 0.0 {
                hi *= 2.0;
                if hi > 1e12 {
                    return Err(Error::Fit("peak beyond search range".into()));
                }
            }
            let mut lo = 0.0;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if g(mid) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let d_star = 0.5 * (lo + hi);
            Ok((d_star, fit.eval(d_star)))
        }
    }
}

/// Gold score after `k` optimization rounds each covering `d/k`:
/// `d * (alpha - beta*log d + beta*log k)`.
pub fn iterated_rlhf_prediction(alpha: f64, beta: f64, d: f64, k: u64) -> Result<f64> {
    if !(d > 0.0) {
        return Err(Error::Domain(format!("d must be > 0, got {d}")));
    }
    if k < 1 {
        return Err(Error::Domain(format!("k must be >= 1, got {k}")));
    }
    if !(beta >= 0.0) {
        return Err(Error::Domain(format!("beta must be >= 0, got {beta}")));
    }
    Ok(d * (alpha - beta * d.ln() + beta * (k as f64).ln()))
}

/// Least squares of `value ~ slope*log(capacity) + intercept`; returns
/// `(slope, intercept, r_squared)`. Constant values fit exactly (r² = 1).
pub fn coefficient_trend_fit(capacities: &[f64], values: &[f64]) -> Result<(f64, f64, f64)> {
    if capacities.len() != values.len() {
        return Err(Error::Usage(format!(
            "{} capacities vs {} values",
            capacities.len(),
            values.len()
        )));
    }
    if capacities.iter().any(|&c| !(c > 0.0)) {
        return Err(Error::Fit("capacities must be > 0 for a log trend".into()));
    }
    let xs: Vec<f64> = capacities.iter().map(|c| c.ln()).collect();
    let n = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_y = values.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(values) {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
        syy += (y - mean_y) * (y - mean_y);
    }
    if sxx == 0.0 {
        return Err(Error::Fit(
            "need at least 2 distinct capacities for a trend".into(),
        ));
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok((slope, intercept, r2))
}

/// Fits on `d <= cutoff_d` and reports RMSE on `d > cutoff_d`.
pub fn extrapolation_check(
    points: &[(f64, f64)],
    cutoff_d: f64,
    form: FitForm,
) -> Result<(FunctionalFit, f64)> {
    let (left, right): (Vec<(f64, f64)>, Vec<(f64, f64)>) =
        points.iter().partition(|&&(d, _)| d <= cutoff_d);
    if left.len() < 2 || right.len() < 2 {
        return Err(Error::Usage(format!(
            "need at least 2 points on each side of the cutoff, got {} / {}",
            left.len(),
            right.len()
        )));
    }
    let fit = fit_with_form(&left, form, None)?;
    let held_out = (weighted_sse(&right, None, |d| fit.eval(d)) / right.len() as f64).sqrt();
    Ok((fit, held_out))
}

fn validate_points(points: &[(f64, f64)], weights: Option<&[f64]>) -> Result<()> {
    if points.len() < 2 {
        return Err(Error::Fit(format!(
            "need at least 2 points, got {}",
            points.len()
        )));
    }
    if points.iter().any(|&(d, r)| !d.is_finite() || !r.is_finite()) {
        return Err(Error::Fit("points must be finite".into()));
    }
    if let Some(w) = weights {
        if w.len() != points.len() {
            return Err(Error::Fit(format!(
                "{} weights for {} points",
                w.len(),
                points.len()
            )));
        }
        if w.iter().any(|&x| !(x > 0.0)) {
            return Err(Error::Fit("weights must be > 0".into()));
        }
    }
    Ok(())
}

fn check_rl_floor(points: &[(f64, f64)], d_floor: f64) -> Result<()> {
    if let Some(&(d, _)) = points.iter().find(|&&(d, _)| d <= d_floor) {
        return Err(Error::Fit(format!(
            "RL form excludes the origin: point at d = {d} is at or below the floor {d_floor}"
        )));
    }
    let distinct = distinct_positive_d(points);
    if distinct < 2 {
        return Err(Error::Fit(format!(
            "need at least 2 distinct d values, got {distinct}"
        )));
    }
    Ok(())
}

fn distinct_positive_d(points: &[(f64, f64)]) -> usize {
    let mut ds: Vec<f64> = points.iter().map(|&(d, _)| d).filter(|&d| d > 0.0).collect();
    ds.sort_by(f64::total_cmp);
    ds.dedup();
    ds.len()
}

/// Solves the 2-parameter weighted normal equations for `basis(d) . coef = R`.
fn solve_two_basis(
    points: &[(f64, f64)],
    weights: Option<&[f64]>,
    basis: impl Fn(f64) -> [f64; 2],
) -> Result<[f64; 2]> {
    let mut a00 = 0.0;
    let mut a01 = 0.0;
    let mut a11 = 0.0;
    let mut b0 = 0.0;
    let mut b1 = 0.0;
    for (i, &(d, r)) in points.iter().enumerate() {
        let w = weights.map_or(1.0, |w| w[i]);
        let [x0, x1] = basis(d);
        a00 += w * x0 * x0;
        a01 += w * x0 * x1;
        a11 += w * x1 * x1;
        b0 += w * x0 * r;
        b1 += w * x1 * r;
    }
    let det = a00 * a11 - a01 * a01;
    // Relative rank test; an exactly repeated d collapses the determinant.
    if det.abs() <= 1e-12 * a00.abs().max(a11.abs()).powi(2) || det == 0.0 {
        return Err(Error::Fit("rank-deficient design (repeated d values)".into()));
    }
    Ok([(b0 * a11 - b1 * a01) / det, (a00 * b1 - a01 * b0) / det])
}

fn weighted_sse(
    points: &[(f64, f64)],
    weights: Option<&[f64]>,
    model: impl Fn(f64) -> f64,
) -> f64 {
    points
        .iter()
        .enumerate()
        .map(|(i, &(d, r))| {
            let w = weights.map_or(1.0, |w| w[i]);
            let resid = r - model(d);
            w * resid * resid
        })
        .sum()
}

fn finish_fit(
    form: FitForm,
    alpha: f64,
    beta: f64,
    gamma: Option<f64>,
    points: &[(f64, f64)],
    weights: Option<&[f64]>,
) -> FunctionalFit {
    let sse = weighted_sse(points, weights, |d| eval_form(form, alpha, beta, gamma, d));
    let wsum = weights.map_or(points.len() as f64, |w| w.iter().sum());
    let mut d_min = f64::INFINITY;
    let mut d_max = f64::NEG_INFINITY;
    for &(d, _) in points {
        d_min = d_min.min(d);
        d_max = d_max.max(d);
    }
    FunctionalFit {
        form,
        alpha,
        beta,
        gamma,
        rmse: (sse / wsum).sqrt(),
        fit_range: (d_min, d_max),
        point_count: points.len(),
        weights_used: weights.is_some(),
    }
}

fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, iters: usize) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..iters {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        }
    }
    0.5 * (a + b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn grid(count: usize, lo: f64, hi: f64) -> Vec<f64> {
        (0..count)
            .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
            .collect()
    }

    fn make_points(form: FitForm, alpha: f64, beta: f64, gamma: Option<f64>) -> Vec<(f64, f64)> {
        grid(50, 0.2, 3.0)
            .into_iter()
            .map(|d| (d, eval_form(form, alpha, beta, gamma, d)))
            .collect()
    }

    #[test]
    fn bon_noiseless_recovery_is_exact() {
        let points = make_points(FitForm::Bon, 1.0, 0.1, None);
        let fit = fit_bon(&points, None).unwrap();
        assert!((fit.alpha - 1.0).abs() < 1e-10);
        assert!((fit.beta - 0.1).abs() < 1e-10);
        assert!(fit.rmse < 1e-10);
        assert_eq!(fit.point_count, 50);
        assert!(!fit.weights_used);
    }

    #[test]
    fn rl_noiseless_recovery_is_exact() {
        let points = make_points(FitForm::Rl, 2.0, 0.5, None);
        let fit = fit_rl(&points, None).unwrap();
        assert!((fit.alpha - 2.0).abs() < 1e-10);
        assert!((fit.beta - 0.5).abs() < 1e-10);
    }

    #[test]
    fn log1p_noiseless_recovery_is_exact() {
        let points = make_points(FitForm::RlLog1p, 1.5, 0.4, None);
        let fit = fit_alt_rl_forms(&points, FitForm::RlLog1p, None).unwrap();
        assert!((fit.alpha - 1.5).abs() < 1e-10);
        assert!((fit.beta - 0.4).abs() < 1e-10);
    }

    #[test]
    fn noisy_recovery_within_tolerance() {
        let mut rng = crate::seeding::stream_rng(1, &[77]);
        let noise = Normal::new(0.0, 0.01).unwrap();
        let (alpha, beta) = (1.0, 0.1);
        let points: Vec<(f64, f64)> = grid(50, 0.2, 3.0)
            .into_iter()
            .map(|d| {
                let r = eval_form(FitForm::Bon, alpha, beta, None, d);
                (d, r + r.abs() * noise.sample(&mut rng))
            })
            .collect();
        let fit = fit_bon(&points, None).unwrap();
        assert!((fit.alpha - alpha).abs() / alpha < 0.03);
        assert!((fit.beta - beta).abs() / beta < 0.05);
    }

    #[test]
    fn degenerate_designs_error() {
        let repeated: Vec<(f64, f64)> = vec![(1.0, 0.5), (1.0, 0.6), (1.0, 0.7)];
        assert!(matches!(fit_bon(&repeated, None), Err(Error::Fit(_))));
        assert!(matches!(fit_rl(&repeated, None), Err(Error::Fit(_))));
        let single = vec![(1.0, 0.5)];
        assert!(matches!(fit_bon(&single, None), Err(Error::Fit(_))));
    }

    #[test]
    fn rl_rejects_origin_points() {
        let mut points = make_points(FitForm::Rl, 1.0, 0.2, None);
        points.push((0.0, 0.0));
        let err = fit_rl(&points, None).unwrap_err();
        match err {
            Error::Fit(msg) => assert!(msg.contains("origin"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn joint_fit_shares_alpha() {
        // Seed-averaged recovery under 1% relative noise.
        let alpha = 2.0;
        let betas = [0.3, 0.5, 0.7];
        let seeds = 5;
        let mut alpha_mean = 0.0;
        let mut beta_means = [0.0; 3];
        for seed in 0..seeds {
            let mut rng = crate::seeding::stream_rng(seed, &[78]);
            let noise = Normal::new(0.0, 0.01).unwrap();
            let families: Vec<Vec<(f64, f64)>> = betas
                .iter()
                .map(|&b| {
                    grid(200, 0.2, 3.0)
                        .into_iter()
                        .map(|d| {
                            let r = eval_form(FitForm::Rl, alpha, b, None, d);
                            (d, r + r.abs() * noise.sample(&mut rng))
                        })
                        .collect()
                })
                .collect();
            let (shared, fits) = fit_rl_joint(&families).unwrap();
            alpha_mean += shared / seeds as f64;
            for (bm, fit) in beta_means.iter_mut().zip(&fits) {
                assert_eq!(fit.alpha, shared);
                *bm += fit.beta / seeds as f64;
            }
        }
        assert!((alpha_mean - alpha).abs() / alpha < 0.01, "alpha {alpha_mean}");
        for (bm, &b) in beta_means.iter().zip(&betas) {
            assert!((bm - b).abs() / b < 0.01, "beta {bm} vs {b}");
        }
        // Noiseless joint fit is exact.
        let clean: Vec<Vec<(f64, f64)>> = betas
            .iter()
            .map(|&b| {
                grid(50, 0.2, 3.0)
                    .into_iter()
                    .map(|d| (d, eval_form(FitForm::Rl, alpha, b, None, d)))
                    .collect()
            })
            .collect();
        let (shared, fits) = fit_rl_joint(&clean).unwrap();
        assert!((shared - alpha).abs() < 1e-10);
        for (fit, &b) in fits.iter().zip(&betas) {
            assert!((fit.beta - b).abs() < 1e-10);
        }
    }

    #[test]
    fn power_fit_recovers_small_gamma_on_rl_data() {
        // Data from the log form: the best power fits land at small gamma.
        let points = make_points(FitForm::Rl, 2.0, 0.5, None);
        let fit = fit_alt_rl_forms(&points, FitForm::RlPower, None).unwrap();
        let gamma = fit.gamma.unwrap();
        assert!(gamma < 0.5, "gamma = {gamma}");
    }

    #[test]
    fn power_limit_matches_log() {
        // n(x^(1/n) - 1) -> log x
        let x: f64 = 2.0;
        let n = 1e6;
        let approx = n * (x.powf(1.0 / n) - 1.0);
        assert!((approx - x.ln()).abs() < 1e-6);
    }

    #[test]
    fn forms_vanish_at_origin() {
        for form in [FitForm::Bon, FitForm::Rl, FitForm::RlLog1p, FitForm::RlPower] {
            assert_eq!(eval_form(form, 1.3, 0.4, Some(0.2), 0.0), 0.0);
            let near = eval_form(form, 1.3, 0.4, Some(0.2), 1e-12);
            assert!(near.abs() < 1e-10);
        }
    }

    #[test]
    fn peak_prediction_examples() {
        let bon = FunctionalFit {
            form: FitForm::Bon,
            alpha: 1.0,
            beta: 0.1,
            gamma: None,
            rmse: 0.0,
            fit_range: (0.2, 3.0),
            point_count: 50,
            weights_used: false,
        };
        let (d_star, r_star) = predict_peak(&bon).unwrap();
        assert!((d_star - 5.0).abs() < 1e-12);
        assert!((r_star - 2.5).abs() < 1e-12);
        // local max by evaluation
        let eps = 1e-6 * d_star;
        assert!(bon.eval(d_star - eps) < r_star);
        assert!(bon.eval(d_star + eps) < r_star);

        let rl = FunctionalFit { form: FitForm::Rl, alpha: 1.0, beta: 1.0, ..bon.clone() };
        let (d_star, r_star) = predict_peak(&rl).unwrap();
        assert!((d_star - 1.0).abs() < 1e-12);
        assert!((r_star - 1.0).abs() < 1e-12);

        let flat = FunctionalFit { beta: 0.0, ..bon };
        assert!(matches!(predict_peak(&flat), Err(Error::Fit(_))));
    }

    #[test]
    fn peak_matches_dense_grid_argmax() {
        for (form, alpha, beta) in [
            (FitForm::Bon, 1.0, 0.1),
            (FitForm::Bon, 2.5, 0.7),
            (FitForm::Rl, 2.0, 0.5),
            (FitForm::Rl, 1.0, 1.0),
        ] {
            let fit = FunctionalFit {
                form,
                alpha,
                beta,
                gamma: None,
                rmse: 0.0,
                fit_range: (0.0, 10.0),
                point_count: 0,
                weights_used: false,
            };
            let (d_star, r_star) = predict_peak(&fit).unwrap();
            // dense grid + golden refinement oracle
            let lo = 0.25 * d_star;
            let hi = 4.0 * d_star;
            let mut best = (lo, fit.eval(lo));
            let n = 2_000_000;
            for i in 0..=n {
                let d = lo + (hi - lo) * i as f64 / n as f64;
                let v = fit.eval(d);
                if v > best.1 {
                    best = (d, v);
                }
            }
            assert!(
                (best.0 - d_star).abs() / d_star < 1e-6,
                "{form}: grid {} vs formula {d_star}",
                best.0
            );
            assert!((best.1 - r_star).abs() / r_star.abs() < 1e-6);
        }
    }

    #[test]
    fn iterated_rlhf_examples() {
        // k = 1 reduces to the RL form value
        let v = iterated_rlhf_prediction(2.0, 0.5, 4.0, 1).unwrap();
        assert_eq!(v, eval_form(FitForm::Rl, 2.0, 0.5, None, 4.0));
        // gain over k = 1 is beta * d * ln k
        let gain = iterated_rlhf_prediction(2.0, 0.5, 4.0, 4).unwrap() - v;
        assert!((gain - 0.5 * 4.0 * 4f64.ln()).abs() < 1e-12);
        assert!((gain - 2.7726).abs() < 1e-4);
        // beta = 0: no gain for any k
        let base = iterated_rlhf_prediction(1.5, 0.0, 2.0, 1).unwrap();
        for k in [2, 8, 64] {
            assert_eq!(iterated_rlhf_prediction(1.5, 0.0, 2.0, k).unwrap(), base);
        }
        assert!(matches!(
            iterated_rlhf_prediction(1.0, 0.5, 0.0, 2),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            iterated_rlhf_prediction(1.0, 0.5, 1.0, 0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn iterated_rlhf_stagewise_oracle() {
        // Under additive d, k stages of d/k each at effective distance d/k:
        // sum of per-stage form values equals the closed form.
        let (alpha, beta, d, k) = (2.0, 0.5, 4.0, 4u64);
        let per_stage = eval_form(FitForm::Rl, alpha, beta, None, d / k as f64);
        let total = per_stage * k as f64;
        let closed = iterated_rlhf_prediction(alpha, beta, d, k).unwrap();
        assert!((total - closed).abs() < 1e-12);
    }

    #[test]
    fn trend_fit_examples() {
        // exactly log-linear
        let caps = [2.0, 4.0, 8.0, 16.0];
        let values: Vec<f64> = caps.iter().map(|c: &f64| 3.0 - 0.7 * c.ln()).collect();
        let (slope, intercept, r2) = coefficient_trend_fit(&caps, &values).unwrap();
        assert!((slope + 0.7).abs() < 1e-12);
        assert!((intercept - 3.0).abs() < 1e-12);
        assert!((r2 - 1.0).abs() < 1e-10);
        // constant values
        let flat = [1.0, 1.0, 1.0, 1.0];
        let (slope, _, _) = coefficient_trend_fit(&caps, &flat).unwrap();
        assert_eq!(slope, 0.0);
        // degenerate
        assert!(matches!(
            coefficient_trend_fit(&[2.0, 2.0], &[1.0, 2.0]),
            Err(Error::Fit(_))
        ));
    }

    #[test]
    fn extrapolation_noiseless_and_noisy() {
        let points = make_points(FitForm::Bon, 1.0, 0.2, None);
        let (fit, held_out) = extrapolation_check(&points, 1.5, FitForm::Bon).unwrap();
        assert!(held_out < 1e-10);
        assert!(fit.fit_range.1 <= 1.5);

        let mut rng = crate::seeding::stream_rng(3, &[79]);
        let noise = Normal::new(0.0, 0.01).unwrap();
        let noisy: Vec<(f64, f64)> = points
            .iter()
            .map(|&(d, r)| (d, r + r.abs() * noise.sample(&mut rng)))
            .collect();
        let (fit, held_out) = extrapolation_check(&noisy, 1.5, FitForm::Bon).unwrap();
        assert!(held_out <= 3.0 * fit.rmse, "held-out {held_out} vs in-sample {}", fit.rmse);
        // all points below the cutoff -> usage error
        assert!(matches!(
            extrapolation_check(&points, 10.0, FitForm::Bon),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn scale_equivariance() {
        let points = make_points(FitForm::Bon, 1.2, 0.3, None);
        let base = fit_bon(&points, None).unwrap();
        for s in [0.25, 2.0, 17.5] {
            let scaled: Vec<(f64, f64)> = points.iter().map(|&(d, r)| (d, s * r)).collect();
            let fit = fit_bon(&scaled, None).unwrap();
            assert!((fit.alpha - s * base.alpha).abs() < 1e-9 * s);
            assert!((fit.beta - s * base.beta).abs() < 1e-9 * s);
        }
    }

    #[test]
    fn weighted_fit_uses_weights() {
        // Two populations; upweighting the second drags the fit toward it.
        let points: Vec<(f64, f64)> = grid(20, 0.2, 3.0)
            .into_iter()
            .map(|d| (d, eval_form(FitForm::Bon, 1.0, 0.1, None, d)))
            .chain(
                grid(20, 0.2, 3.0)
                    .into_iter()
                    .map(|d| (d, eval_form(FitForm::Bon, 2.0, 0.4, None, d))),
            )
            .collect();
        let mut weights = vec![1.0; 40];
        for w in weights.iter_mut().skip(20) {
            *w = 1e6;
        }
        let fit = fit_bon(&points, Some(&weights)).unwrap();
        assert!((fit.alpha - 2.0).abs() < 1e-2);
        assert!(fit.weights_used);
    }
}
