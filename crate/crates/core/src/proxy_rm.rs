//! Proxy reward-model training, recalibration, and score normalization.
//!
//! A proxy of capacity `k` sees the first `k` entries of a seed-fixed random
//! permutation of the feature indices and nothing else; capacity stands in
//! for model size. Weights are fit by full-batch gradient descent on the
//! pairwise cross-entropy loss with an L2 penalty, which keeps training
//! exactly reproducible and makes iteration budgets directly comparable
//! across dataset sizes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labeling::{sigmoid, ComparisonDataset, PreferredSide};
use crate::seeding::{stream_rng, streams};
use crate::world::{seeded_permutation, Policy, RewardModel, World};

/// Gradient-descent settings for proxy training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// L2 penalty coefficient; the loss carries `l2/2 * |w|^2`. Unregularized
    /// logistic regression diverges on separable comparisons.
    pub l2: f64,
    pub step_size: f64,
    pub max_iters: u64,
    /// Stop when the gradient norm falls below this.
    pub grad_tol: f64,
    /// Seed for the feature-mask permutation; defaults to the training seed.
    /// Sweeps share one mask seed across capacities so masks are nested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_seed: Option<u64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            l2: 1e-4,
            step_size: 0.5,
            max_iters: 10_000,
            grad_tol: 1e-8,
            mask_seed: None,
        }
    }
}

/// Trains a proxy reward model of the given capacity on the train split.
pub fn train_proxy(
    dataset: &ComparisonDataset,
    world: &World,
    capacity: usize,
    config: &TrainConfig,
    seed: u64,
) -> Result<RewardModel> {
    let f = world.n_features();
    if capacity > f {
        return Err(Error::Usage(format!(
            "capacity {capacity} exceeds feature count {f}"
        )));
    }
    if dataset.train.is_empty() {
        return Err(Error::Usage("train split is empty".into()));
    }

    let mask_seed = config.mask_seed.unwrap_or(seed);
    let mut rng = stream_rng(mask_seed, &[streams::MASK_PERMUTATION]);
    let perm = seeded_permutation(f, &mut rng);
    let mut mask: Vec<usize> = perm[..capacity].to_vec();
    mask.sort_unstable();

    let mut weights = vec![0.0; f];
    if capacity > 0 {
        let rows: Vec<f64> = dataset
            .train_records()
            .flat_map(|rec| {
                let fa = world.feature(rec.context, rec.outcome_a);
                let fb = world.feature(rec.context, rec.outcome_b);
                mask.iter().map(move |&j| fa[j] - fb[j])
            })
            .collect();
        let labels: Vec<f64> = dataset
            .train_records()
            .map(|rec| match rec.hard_label {
                PreferredSide::A => 1.0,
                PreferredSide::B => 0.0,
            })
            .collect();
        let w = fit_pairwise_logistic(&rows, &labels, capacity, config)?;
        for (k, &j) in mask.iter().enumerate() {
            weights[j] = w[k];
        }
    }

    Ok(RewardModel {
        weights,
        bias: 0.0,
        feature_mask: mask,
        calibration_temperature: 1.0,
        score_shift: 0.0,
        score_scale: 1.0,
        normalized: false,
    })
}

/// Full-batch gradient descent on `mean CE + l2/2 |w|^2`, fixed step size.
fn fit_pairwise_logistic(
    rows: &[f64],
    labels: &[f64],
    dim: usize,
    config: &TrainConfig,
) -> Result<Vec<f64>> {
    let n = labels.len();
    let inv_n = 1.0 / n as f64;
    let mut w = vec![0.0; dim];
    let mut grad = vec![0.0; dim];
    for iter in 0..config.max_iters {
        for g in grad.iter_mut() {
            *g = 0.0;
        }
        for (i, &y) in labels.iter().enumerate() {
            let x = &rows[i * dim..(i + 1) * dim];
            let z: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum();
            let resid = sigmoid(z) - y;
            for (g, &xj) in grad.iter_mut().zip(x) {
                *g += resid * xj;
            }
        }
        let mut gnorm2 = 0.0;
        for (g, &wj) in grad.iter_mut().zip(&w) {
            *g = *g * inv_n + config.l2 * wj;
            gnorm2 += *g * *g;
        }
        if !gnorm2.is_finite() {
            return Err(Error::numerical(
                "non-finite gradient during proxy training",
                Some(iter),
            ));
        }
        if gnorm2.sqrt() <= config.grad_tol {
            break;
        }
        for (wj, &g) in w.iter_mut().zip(&grad) {
            *wj -= config.step_size * g;
        }
    }
    if w.iter().any(|x| !x.is_finite()) {
        return Err(Error::numerical(
            "non-finite weights after proxy training",
            Some(config.max_iters),
        ));
    }
    Ok(w)
}

/// Mean cross-entropy of the model against hard labels on the holdout split.
pub fn validation_loss(
    rm: &RewardModel,
    dataset: &ComparisonDataset,
    world: &World,
) -> Result<f64> {
    if dataset.holdout.is_empty() {
        return Err(Error::Usage("holdout split is empty".into()));
    }
    let mut total = 0.0;
    for rec in dataset.holdout_records() {
        let z = rm.score(world.feature(rec.context, rec.outcome_a))
            - rm.score(world.feature(rec.context, rec.outcome_b));
        let y = match rec.hard_label {
            PreferredSide::A => 1.0,
            PreferredSide::B => 0.0,
        };
        total += cross_entropy(z, y);
    }
    Ok(total / dataset.holdout.len() as f64)
}

/// Fraction of holdout pairs ranked like the hard label; ties count 0.5.
pub fn accuracy(rm: &RewardModel, dataset: &ComparisonDataset, world: &World) -> Result<f64> {
    if dataset.holdout.is_empty() {
        return Err(Error::Usage("holdout split is empty".into()));
    }
    let mut total = 0.0;
    for rec in dataset.holdout_records() {
        let z = rm.score(world.feature(rec.context, rec.outcome_a))
            - rm.score(world.feature(rec.context, rec.outcome_b));
        let correct = match rec.hard_label {
            PreferredSide::A => z > 0.0,
            PreferredSide::B => z < 0.0,
        };
        if z == 0.0 {
            total += 0.5;
        } else if correct {
            total += 1.0;
        }
    }
    Ok(total / dataset.holdout.len() as f64)
}

/// `y*softplus(-z) + (1-y)*softplus(z)`, the stable pairwise cross-entropy.
fn cross_entropy(z: f64, y: f64) -> f64 {
    y * softplus(-z) + (1.0 - y) * softplus(z)
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Mean cross-entropy of the *calibrated* model against holdout soft labels:
/// `sigmoid(score_diff / calibration_temperature)` vs the soft label.
pub fn calibrated_soft_loss(
    rm: &RewardModel,
    dataset: &ComparisonDataset,
    world: &World,
) -> Result<f64> {
    if dataset.holdout.is_empty() {
        return Err(Error::Usage("holdout split is empty".into()));
    }
    let gamma = 1.0 / rm.calibration_temperature;
    let mut total = 0.0;
    for rec in dataset.holdout_records() {
        let z = rm.score(world.feature(rec.context, rec.outcome_a))
            - rm.score(world.feature(rec.context, rec.outcome_b));
        total += cross_entropy(gamma * z, rec.soft_label);
    }
    Ok(total / dataset.holdout.len() as f64)
}

/// Fits the calibration temperature on holdout soft labels.
///
/// One-dimensional convex minimization over the inverse temperature; the
/// returned model differs only in `calibration_temperature`, so rankings and
/// raw scores are untouched.
pub fn recalibrate(
    rm: &RewardModel,
    dataset: &ComparisonDataset,
    world: &World,
) -> Result<RewardModel> {
    if dataset.holdout.is_empty() {
        return Err(Error::Usage("holdout split is empty".into()));
    }
    let diffs: Vec<f64> = dataset
        .holdout_records()
        .map(|rec| {
            rm.score(world.feature(rec.context, rec.outcome_a))
                - rm.score(world.feature(rec.context, rec.outcome_b))
        })
        .collect();
    if diffs.iter().all(|&z| z == 0.0) {
        return Err(Error::Calibration(
            "all score differences are zero; temperature is unidentifiable".into(),
        ));
    }
    let soft: Vec<f64> = dataset.holdout_records().map(|r| r.soft_label).collect();
    let objective = |gamma: f64| -> f64 {
        diffs
            .iter()
            .zip(&soft)
            .map(|(&z, &y)| cross_entropy(gamma * z, y))
            .sum::<f64>()
            / diffs.len() as f64
    };

    // Golden-section on ln(gamma); the objective is convex in gamma, hence
    // unimodal on the log axis. 220 iterations shrink the bracket far below
    // the 1e-10 tolerance on t for any temperature in [1e-6, 1e6].
    let gamma = golden_min(|lg: f64| objective(lg.exp()), (1e-8f64).ln(), (1e8f64).ln(), 220).exp();
    let best_gamma = if objective(gamma) <= objective(1.0) {
        gamma
    } else {
        1.0
    };
    let mut out = rm.clone();
    out.calibration_temperature = 1.0 / best_gamma;
    Ok(out)
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

/// Exact mean and variance of the model's raw score under
/// (uniform context, outcome ~ policy).
pub fn raw_score_moments(rm: &RewardModel, world: &World, policy: &Policy) -> (f64, f64) {
    let c = world.n_contexts();
    let m = world.n_outcomes();
    let inv_c = 1.0 / c as f64;
    let mut mean = 0.0;
    for ctx in 0..c {
        let probs = policy.context_probs(ctx);
        for out in 0..m {
            mean += inv_c * probs[out] * rm.raw_score(world.feature(ctx, out));
        }
    }
    let mut var = 0.0;
    for ctx in 0..c {
        let probs = policy.context_probs(ctx);
        for out in 0..m {
            let dev = rm.raw_score(world.feature(ctx, out)) - mean;
            var += inv_c * probs[out] * dev * dev;
        }
    }
    (mean, var)
}

/// Recenters the model so the initial policy's expected score is zero;
/// with `unit_variance`, also rescales to variance one (used for the gold
/// model only). Idempotent: shift and scale are recomputed from raw scores.
pub fn normalize(
    rm: &RewardModel,
    world: &World,
    initial_policy: &Policy,
    unit_variance: bool,
) -> Result<RewardModel> {
    let (mean, var) = raw_score_moments(rm, world, initial_policy);
    let mut out = rm.clone();
    out.score_shift = mean;
    if unit_variance {
        // Constant scores leave only summation rounding in `var`.
        if var <= 1e-24 * (1.0 + mean * mean) {
            return Err(Error::Normalization(
                "score variance is zero; cannot rescale to unit variance".into(),
            ));
        }
        out.score_scale = 1.0 / var.sqrt();
    }
    out.normalized = true;
    Ok(out)
}
