//! Best-of-n optimization: analytic KL, the unbiased pool estimator for
//! expected best-of-n scores, and full sweep traces.
//!
//! The estimator reuses one sample pool per context for every `n` in the
//! grid. Sorting the pool by proxy score ascending, the expected gold score
//! of the best-of-n pick is a weighted sum of order statistics with weights
//! `C(i-1, n-1) / C(N, n)`; this equals the exact average over all `C(N, n)`
//! subsets of the gold score at the subset's proxy argmax.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::seeding::{stream_rng, streams};
use crate::trace::{OptMethod, OptimizationTrace, TracePoint};
use crate::world::{Policy, RewardModel, World};

/// Largest pool the exact-combinatorics weights are computed for.
pub const MAX_POOL: usize = 1_000_000;

/// Analytic best-of-n KL in nats: `log n - (n-1)/n`.
pub fn kl_bon(n: u64) -> Result<f64> {
    if n < 1 {
        return Err(Error::Domain(format!("best-of-n requires n >= 1, got {n}")));
    }
    let nf = n as f64;
    Ok(nf.ln() - (nf - 1.0) / nf)
}

/// Expected `(proxy, gold)` score of the best-of-n pick over a sample pool.
///
/// `samples` are `(proxy_score, gold_score)` pairs. Ties in proxy score are
/// broken by pool order, which the pool builder randomizes with its seed.
pub fn bon_unbiased_estimate(samples: &[(f64, f64)], n: usize) -> Result<(f64, f64)> {
    let pool = samples.len();
    if n < 1 {
        return Err(Error::Usage("n must be >= 1".into()));
    }
    if n > pool {
        return Err(Error::Usage(format!(
            "n = {n} exceeds pool size {pool}"
        )));
    }
    if pool > MAX_POOL {
        return Err(Error::Capacity(format!(
            "pool size {pool} exceeds exact-combinatorics limit {MAX_POOL}"
        )));
    }
    let mut order: Vec<usize> = (0..pool).collect();
    order.sort_by(|&a, &b| samples[a].0.total_cmp(&samples[b].0));
    let weights = order_statistic_weights(pool, n);
    let mut proxy = 0.0;
    let mut gold = 0.0;
    for (w, &idx) in weights.iter().zip(&order) {
        proxy += w * samples[idx].0;
        gold += w * samples[idx].1;
    }
    Ok((proxy, gold))
}

/// Weights `C(i-1, n-1) / C(N, n)` for ranks `i = 1..=N` (ascending order),
/// computed by a stable downward recurrence from `w_N = n/N`. Ranks below
/// `n` get weight zero; the weights sum to one.
pub(crate) fn order_statistic_weights(pool: usize, n: usize) -> Vec<f64> {
    let mut weights = vec![0.0; pool];
    let nf = n as f64;
    let mut w = nf / pool as f64;
    weights[pool - 1] = w;
    // w_i = w_{i+1} * (i - n + 1) / i, descending from i = N-1 to n.
    for i in (n..pool).rev() {
        let inf = i as f64;
        w *= (inf - nf + 1.0) / inf;
        weights[i - 1] = w;
    }
    weights
}

/// Best-of-n sweep over `n_grid` with one shared pool per context.
///
/// Per-context estimates run in parallel and are reduced in context order,
/// so the result does not depend on thread count. The reported standard
/// errors are across-context spreads of the per-context estimates.
pub fn bon_curve(
    world: &World,
    initial_policy: &Policy,
    proxy_rm: &RewardModel,
    gold_rm: &RewardModel,
    pool_size: usize,
    n_grid: &[u64],
    seed: u64,
) -> Result<OptimizationTrace> {
    if n_grid.is_empty() {
        return Err(Error::Usage("n_grid is empty".into()));
    }
    if n_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Usage("n_grid must be strictly ascending".into()));
    }
    if n_grid[0] < 1 {
        return Err(Error::Usage("n_grid entries must be >= 1".into()));
    }
    let n_max = *n_grid.last().unwrap() as usize;
    if pool_size < n_max {
        return Err(Error::Usage(format!(
            "pool size {pool_size} smaller than max n {n_max}"
        )));
    }
    if pool_size > MAX_POOL {
        return Err(Error::Capacity(format!(
            "pool size {pool_size} exceeds exact-combinatorics limit {MAX_POOL}"
        )));
    }

    let contexts = world.n_contexts();
    // per_context[ctx] = (proxy, gold) estimate per grid point
    let per_context: Vec<Result<Vec<(f64, f64)>>> = (0..contexts)
        .into_par_iter()
        .map(|ctx| context_estimates(world, initial_policy, proxy_rm, gold_rm, pool_size, n_grid, seed, ctx))
        .collect();

    let mut estimates = Vec::with_capacity(contexts);
    for res in per_context {
        estimates.push(res?);
    }

    let inv_c = 1.0 / contexts as f64;
    let mut points = Vec::with_capacity(n_grid.len());
    for (gi, &n) in n_grid.iter().enumerate() {
        let mut proxy_mean = 0.0;
        let mut gold_mean = 0.0;
        for est in &estimates {
            proxy_mean += inv_c * est[gi].0;
            gold_mean += inv_c * est[gi].1;
        }
        let (mut proxy_var, mut gold_var) = (0.0, 0.0);
        for est in &estimates {
            proxy_var += (est[gi].0 - proxy_mean).powi(2);
            gold_var += (est[gi].1 - gold_mean).powi(2);
        }
        let (proxy_se, gold_se) = if contexts > 1 {
            let denom = (contexts * (contexts - 1)) as f64;
            ((proxy_var / denom).sqrt(), (gold_var / denom).sqrt())
        } else {
            (0.0, 0.0)
        };
        let kl = kl_bon(n)?;
        points.push(TracePoint {
            step_or_n: n,
            kl_nats: kl,
            d: kl.sqrt(),
            proxy_score: proxy_mean,
            gold_score: gold_mean,
            proxy_se,
            gold_se,
        });
    }

    Ok(OptimizationTrace {
        method: OptMethod::Bon,
        experiment_id: String::new(),
        seed,
        points,
    })
}

#[allow(clippy::too_many_arguments)]
fn context_estimates(
    world: &World,
    initial_policy: &Policy,
    proxy_rm: &RewardModel,
    gold_rm: &RewardModel,
    pool_size: usize,
    n_grid: &[u64],
    seed: u64,
    ctx: usize,
) -> Result<Vec<(f64, f64)>> {
    use rand::Rng;
    let mut rng = stream_rng(seed, &[streams::BON_POOL, ctx as u64]);
    let probs = initial_policy.context_probs(ctx);
    let mut cum = Vec::with_capacity(probs.len());
    let mut acc = 0.0;
    for &p in probs {
        acc += p;
        cum.push(acc);
    }
    // Score each distinct outcome once, then index the pool into it.
    let m = world.n_outcomes();
    let proxy_scores: Vec<f64> = (0..m).map(|o| proxy_rm.score(world.feature(ctx, o))).collect();
    let gold_scores: Vec<f64> = (0..m).map(|o| gold_rm.score(world.feature(ctx, o))).collect();

    let mut pool: Vec<(f64, f64)> = Vec::with_capacity(pool_size);
    for _ in 0..pool_size {
        let u: f64 = rng.random();
        let idx = cum.partition_point(|&p| p <= u).min(m - 1);
        pool.push((proxy_scores[idx], gold_scores[idx]));
    }
    // The i.i.d. draw order doubles as the seed-fixed tie-break order.
    pool.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut out = Vec::with_capacity(n_grid.len());
    for &n in n_grid {
        let weights = order_statistic_weights(pool_size, n as usize);
        let mut proxy = 0.0;
        let mut gold = 0.0;
        for (w, s) in weights.iter().zip(&pool) {
            proxy += w * s.0;
            gold += w * s.1;
        }
        out.push((proxy, gold));
    }
    Ok(out)
}
