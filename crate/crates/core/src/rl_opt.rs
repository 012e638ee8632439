//! KL-tracked policy optimization against the proxy reward on exact
//! categorical policies.
//!
//! The optimizer is mirror ascent on the penalized objective
//! `E_pi[r_proxy] - lambda * KL(pi || pi_init)`: each step multiplies the
//! policy by `exp(eta * (r - lambda * log(pi/pi_init)))` per context and
//! renormalizes. With `lambda = 0` the iterates stay on the exponential-tilt
//! path through the initial policy, so expected proxy reward and KL from the
//! start are both exactly non-decreasing. With `lambda > 0` the update is a
//! linear contraction in logit space toward `pi* ~ pi_init * exp(r/lambda)`.
//!
//! All recorded quantities are exact finite-space expectations; RL traces
//! carry no Monte Carlo error.
//!
//! [`run_rl`] damps the step size to `eta / (1 + eta*lambda)` (the proximal
//! form of the same update). At `lambda = 0` this is the plain step; for
//! `lambda > 0` it makes the logit-space iteration a contraction for every
//! penalty, where the raw update diverges once `eta*lambda > 2`. The fixed
//! point is unchanged.

use crate::error::{Error, Result};
use crate::trace::{OptMethod, OptimizationTrace, TracePoint};
use crate::world::{Policy, RewardModel, World};

/// One mirror-ascent step. The input policy must have full support.
pub fn rl_step(
    world: &World,
    policy: &Policy,
    proxy_rm: &RewardModel,
    initial_policy: &Policy,
    eta: f64,
    lambda: f64,
) -> Result<Policy> {
    check_step_params(eta, lambda)?;
    if !policy.has_full_support() {
        return Err(Error::Usage("policy must have full support".into()));
    }
    let rewards = score_table(world, proxy_rm);
    let mut out = policy.clone();
    let m = world.n_outcomes();
    for ctx in 0..world.n_contexts() {
        let init = initial_policy.context_probs(ctx).to_vec();
        let row = out.context_probs_mut(ctx);
        let r = &rewards[ctx * m..(ctx + 1) * m];
        step_context(row, r, &init, eta, lambda)?;
    }
    Ok(out)
}

fn check_step_params(eta: f64, lambda: f64) -> Result<()> {
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(Error::Domain(format!(
            "learning rate must be finite and > 0, got {eta}"
        )));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::Domain(format!(
            "kl penalty must be finite and >= 0, got {lambda}"
        )));
    }
    Ok(())
}

fn step_context(probs: &mut [f64], rewards: &[f64], init: &[f64], eta: f64, lambda: f64) -> Result<()> {
    let mut logits: Vec<f64> = probs
        .iter()
        .zip(rewards)
        .zip(init)
        .map(|((&p, &r), &p0)| {
            let lp = p.ln();
            lp + eta * (r - lambda * (lp - p0.ln()))
        })
        .collect();
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::numerical(
            format!("non-finite policy update at eta={eta}, max logit={max}"),
            None,
        ));
    }
    let mut sum = 0.0;
    for l in logits.iter_mut() {
        *l = (*l - max).exp();
        sum += *l;
    }
    for (p, l) in probs.iter_mut().zip(&logits) {
        *p = l / sum;
    }
    Ok(())
}

/// Exact KL from the initial policy in nats, averaged uniformly over contexts.
pub fn kl_from_init(policy: &Policy, initial_policy: &Policy) -> Result<f64> {
    if policy.n_contexts() != initial_policy.n_contexts()
        || policy.n_outcomes() != initial_policy.n_outcomes()
    {
        return Err(Error::Domain("policy shapes do not match".into()));
    }
    let mut total = 0.0;
    for ctx in 0..policy.n_contexts() {
        let p = policy.context_probs(ctx);
        let q = initial_policy.context_probs(ctx);
        for (&pi, &qi) in p.iter().zip(q) {
            if pi > 0.0 {
                if qi <= 0.0 {
                    return Err(Error::Domain(
                        "initial policy lacks support where policy has mass".into(),
                    ));
                }
                total += pi * (pi / qi).ln();
            }
        }
    }
    let kl = total / policy.n_contexts() as f64;
    // Exact-zero case accumulates tiny negative rounding.
    Ok(if kl < 0.0 && kl > -1e-12 { 0.0 } else { kl })
}

/// Runs mirror ascent for `steps` steps, recording every `record_every`
/// steps (plus the start and the final step).
#[allow(clippy::too_many_arguments)]
pub fn run_rl(
    world: &World,
    proxy_rm: &RewardModel,
    gold_rm: &RewardModel,
    initial_policy: &Policy,
    steps: u64,
    eta: f64,
    lambda: f64,
    record_every: u64,
) -> Result<OptimizationTrace> {
    if steps < 1 {
        return Err(Error::Usage("steps must be >= 1".into()));
    }
    if record_every < 1 {
        return Err(Error::Usage("record_every must be >= 1".into()));
    }
    check_step_params(eta, lambda)?;
    if !initial_policy.has_full_support() {
        return Err(Error::Usage("initial policy must have full support".into()));
    }

    let c = world.n_contexts();
    let m = world.n_outcomes();
    let proxy = score_table(world, proxy_rm);
    let gold = score_table(world, gold_rm);
    let init_log: Vec<f64> = (0..c)
        .flat_map(|ctx| initial_policy.context_probs(ctx).iter().map(|p| p.ln()))
        .collect();

    // Iterate in logit space; logits stay finite even where materialized
    // probabilities would underflow.
    let mut logits = init_log.clone();
    let mut points = Vec::new();
    let mut record = |logits: &[f64], step: u64| {
        let mut kl = 0.0;
        let mut ep = 0.0;
        let mut eg = 0.0;
        let inv_c = 1.0 / c as f64;
        for ctx in 0..c {
            let row = &logits[ctx * m..(ctx + 1) * m];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
            for x in 0..m {
                let lp = row[x] - lse;
                let p = lp.exp();
                if p > 0.0 {
                    kl += inv_c * p * (lp - init_log[ctx * m + x]);
                    ep += inv_c * p * proxy[ctx * m + x];
                    eg += inv_c * p * gold[ctx * m + x];
                }
            }
        }
        if kl < 0.0 && kl > -1e-12 {
            kl = 0.0;
        }
        points.push(TracePoint {
            step_or_n: step,
            kl_nats: kl,
            d: kl.sqrt(),
            proxy_score: ep,
            gold_score: eg,
            proxy_se: 0.0,
            gold_se: 0.0,
        });
    };

    let eta_eff = eta / (1.0 + eta * lambda);
    record(&logits, 0);
    for t in 1..=steps {
        for ctx in 0..c {
            let row = &mut logits[ctx * m..(ctx + 1) * m];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
            for x in 0..m {
                let lp = row[x] - lse;
                row[x] =
                    lp + eta_eff * (proxy[ctx * m + x] - lambda * (lp - init_log[ctx * m + x]));
            }
        }
        if logits.iter().any(|l| !l.is_finite()) {
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            return Err(Error::numerical(
                format!("non-finite policy update at eta={eta}, max logit={max}"),
                Some(t),
            ));
        }
        if t % record_every == 0 || t == steps {
            record(&logits, t);
        }
    }

    Ok(OptimizationTrace {
        method: OptMethod::Rl,
        experiment_id: String::new(),
        seed: 0,
        points,
    })
}

/// Final policy of a mirror-ascent run (same dynamics as [`run_rl`]).
pub fn run_rl_policy(
    world: &World,
    proxy_rm: &RewardModel,
    initial_policy: &Policy,
    steps: u64,
    eta: f64,
    lambda: f64,
) -> Result<Policy> {
    check_step_params(eta, lambda)?;
    let c = world.n_contexts();
    let m = world.n_outcomes();
    let proxy = score_table(world, proxy_rm);
    let init_log: Vec<f64> = (0..c)
        .flat_map(|ctx| initial_policy.context_probs(ctx).iter().map(|p| p.ln()))
        .collect();
    let mut logits = init_log.clone();
    let eta_eff = eta / (1.0 + eta * lambda);
    for t in 1..=steps {
        for ctx in 0..c {
            let row = &mut logits[ctx * m..(ctx + 1) * m];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
            for x in 0..m {
                let lp = row[x] - lse;
                row[x] =
                    lp + eta_eff * (proxy[ctx * m + x] - lambda * (lp - init_log[ctx * m + x]));
            }
        }
        if logits.iter().any(|l| !l.is_finite()) {
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            return Err(Error::numerical(
                format!("non-finite policy update at eta={eta}, max logit={max}"),
                Some(t),
            ));
        }
    }
    let mut policy = initial_policy.clone();
    for ctx in 0..c {
        let row = &logits[ctx * m..(ctx + 1) * m];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        let exps: Vec<f64> = row.iter().map(|l| {
            let e = (l - max).exp();
            sum += e;
            e
        }).collect();
        let out = policy.context_probs_mut(ctx);
        for (p, e) in out.iter_mut().zip(&exps) {
            *p = e / sum;
        }
    }
    Ok(policy)
}

/// Closed-form optimum of the penalized objective: `pi* ~ pi_init * exp(r/lambda)`.
pub fn kl_regularized_optimum(
    world: &World,
    proxy_rm: &RewardModel,
    initial_policy: &Policy,
    lambda: f64,
) -> Result<Policy> {
    if !(lambda > 0.0) {
        return Err(Error::Domain("closed-form optimum requires lambda > 0".into()));
    }
    let m = world.n_outcomes();
    let rewards = score_table(world, proxy_rm);
    let mut policy = initial_policy.clone();
    for ctx in 0..world.n_contexts() {
        let row = policy.context_probs_mut(ctx);
        let logits: Vec<f64> = row
            .iter()
            .zip(&rewards[ctx * m..(ctx + 1) * m])
            .map(|(&p, &r)| p.ln() + r / lambda)
            .collect();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        let exps: Vec<f64> = logits.iter().map(|l| {
            let e = (l - max).exp();
            sum += e;
            e
        }).collect();
        for (p, e) in row.iter_mut().zip(&exps) {
            *p = e / sum;
        }
    }
    Ok(policy)
}

/// Largest per-context total-variation distance between two policies.
pub fn max_total_variation(a: &Policy, b: &Policy) -> f64 {
    let mut worst: f64 = 0.0;
    for ctx in 0..a.n_contexts() {
        let tv: f64 = a
            .context_probs(ctx)
            .iter()
            .zip(b.context_probs(ctx))
            .map(|(&x, &y)| (x - y).abs())
            .sum::<f64>()
            / 2.0;
        worst = worst.max(tv);
    }
    worst
}

/// One trace per KL-penalty value, for frontier overlays.
#[allow(clippy::too_many_arguments)]
pub fn kl_penalty_frontier(
    world: &World,
    proxy_rm: &RewardModel,
    gold_rm: &RewardModel,
    initial_policy: &Policy,
    lambda_grid: &[f64],
    steps: u64,
    eta: f64,
    record_every: u64,
) -> Result<Vec<(f64, OptimizationTrace)>> {
    if lambda_grid.is_empty() {
        return Err(Error::Usage("lambda grid is empty".into()));
    }
    lambda_grid
        .iter()
        .map(|&lambda| {
            run_rl(
                world,
                proxy_rm,
                gold_rm,
                initial_policy,
                steps,
                eta,
                lambda,
                record_every,
            )
            .map(|trace| (lambda, trace))
        })
        .collect()
}

fn score_table(world: &World, rm: &RewardModel) -> Vec<f64> {
    let m = world.n_outcomes();
    (0..world.n_contexts() * m)
        .map(|i| rm.score(world.feature(i / m, i % m)))
        .collect()
}
