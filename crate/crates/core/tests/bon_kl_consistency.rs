//! The analytic best-of-n KL against the exact KL of the induced
//! distribution on a large near-uniform discrete world.
//!
//! With outcomes sorted ascending by proxy score and `F` the cumulative base
//! probability, best-of-n puts mass `F(i)^n - F(i-1)^n` on outcome `i`.

use overopt::bon::kl_bon;
use overopt::world::{build_world, initial_policy, WorldConfig};

#[test]
fn analytic_kl_matches_exact_discrete_bon_kl() {
    let cfg = WorldConfig {
        contexts: 1,
        outcomes_per_context: 4096,
        features: 4,
        base_logit_sd: 1e-3, // near-uniform
        gold_weights: None,
        spurious: None,
    };
    let world = build_world(&cfg, 12).unwrap();
    let init = initial_policy(&world, 1.0).unwrap();
    let proxy = world.gold_rm();

    let m = world.n_outcomes();
    let mut order: Vec<usize> = (0..m).collect();
    let scores: Vec<f64> = (0..m).map(|o| proxy.raw_score(world.feature(0, o))).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // distinct proxy scores are a precondition of the closed form
    for w in order.windows(2) {
        assert_ne!(scores[w[0]], scores[w[1]]);
    }
    let base: Vec<f64> = order
        .iter()
        .map(|&o| init.context_probs(0)[o])
        .collect();

    for n in [2u64, 4, 16] {
        let mut cum_prev: f64 = 0.0;
        let mut cum: f64 = 0.0;
        let mut kl = 0.0;
        for &p in &base {
            cum += p;
            let bon_p = cum.powf(n as f64) - cum_prev.powf(n as f64);
            if bon_p > 0.0 {
                kl += bon_p * (bon_p / p).ln();
            }
            cum_prev = cum;
        }
        let analytic = kl_bon(n).unwrap();
        assert!(
            (kl - analytic).abs() < 0.05,
            "n={n}: exact {kl} vs analytic {analytic}"
        );
    }
}
