//! Synthetic environment: contexts, outcome feature vectors, the gold reward
//! model, and the initial policy.
//!
//! A [`World`] is a finite table of `contexts x outcomes_per_context` abstract
//! outcomes, each carrying a feature vector. The gold reward is a known linear
//! function of the features, so every expectation an experiment needs can be
//! computed exactly by summation.
//!
//! ## Spurious features
//!
//! With a [`SpuriousSpec`], a block of feature columns is rebuilt so that the
//! proxy-vs-gold relationship breaks down under heavy selection. Each spurious
//! column holds `signal + noise`, where `signal` is the gold contribution of
//! the ordinary features. On the initial distribution these columns are
//! excellent predictors of gold reward. Each spurious column also gets a
//! hidden companion column holding `max(0, value - clip)`, its excess beyond
//! the clip threshold, which carries a *negative* gold weight. Past the clip,
//! extra spurious feature value therefore costs gold score: the correlation a
//! proxy learned on-distribution inverts in the selection tail. A
//! high-capacity proxy that can see the companion columns learns the
//! exception and stays robust; a low-capacity one that only sees the spurious
//! column overoptimizes.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};
use crate::seeding::{stream_rng, streams};

/// Spurious-feature block: columns that predict gold reward on-distribution
/// but invert beyond the clip threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpuriousSpec {
    /// Number of spurious columns. Each takes one extra hidden companion
    /// column, so `2 * count` feature slots are consumed.
    pub count: usize,
    /// Standard deviation of the independent noise added to the gold signal.
    pub noise_sd: f64,
    /// Threshold beyond which extra spurious feature value stops tracking
    /// gold reward and starts costing it.
    pub clip: f64,
    /// Gold-weight magnitude on each companion (excess) column.
    pub penalty: f64,
}

impl Default for SpuriousSpec {
    fn default() -> Self {
        SpuriousSpec {
            count: 4,
            noise_sd: 0.5,
            clip: 1.25,
            penalty: 1.5,
        }
    }
}

/// World-build configuration. Flat key-value document; see `WorldConfig` JSON
/// in the docs for the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub contexts: usize,
    pub outcomes_per_context: usize,
    pub features: usize,
    /// Standard deviation of per-outcome base logits; 0 gives a uniform
    /// initial policy.
    #[serde(default = "default_base_logit_sd")]
    pub base_logit_sd: f64,
    /// Explicit gold weights (length `features`). Only valid without a
    /// spurious block; by default weights are generated from the seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spurious: Option<SpuriousSpec>,
}

fn default_base_logit_sd() -> f64 {
    0.5
}

impl WorldConfig {
    fn validate(&self) -> Result<()> {
        if self.contexts < 1 {
            return Err(Error::config("contexts", "must be >= 1"));
        }
        if self.outcomes_per_context < 2 {
            return Err(Error::config("outcomes_per_context", "must be >= 2"));
        }
        if self.features < 2 {
            return Err(Error::config("features", "must be >= 2"));
        }
        if !self.base_logit_sd.is_finite() || self.base_logit_sd < 0.0 {
            return Err(Error::config("base_logit_sd", "must be finite and >= 0"));
        }
        if let Some(w) = &self.gold_weights {
            if w.len() != self.features {
                return Err(Error::config(
                    "gold_weights",
                    format!("length {} does not match features {}", w.len(), self.features),
                ));
            }
            if w.iter().any(|x| !x.is_finite()) {
                return Err(Error::config("gold_weights", "must be finite"));
            }
            if self.spurious.is_some() {
                return Err(Error::config(
                    "gold_weights",
                    "explicit weights cannot be combined with a spurious block",
                ));
            }
        }
        if let Some(s) = &self.spurious {
            if s.count < 1 {
                return Err(Error::config("spurious.count", "must be >= 1 when present"));
            }
            if 2 * s.count >= self.features {
                return Err(Error::config(
                    "spurious.count",
                    format!(
                        "spurious block needs 2*count < features ({} slots of {})",
                        2 * s.count,
                        self.features
                    ),
                ));
            }
            if !(s.noise_sd > 0.0) || !s.noise_sd.is_finite() {
                return Err(Error::config("spurious.noise_sd", "must be finite and > 0"));
            }
            if !s.clip.is_finite() {
                return Err(Error::config("spurious.clip", "must be finite"));
            }
            if !(s.penalty >= 0.0) || !s.penalty.is_finite() {
                return Err(Error::config("spurious.penalty", "must be finite and >= 0"));
            }
        }
        Ok(())
    }
}

/// Finite synthetic environment. Immutable after construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub config: WorldConfig,
    pub seed: u64,
    /// Feature table, `[context][outcome][feature]` flattened.
    features: Vec<f64>,
    gold_weights: Vec<f64>,
    /// Base logits for the initial policy, `[context][outcome]` flattened.
    base_logits: Vec<f64>,
}

impl World {
    pub fn n_contexts(&self) -> usize {
        self.config.contexts
    }

    pub fn n_outcomes(&self) -> usize {
        self.config.outcomes_per_context
    }

    pub fn n_features(&self) -> usize {
        self.config.features
    }

    pub fn gold_weights(&self) -> &[f64] {
        &self.gold_weights
    }

    pub fn feature(&self, context: usize, outcome: usize) -> &[f64] {
        let f = self.config.features;
        let base = (context * self.config.outcomes_per_context + outcome) * f;
        &self.features[base..base + f]
    }

    pub fn base_logit(&self, context: usize, outcome: usize) -> f64 {
        self.base_logits[context * self.config.outcomes_per_context + outcome]
    }

    /// Indices of the ordinary (gold-carrying, i.i.d. normal) features.
    pub fn real_indices(&self) -> std::ops::Range<usize> {
        match &self.config.spurious {
            Some(s) => 0..self.config.features - 2 * s.count,
            None => 0..self.config.features,
        }
    }

    /// Indices of the spurious (signal + noise) feature columns.
    pub fn spurious_indices(&self) -> std::ops::Range<usize> {
        match &self.config.spurious {
            Some(s) => {
                let f = self.config.features;
                f - 2 * s.count..f - s.count
            }
            None => 0..0,
        }
    }

    /// Indices of the hidden companion (excess) columns; `companion_of`
    /// maps a spurious index to its companion.
    pub fn companion_indices(&self) -> std::ops::Range<usize> {
        match &self.config.spurious {
            Some(s) => {
                let f = self.config.features;
                f - s.count..f
            }
            None => 0..0,
        }
    }

    pub fn companion_of(&self, spurious_index: usize) -> Option<usize> {
        let spur = self.spurious_indices();
        if spur.contains(&spurious_index) {
            let s = self.config.spurious.as_ref().unwrap();
            Some(spurious_index + s.count)
        } else {
            None
        }
    }

    /// The gold reward model in raw (unnormalized) form.
    pub fn gold_rm(&self) -> RewardModel {
        RewardModel::linear(self.gold_weights.clone(), 0.0)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = WorldFile {
            version: WORLD_FILE_VERSION,
            world: self.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<World> {
        let file: WorldFile = serde_json::from_str(text)?;
        if file.version != WORLD_FILE_VERSION {
            return Err(Error::Usage(format!(
                "unsupported world file version {} (expected {})",
                file.version, WORLD_FILE_VERSION
            )));
        }
        Ok(file.world)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<World> {
        World::from_json(&std::fs::read_to_string(path)?)
    }
}

const WORLD_FILE_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct WorldFile {
    version: u32,
    #[serde(flatten)]
    world: World,
}

/// Builds a world deterministically from `(config, seed)`.
pub fn build_world(config: &WorldConfig, seed: u64) -> Result<World> {
    config.validate()?;
    let c = config.contexts;
    let m = config.outcomes_per_context;
    let f = config.features;
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");

    // Ordinary features first: one stream, fixed draw order, so the i.i.d.
    // block is unaffected by the spurious knobs.
    let mut features = vec![0.0; c * m * f];
    {
        let mut rng = stream_rng(seed, &[streams::WORLD_FEATURES]);
        for v in features.iter_mut() {
            *v = std_normal.sample(&mut rng);
        }
    }

    let gold_weights = match (&config.gold_weights, &config.spurious) {
        (Some(w), _) => w.clone(),
        (None, None) => {
            // Random unit-norm direction.
            let mut rng = stream_rng(seed, &[streams::WORLD_GOLD_WEIGHTS]);
            let mut w: Vec<f64> = (0..f).map(|_| std_normal.sample(&mut rng)).collect();
            let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(Error::config("gold_weights", "degenerate zero draw"));
            }
            for x in w.iter_mut() {
                *x /= norm;
            }
            w
        }
        (None, Some(s)) => {
            // Equal weight on ordinary features (unit-variance signal),
            // zero on spurious columns, -penalty on each companion column.
            let n_real = f - 2 * s.count;
            let mut w = vec![0.0; f];
            for x in w.iter_mut().take(n_real) {
                *x = 1.0 / (n_real as f64).sqrt();
            }
            for x in w.iter_mut().skip(f - s.count) {
                *x = -s.penalty;
            }
            w
        }
    };

    if let Some(s) = &config.spurious {
        let n_real = f - 2 * s.count;
        let noise = Normal::new(0.0, s.noise_sd).expect("validated sd");
        let mut rng = stream_rng(seed, &[streams::WORLD_SPURIOUS_NOISE]);
        for ctx in 0..c {
            for out in 0..m {
                let base = (ctx * m + out) * f;
                let signal: f64 = (0..n_real)
                    .map(|j| gold_weights[j] * features[base + j])
                    .sum();
                for k in 0..s.count {
                    let value = signal + noise.sample(&mut rng);
                    features[base + n_real + k] = value;
                    features[base + n_real + s.count + k] = (value - s.clip).max(0.0);
                }
            }
        }
    }

    let mut base_logits = vec![0.0; c * m];
    if config.base_logit_sd > 0.0 {
        let dist = Normal::new(0.0, config.base_logit_sd).expect("validated sd");
        let mut rng = stream_rng(seed, &[streams::WORLD_BASE_LOGITS]);
        for v in base_logits.iter_mut() {
            *v = dist.sample(&mut rng);
        }
    }

    debug_assert!(features.iter().all(|v| v.is_finite()));
    Ok(World {
        config: config.clone(),
        seed,
        features,
        gold_weights,
        base_logits,
    })
}

/// Exact categorical policy: one probability vector per context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    n_contexts: usize,
    n_outcomes: usize,
    /// `[context][outcome]` flattened; each row sums to 1.
    probs: Vec<f64>,
    pub temperature: f64,
}

impl Policy {
    pub fn from_probs(n_contexts: usize, n_outcomes: usize, probs: Vec<f64>) -> Policy {
        assert_eq!(probs.len(), n_contexts * n_outcomes);
        Policy {
            n_contexts,
            n_outcomes,
            probs,
            temperature: 1.0,
        }
    }

    pub fn n_contexts(&self) -> usize {
        self.n_contexts
    }

    pub fn n_outcomes(&self) -> usize {
        self.n_outcomes
    }

    pub fn context_probs(&self, context: usize) -> &[f64] {
        &self.probs[context * self.n_outcomes..(context + 1) * self.n_outcomes]
    }

    pub(crate) fn context_probs_mut(&mut self, context: usize) -> &mut [f64] {
        &mut self.probs[context * self.n_outcomes..(context + 1) * self.n_outcomes]
    }

    /// Full support: every outcome has strictly positive probability.
    pub fn has_full_support(&self) -> bool {
        self.probs.iter().all(|&p| p > 0.0)
    }
}

/// Softmax of the world's base logits at `temperature`. Full support.
pub fn initial_policy(world: &World, temperature: f64) -> Result<Policy> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::Domain(format!(
            "policy temperature must be finite and > 0, got {temperature}"
        )));
    }
    let c = world.n_contexts();
    let m = world.n_outcomes();
    let mut probs = vec![0.0; c * m];
    for ctx in 0..c {
        let logits = &world.base_logits[ctx * m..(ctx + 1) * m];
        let row = &mut probs[ctx * m..(ctx + 1) * m];
        softmax_into(logits, temperature, row);
    }
    Ok(Policy {
        n_contexts: c,
        n_outcomes: m,
        probs,
        temperature,
    })
}

fn softmax_into(logits: &[f64], temperature: f64, out: &mut [f64]) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &l) in out.iter_mut().zip(logits) {
        let e = ((l - max) / temperature).exp();
        *o = e;
        sum += e;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// Linear reward model over (a masked subset of) the feature vector.
///
/// `score = score_scale * (masked_weights . features + bias - score_shift)`.
/// The calibration temperature rescales score *differences* in probability
/// space only; it never enters `score` itself, so best-of-n and RL see the
/// same ranking before and after recalibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardModel {
    /// Full-length weight vector; entries off the mask are zero.
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Sorted indices of the visible features.
    pub feature_mask: Vec<usize>,
    pub calibration_temperature: f64,
    pub score_shift: f64,
    pub score_scale: f64,
    /// Set by `proxy_rm::normalize`; required by `gold_score`.
    #[serde(default)]
    pub normalized: bool,
}

impl RewardModel {
    /// Full-mask linear model with no shift/scale.
    pub fn linear(weights: Vec<f64>, bias: f64) -> RewardModel {
        let mask = (0..weights.len()).collect();
        RewardModel {
            weights,
            bias,
            feature_mask: mask,
            calibration_temperature: 1.0,
            score_shift: 0.0,
            score_scale: 1.0,
            normalized: false,
        }
    }

    pub fn capacity(&self) -> usize {
        self.feature_mask.len()
    }

    /// Raw masked dot product plus bias, before shift and scale.
    pub fn raw_score(&self, features: &[f64]) -> f64 {
        let dot: f64 = self
            .feature_mask
            .iter()
            .map(|&j| self.weights[j] * features[j])
            .sum();
        dot + self.bias
    }

    pub fn score(&self, features: &[f64]) -> f64 {
        self.score_scale * (self.raw_score(features) - self.score_shift)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&RewardModelFile {
            version: RM_FILE_VERSION,
            model: self.clone(),
            train_config: None,
        })?)
    }

    pub fn to_json_with_config(&self, train_config: &crate::proxy_rm::TrainConfig) -> Result<String> {
        Ok(serde_json::to_string_pretty(&RewardModelFile {
            version: RM_FILE_VERSION,
            model: self.clone(),
            train_config: Some(train_config.clone()),
        })?)
    }

    pub fn from_json(text: &str) -> Result<RewardModel> {
        let file: RewardModelFile = serde_json::from_str(text)?;
        if file.version != RM_FILE_VERSION {
            return Err(Error::Usage(format!(
                "unsupported reward model file version {} (expected {})",
                file.version, RM_FILE_VERSION
            )));
        }
        Ok(file.model)
    }

    pub fn save(&self, path: &Path, train_config: Option<&crate::proxy_rm::TrainConfig>) -> Result<()> {
        let text = match train_config {
            Some(cfg) => self.to_json_with_config(cfg)?,
            None => self.to_json()?,
        };
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<RewardModel> {
        RewardModel::from_json(&std::fs::read_to_string(path)?)
    }
}

const RM_FILE_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct RewardModelFile {
    version: u32,
    #[serde(flatten)]
    model: RewardModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    train_config: Option<crate::proxy_rm::TrainConfig>,
}

/// Gold score of one outcome under a gold model normalized against the
/// initial policy (mean 0, unit variance).
pub fn gold_score(
    world: &World,
    gold_rm: &RewardModel,
    context: usize,
    outcome: usize,
) -> Result<f64> {
    if !gold_rm.normalized {
        return Err(Error::Usage(
            "gold model must be normalized against the initial policy first".into(),
        ));
    }
    Ok(gold_rm.score(world.feature(context, outcome)))
}

/// Convenience used throughout: permutation of `0..n` from a seeded stream.
pub(crate) fn seeded_permutation(n: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    // Fisher-Yates
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        perm.swap(i, j);
    }
    perm
}
