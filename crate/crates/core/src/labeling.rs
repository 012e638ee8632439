//! Synthetic pairwise comparisons labeled by the gold reward model.
//!
//! Each record draws a context uniformly and two independent outcomes from
//! the policy at that context. The outcome with the strictly higher gold
//! score is marked preferred; exact ties (including drawing the same outcome
//! twice) are redrawn so the hard label is always forced by the gold ranking.
//! Soft labels are Bradley-Terry probabilities of the gold score difference
//! and are what recalibration targets.

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};
use crate::seeding::{stream_rng, streams};
use crate::world::{Policy, RewardModel, World};

/// Which side of a comparison is preferred.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PreferredSide {
    A,
    B,
}

impl fmt::Display for PreferredSide {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PreferredSide::A => write!(f, "a"),
            PreferredSide::B => write!(f, "b"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Split {
    Train,
    Holdout,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Split::Train => write!(f, "train"),
            Split::Holdout => write!(f, "holdout"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRecord {
    pub context: usize,
    pub outcome_a: usize,
    pub outcome_b: usize,
    pub hard_label: PreferredSide,
    pub soft_label: f64,
}

/// Gold-labeled comparison dataset with a train/holdout split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonDataset {
    pub records: Vec<ComparisonRecord>,
    /// Indices into `records`.
    pub train: Vec<usize>,
    pub holdout: Vec<usize>,
    pub seed: u64,
}

impl ComparisonDataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn train_records(&self) -> impl Iterator<Item = &ComparisonRecord> {
        self.train.iter().map(|&i| &self.records[i])
    }

    pub fn holdout_records(&self) -> impl Iterator<Item = &ComparisonRecord> {
        self.holdout.iter().map(|&i| &self.records[i])
    }

    /// Same records and holdout, with the train split cut to its first
    /// `train_size` entries.
    ///
    /// Data-size sweeps train on nested prefixes of one master train pool
    /// and evaluate every model on the master holdout, so size comparisons
    /// are paired: evaluation noise cancels and larger sizes are strict
    /// supersets of smaller ones.
    pub fn with_train_size(&self, train_size: usize) -> Result<ComparisonDataset> {
        if train_size < 1 || train_size > self.train.len() {
            return Err(Error::Usage(format!(
                "train size {train_size} out of range 1..={}",
                self.train.len()
            )));
        }
        Ok(ComparisonDataset {
            records: self.records.clone(),
            train: self.train[..train_size].to_vec(),
            holdout: self.holdout.clone(),
            seed: self.seed,
        })
    }

    /// First `count` records re-split at `holdout_fraction`.
    ///
    /// Data-size sweeps use prefixes of one large dataset so that smaller
    /// sizes are strict subsets of larger ones (common random numbers).
    pub fn prefix(&self, count: usize, holdout_fraction: f64) -> Result<ComparisonDataset> {
        if count < 1 || count > self.records.len() {
            return Err(Error::Usage(format!(
                "prefix count {count} out of range 1..={}",
                self.records.len()
            )));
        }
        check_holdout_fraction(holdout_fraction)?;
        let records: Vec<ComparisonRecord> = self.records[..count].to_vec();
        let (train, holdout) = split_indices(count, holdout_fraction);
        Ok(ComparisonDataset {
            records,
            train,
            holdout,
            seed: self.seed,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut wtr = csv::Writer::from_path(path)?;
        wtr.write_record([
            "context_id",
            "outcome_a",
            "outcome_b",
            "hard_label",
            "soft_label",
            "split",
        ])?;
        let mut split_of = vec![Split::Train; self.records.len()];
        for &i in &self.holdout {
            split_of[i] = Split::Holdout;
        }
        for (rec, split) in self.records.iter().zip(&split_of) {
            wtr.write_record([
                rec.context.to_string(),
                rec.outcome_a.to_string(),
                rec.outcome_b.to_string(),
                rec.hard_label.to_string(),
                rec.soft_label.to_string(),
                split.to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<ComparisonDataset> {
        let mut rdr = csv::Reader::from_path(path)?;
        let headers = rdr.headers()?.clone();
        let expected = [
            "context_id",
            "outcome_a",
            "outcome_b",
            "hard_label",
            "soft_label",
            "split",
        ];
        for name in expected {
            if !headers.iter().any(|h| h == name) {
                return Err(Error::Usage(format!("dataset file missing column `{name}`")));
            }
        }
        let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
        let (ci, ai, bi, hi, si, pi) = (
            col("context_id"),
            col("outcome_a"),
            col("outcome_b"),
            col("hard_label"),
            col("soft_label"),
            col("split"),
        );
        let mut records = Vec::new();
        let mut train = Vec::new();
        let mut holdout = Vec::new();
        for (row_idx, row) in rdr.records().enumerate() {
            let row = row?;
            let parse_usize = |i: usize| -> Result<usize> {
                row[i].parse().map_err(|_| {
                    Error::Usage(format!("row {row_idx}: cannot parse `{}`", &row[i]))
                })
            };
            let hard_label = match &row[hi] {
                "a" => PreferredSide::A,
                "b" => PreferredSide::B,
                other => {
                    return Err(Error::Usage(format!(
                        "row {row_idx}: hard_label must be `a` or `b`, got `{other}`"
                    )))
                }
            };
            let soft_label: f64 = row[si]
                .parse()
                .map_err(|_| Error::Usage(format!("row {row_idx}: bad soft_label")))?;
            match &row[pi] {
                "train" => train.push(row_idx),
                "holdout" => holdout.push(row_idx),
                other => {
                    return Err(Error::Usage(format!(
                        "row {row_idx}: split must be `train` or `holdout`, got `{other}`"
                    )))
                }
            }
            records.push(ComparisonRecord {
                context: parse_usize(ci)?,
                outcome_a: parse_usize(ai)?,
                outcome_b: parse_usize(bi)?,
                hard_label,
                soft_label,
            });
        }
        Ok(ComparisonDataset {
            records,
            train,
            holdout,
            seed: 0,
        })
    }
}

/// How hard labels are assigned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LabelMode {
    /// Deterministic: the higher gold score wins.
    #[default]
    Hard,
    /// Stochastic: side `a` wins with probability `soft_label`. Noisier; the
    /// hard-label-matches-gold invariant does not hold in this mode.
    Sampled,
}

const REDRAW_LIMIT: usize = 1000;

/// Bradley-Terry soft label: `sigmoid(gold(a) - gold(b))`.
pub fn soft_label(
    world: &World,
    gold_rm: &RewardModel,
    context: usize,
    outcome_a: usize,
    outcome_b: usize,
) -> f64 {
    let ga = gold_rm.score(world.feature(context, outcome_a));
    let gb = gold_rm.score(world.feature(context, outcome_b));
    sigmoid(ga - gb)
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Generates `count` hard-labeled comparisons; see [`generate_comparisons_with`].
pub fn generate_comparisons(
    world: &World,
    gold_rm: &RewardModel,
    policy: &Policy,
    count: usize,
    holdout_fraction: f64,
    seed: u64,
) -> Result<ComparisonDataset> {
    generate_comparisons_with(
        world,
        gold_rm,
        policy,
        count,
        holdout_fraction,
        seed,
        LabelMode::Hard,
    )
}

pub fn generate_comparisons_with(
    world: &World,
    gold_rm: &RewardModel,
    policy: &Policy,
    count: usize,
    holdout_fraction: f64,
    seed: u64,
    mode: LabelMode,
) -> Result<ComparisonDataset> {
    if count < 1 {
        return Err(Error::Usage("comparison count must be >= 1".into()));
    }
    check_holdout_fraction(holdout_fraction)?;

    let c = world.n_contexts();
    let m = world.n_outcomes();
    // Per-context cumulative probabilities and a gold score table.
    let mut cumsums = Vec::with_capacity(c);
    for ctx in 0..c {
        let mut acc = 0.0;
        let cum: Vec<f64> = policy
            .context_probs(ctx)
            .iter()
            .map(|&p| {
                acc += p;
                acc
            })
            .collect();
        cumsums.push(cum);
    }
    let gold: Vec<f64> = (0..c * m)
        .map(|i| gold_rm.score(world.feature(i / m, i % m)))
        .collect();

    let mut rng = stream_rng(seed, &[streams::LABELING]);
    let mut records = Vec::with_capacity(count);
    for rec_idx in 0..count {
        let context = rng.random_range(0..c);
        let cum = &cumsums[context];
        let mut attempts = 0;
        let (outcome_a, outcome_b) = loop {
            let a = draw_outcome(cum, &mut rng);
            let b = draw_outcome(cum, &mut rng);
            if gold[context * m + a] != gold[context * m + b] {
                break (a, b);
            }
            attempts += 1;
            if attempts >= REDRAW_LIMIT {
                return Err(Error::Generation {
                    record: rec_idx,
                    attempts,
                });
            }
        };
        let ga = gold[context * m + outcome_a];
        let gb = gold[context * m + outcome_b];
        let soft = sigmoid(ga - gb);
        let hard_label = match mode {
            LabelMode::Hard => {
                if ga > gb {
                    PreferredSide::A
                } else {
                    PreferredSide::B
                }
            }
            LabelMode::Sampled => {
                if rng.random::<f64>() < soft {
                    PreferredSide::A
                } else {
                    PreferredSide::B
                }
            }
        };
        records.push(ComparisonRecord {
            context,
            outcome_a,
            outcome_b,
            hard_label,
            soft_label: soft,
        });
    }

    let (train, holdout) = split_indices(count, holdout_fraction);
    Ok(ComparisonDataset {
        records,
        train,
        holdout,
        seed,
    })
}

fn check_holdout_fraction(holdout_fraction: f64) -> Result<()> {
    if !(0.0..1.0).contains(&holdout_fraction) {
        return Err(Error::Usage(format!(
            "holdout_fraction must be in [0, 1), got {holdout_fraction}"
        )));
    }
    Ok(())
}

fn split_indices(count: usize, holdout_fraction: f64) -> (Vec<usize>, Vec<usize>) {
    let train_count = ((count as f64) * (1.0 - holdout_fraction)).round() as usize;
    let train_count = train_count.min(count);
    ((0..train_count).collect(), (train_count..count).collect())
}

fn draw_outcome(cumsum: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random();
    let idx = cumsum.partition_point(|&p| p <= u);
    idx.min(cumsum.len() - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::proxy_rm::normalize;
    use crate::world::{build_world, initial_policy, WorldConfig};

    fn small_world() -> (World, Policy, RewardModel) {
        let cfg = WorldConfig {
            contexts: 4,
            outcomes_per_context: 16,
            features: 4,
            base_logit_sd: 0.3,
            gold_weights: None,
            spurious: None,
        };
        let world = build_world(&cfg, 42).unwrap();
        let init = initial_policy(&world, 1.0).unwrap();
        let gold = normalize(&world.gold_rm(), &world, &init, true).unwrap();
        (world, init, gold)
    }

    #[test]
    fn split_sizes_match_fraction() {
        let (world, init, gold) = small_world();
        let ds = generate_comparisons(&world, &gold, &init, 1000, 0.10, 1).unwrap();
        assert_eq!(ds.train.len(), 900);
        assert_eq!(ds.holdout.len(), 100);
        // train and holdout disjoint and exhaustive
        let mut all: Vec<usize> = ds.train.iter().chain(&ds.holdout).cloned().collect();
        all.sort_unstable();
        assert_eq!(all, (0..1000).collect::<Vec<_>>());
    }

    #[test]
    fn hard_label_matches_gold_ranking() {
        let (world, init, gold) = small_world();
        let ds = generate_comparisons(&world, &gold, &init, 2000, 0.1, 7).unwrap();
        for rec in &ds.records {
            let ga = gold.score(world.feature(rec.context, rec.outcome_a));
            let gb = gold.score(world.feature(rec.context, rec.outcome_b));
            assert_ne!(ga, gb);
            let expect = if ga > gb {
                PreferredSide::A
            } else {
                PreferredSide::B
            };
            assert_eq!(rec.hard_label, expect);
            assert!(rec.soft_label > 0.0 && rec.soft_label < 1.0);
            assert_eq!(rec.soft_label > 0.5, rec.hard_label == PreferredSide::A);
        }
    }

    #[test]
    fn preferred_soft_label_above_half_on_average() {
        let (world, init, gold) = small_world();
        let ds = generate_comparisons(&world, &gold, &init, 500, 0.1, 3).unwrap();
        let mean: f64 = ds
            .records
            .iter()
            .map(|r| match r.hard_label {
                PreferredSide::A => r.soft_label,
                PreferredSide::B => 1.0 - r.soft_label,
            })
            .sum::<f64>()
            / ds.records.len() as f64;
        assert!(mean > 0.5);
    }

    #[test]
    fn deterministic_in_seed() {
        let (world, init, gold) = small_world();
        let a = generate_comparisons(&world, &gold, &init, 300, 0.1, 11).unwrap();
        let b = generate_comparisons(&world, &gold, &init, 300, 0.1, 11).unwrap();
        assert_eq!(a, b);
        let c = generate_comparisons(&world, &gold, &init, 300, 0.1, 12).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn two_outcome_world_always_prefers_same_side() {
        let cfg = WorldConfig {
            contexts: 1,
            outcomes_per_context: 2,
            features: 2,
            base_logit_sd: 0.0,
            gold_weights: Some(vec![1.0, 0.0]),
            spurious: None,
        };
        let world = build_world(&cfg, 5).unwrap();
        let init = initial_policy(&world, 1.0).unwrap();
        let gold = world.gold_rm();
        let ds = generate_comparisons(&world, &gold, &init, 200, 0.0, 1).unwrap();
        let better = if world.feature(0, 0)[0] > world.feature(0, 1)[0] {
            0
        } else {
            1
        };
        for rec in &ds.records {
            let winner = match rec.hard_label {
                PreferredSide::A => rec.outcome_a,
                PreferredSide::B => rec.outcome_b,
            };
            assert_eq!(winner, better);
        }
    }

    #[test]
    fn soft_label_examples() {
        let (world, _init, gold) = small_world();
        // symmetry: p(a,b) + p(b,a) = 1
        let p_ab = soft_label(&world, &gold, 0, 0, 1);
        let p_ba = soft_label(&world, &gold, 0, 1, 0);
        assert!((p_ab + p_ba - 1.0).abs() < 1e-15);
        // equal scores -> 0.5 (same outcome on both sides)
        assert_eq!(soft_label(&world, &gold, 0, 3, 3), 0.5);
        // hand-computed: sigmoid(ln 3) = 3/4
        assert!((sigmoid(3f64.ln()) - 0.75).abs() < 1e-15);
        // large difference saturates
        assert!(sigmoid(20.0) > 1.0 - 1e-8);
    }

    #[test]
    fn rejects_bad_arguments() {
        let (world, init, gold) = small_world();
        assert!(matches!(
            generate_comparisons(&world, &gold, &init, 0, 0.1, 1),
            Err(Error::Usage(_))
        ));
        assert!(matches!(
            generate_comparisons(&world, &gold, &init, 10, 1.0, 1),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn tie_only_world_errors_after_redraw_limit() {
        // Two outcomes with identical gold scores: every pair ties.
        let cfg = WorldConfig {
            contexts: 1,
            outcomes_per_context: 2,
            features: 2,
            base_logit_sd: 0.0,
            gold_weights: Some(vec![0.0, 0.0]),
            spurious: None,
        };
        let world = build_world(&cfg, 0).unwrap();
        let init = initial_policy(&world, 1.0).unwrap();
        let gold = world.gold_rm();
        let err = generate_comparisons(&world, &gold, &init, 5, 0.0, 1).unwrap_err();
        assert!(matches!(err, Error::Generation { record: 0, .. }));
    }

    #[test]
    fn prefix_is_nested_and_resplit() {
        let (world, init, gold) = small_world();
        let ds = generate_comparisons(&world, &gold, &init, 1000, 0.1, 9).unwrap();
        let p = ds.prefix(200, 0.1).unwrap();
        assert_eq!(p.records[..], ds.records[..200]);
        assert_eq!(p.train.len(), 180);
        assert_eq!(p.holdout.len(), 20);
    }

    #[test]
    fn csv_roundtrip() {
        let (world, init, gold) = small_world();
        let ds = generate_comparisons(&world, &gold, &init, 100, 0.2, 4).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("comparisons.csv");
        ds.save(&path).unwrap();
        let back = ComparisonDataset::load(&path).unwrap();
        assert_eq!(back.records, ds.records);
        assert_eq!(back.train, ds.train);
        assert_eq!(back.holdout, ds.holdout);
    }

    #[test]
    fn sampled_mode_disagrees_with_gold_sometimes() {
        let (world, init, gold) = small_world();
        let sampled = generate_comparisons_with(
            &world,
            &gold,
            &init,
            2000,
            0.1,
            13,
            LabelMode::Sampled,
        )
        .unwrap();
        let inconsistent = sampled
            .records
            .iter()
            .filter(|r| {
                let ga = gold.score(world.feature(r.context, r.outcome_a));
                let gb = gold.score(world.feature(r.context, r.outcome_b));
                (ga > gb) != (r.hard_label == PreferredSide::A)
            })
            .count();
        assert!(inconsistent > 0, "sampled labels should flip some pairs");
    }
}
