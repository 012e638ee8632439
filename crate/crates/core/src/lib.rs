//! A desk-scale laboratory for reward-model overoptimization.
//!
//! Everything here runs on fully synthetic ingredients: a finite world of
//! contexts and outcomes with a known linear gold reward, exact categorical
//! policies, proxy reward models trained on gold-labeled comparisons, and two
//! optimizers (best-of-n selection and mirror-ascent RL) whose KL budgets are
//! tracked analytically or exactly. On top of that sit the Goodhart closed
//! forms and the scaling-law fits that summarize how far a proxy can be
//! pushed before the gold score turns over.
//!
//! The crate is deterministic end to end: every random draw flows from an
//! explicit seed, expectations over the finite outcome space are computed by
//! summation rather than sampling wherever the interface promises exactness,
//! and parallel reductions are ordered so results do not depend on thread
//! count.

pub mod bon;
pub mod error;
pub mod goodhart;
pub mod labeling;
pub mod proxy_rm;
pub mod rl_opt;
pub mod scaling_fit;
pub mod seeding;
pub mod trace;
pub mod world;

pub use error::{Error, Result};
pub use labeling::{ComparisonDataset, ComparisonRecord, PreferredSide, Split};
pub use proxy_rm::TrainConfig;
pub use scaling_fit::{FitForm, FunctionalFit};
pub use trace::{OptMethod, OptimizationTrace, TracePoint};
pub use world::{Policy, RewardModel, World, WorldConfig};
