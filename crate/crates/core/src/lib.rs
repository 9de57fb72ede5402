//! Dynamic boosted random forests.
//!
//! A cascade of random forests where every level is trained only on the
//! examples the previous levels could not confidently explain. Each leaf of
//! each tree is scored as a classification rule; an example is *easy* when
//! every tree of the level routes it into a leaf scoring above the level's
//! mean leaf score. Easy examples leave the training set, hard examples feed
//! the next level, and at prediction time rows exit at the first level that
//! deems them easy.
//!
//! Module map:
//!
//! - [`data`]: CSV ingestion, encoding, splits and k-fold indices
//! - [`tree`]: CART learner and leaf routing
//! - [`forest`]: bagged forests and plurality voting
//! - [`hem`]: leaf scoring and the easy/hard partition
//! - [`evolve`]: tree fitness and elimination
//! - [`cascade`]: multi-level training and cascaded prediction
//! - [`metrics`]: accuracy, ROC-AUC, confusion counts
//! - [`persist`]: versioned JSON model files

pub mod cascade;
pub mod data;
mod error;
pub mod evolve;
pub mod forest;
pub mod hem;
pub mod metrics;
pub mod persist;
pub mod seed;
pub mod synthetic;
pub mod tree;

pub use cascade::{
    predict_cascade, train_cascade, CascadeLevel, CascadeModel, CascadePrediction, LevelReport,
    RuleTriggered, StopReason, TrainConfig, TrainReport,
};
pub use data::{Dataset, FeatureSchema, MissingPolicy, SplitSpec};
pub use error::{Error, Result};
pub use forest::{fit_forest, Forest, ForestConfig};
pub use hem::{LeafScoreTable, LeafStats, Metric};
pub use tree::{Criterion, DecisionTree, TreeLimits};
