//! In-repo learners for nuisance regressions: gradient boosted trees with
//! exact split search on quantized features, and a ridge/logistic linear
//! model. Both are fully deterministic given their inputs.

mod boost;
mod linear;
mod tree;

pub use boost::BoostedTrees;
pub use linear::LinearModel;

use serde::{Deserialize, Serialize};

use crate::data::FeatureMatrix;
use crate::error::{Error, Result};

/// Learner family selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum LearnerKind {
    #[default]
    GradientBoostedTrees,
    LogisticLinear,
}

/// Loss used when fitting: logistic for probability targets, squared for
/// nested-regression targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Loss {
    Logistic,
    Squared,
}

/// Hyperparameters shared by both learner families. Tree-specific fields
/// are ignored by the linear learner except `l2`, which is its ridge
/// penalty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerSpec {
    pub kind: LearnerKind,
    /// Boosting rounds (trees).
    pub rounds: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    /// Minimum rows per leaf.
    pub min_leaf: usize,
    /// L2 regularization on leaf values / ridge penalty.
    pub l2: f64,
}

impl Default for LearnerSpec {
    fn default() -> Self {
        LearnerSpec {
            kind: LearnerKind::GradientBoostedTrees,
            rounds: 50,
            max_depth: 3,
            learning_rate: 0.3,
            min_leaf: 10,
            l2: 1.0,
        }
    }
}

impl LearnerSpec {
    pub fn validate(&self) -> Result<()> {
        if self.rounds < 1 {
            return Err(Error::schema("learner rounds must be >= 1"));
        }
        if self.max_depth < 1 {
            return Err(Error::schema("learner max_depth must be >= 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::schema("learning rate must be in (0, 1]"));
        }
        if self.l2 < 0.0 {
            return Err(Error::schema("l2 penalty must be non-negative"));
        }
        Ok(())
    }
}

/// A fitted model of either family.
#[derive(Debug, Clone)]
pub enum Model {
    Boosted(BoostedTrees),
    Linear(LinearModel),
}

impl Model {
    /// Fit on the rows of `features` with targets `y` under the given loss.
    pub fn fit(spec: &LearnerSpec, features: &FeatureMatrix, y: &[f64], loss: Loss) -> Result<Model> {
        spec.validate()?;
        if features.n != y.len() {
            return Err(Error::internal("feature/target length mismatch"));
        }
        if features.n == 0 {
            return Err(Error::degenerate("cannot fit a learner on zero rows"));
        }
        Ok(match spec.kind {
            LearnerKind::GradientBoostedTrees => {
                Model::Boosted(BoostedTrees::fit(spec, features, y, loss))
            }
            LearnerKind::LogisticLinear => Model::Linear(LinearModel::fit(spec, features, y, loss)),
        })
    }

    /// Predictions on each row of `features` (probability scale for
    /// logistic fits, raw scale for squared fits).
    pub fn predict(&self, features: &FeatureMatrix) -> Vec<f64> {
        match self {
            Model::Boosted(m) => m.predict(features),
            Model::Linear(m) => m.predict(features),
        }
    }

    /// Training log-loss per boosting round (boosted trees only); used by
    /// diagnostics and tests.
    pub fn round_log_loss(&self) -> Option<&[f64]> {
        match self {
            Model::Boosted(m) if !m.round_log_loss.is_empty() => Some(&m.round_log_loss),
            _ => None,
        }
    }
}
