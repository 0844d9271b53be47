//! Gradient boosting over the binned regression trees: logistic loss for
//! probability targets, squared loss for nested-regression targets.

use crate::data::FeatureMatrix;

use super::tree::{Quantizer, Tree, TreeParams};
use super::{LearnerSpec, Loss};

#[derive(Debug, Clone)]
pub struct BoostedTrees {
    quantizer: Quantizer,
    trees: Vec<Tree>,
    base_score: f64,
    learning_rate: f64,
    loss: Loss,
    /// Training log-loss (or MSE for squared loss) after each round.
    pub round_log_loss: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl BoostedTrees {
    pub fn fit(spec: &LearnerSpec, features: &FeatureMatrix, y: &[f64], loss: Loss) -> BoostedTrees {
        let n = y.len();
        let rows: Vec<usize> = (0..n).collect();
        let quantizer = Quantizer::fit(features, &rows);
        let binned = quantizer.bin_rows(features, &rows);

        let base_score = match loss {
            Loss::Logistic => {
                let p = (y.iter().sum::<f64>() / n as f64).clamp(1e-6, 1.0 - 1e-6);
                (p / (1.0 - p)).ln()
            }
            Loss::Squared => y.iter().sum::<f64>() / n as f64,
        };

        let params = TreeParams { max_depth: spec.max_depth, min_leaf: spec.min_leaf, l2: spec.l2 };
        let mut scores = vec![base_score; n];
        let mut grad = vec![0.0; n];
        let mut hess = vec![0.0; n];
        let mut trees = Vec::with_capacity(spec.rounds);
        let mut round_log_loss = Vec::with_capacity(spec.rounds);

        for _ in 0..spec.rounds {
            match loss {
                Loss::Logistic => {
                    for i in 0..n {
                        let p = sigmoid(scores[i]);
                        grad[i] = p - y[i];
                        hess[i] = (p * (1.0 - p)).max(1e-12);
                    }
                }
                Loss::Squared => {
                    for i in 0..n {
                        grad[i] = scores[i] - y[i];
                        hess[i] = 1.0;
                    }
                }
            }
            let tree = Tree::fit(&binned, &grad, &hess, &params);
            for i in 0..n {
                scores[i] += spec.learning_rate * tree.value(|f| binned[f][i]);
            }
            round_log_loss.push(match loss {
                Loss::Logistic => {
                    -y.iter()
                        .zip(&scores)
                        .map(|(yi, s)| {
                            let p = sigmoid(*s).clamp(1e-12, 1.0 - 1e-12);
                            yi * p.ln() + (1.0 - yi) * (1.0 - p).ln()
                        })
                        .sum::<f64>()
                        / n as f64
                }
                Loss::Squared => {
                    y.iter().zip(&scores).map(|(yi, s)| (yi - s) * (yi - s)).sum::<f64>()
                        / n as f64
                }
            });
            trees.push(tree);
        }

        BoostedTrees {
            quantizer,
            trees,
            base_score,
            learning_rate: spec.learning_rate,
            loss,
            round_log_loss,
        }
    }

    pub fn predict(&self, features: &FeatureMatrix) -> Vec<f64> {
        let rows: Vec<usize> = (0..features.n).collect();
        let binned = self.quantizer.bin_rows(features, &rows);
        (0..features.n)
            .map(|i| {
                let mut score = self.base_score;
                for tree in &self.trees {
                    score += self.learning_rate * tree.value(|f| binned[f][i]);
                }
                match self.loss {
                    Loss::Logistic => sigmoid(score),
                    Loss::Squared => score,
                }
            })
            .collect()
    }
}
