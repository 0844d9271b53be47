//! Ridge-regularized linear models: logistic regression fit by iterated
//! reweighted least squares, and ridge least squares for regression
//! targets. The intercept is unpenalized.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::data::FeatureMatrix;

use super::{LearnerSpec, Loss};

const IRLS_MAX_ITER: usize = 30;
const IRLS_TOL: f64 = 1e-10;
/// Linear predictor cap; keeps separable fits finite.
const ETA_CAP: f64 = 30.0;

#[derive(Debug, Clone)]
pub struct LinearModel {
    /// Coefficients; index 0 is the intercept.
    beta: Vec<f64>,
    loss: Loss,
}

fn design(features: &FeatureMatrix) -> DMatrix<f64> {
    let n = features.n;
    let d = features.d() + 1;
    DMatrix::from_fn(n, d, |i, j| if j == 0 { 1.0 } else { features.cols[j - 1][i] })
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Solve (X'WX + l2*I_pen) beta = X'z with the intercept unpenalized.
fn solve_weighted(
    x: &DMatrix<f64>,
    weights: Option<&DVector<f64>>,
    target: &DVector<f64>,
    l2: f64,
) -> Option<DVector<f64>> {
    let d = x.ncols();
    let xtw = match weights {
        Some(w) => {
            let mut xt = x.transpose();
            for (j, mut col) in xt.column_iter_mut().enumerate() {
                col *= w[j];
            }
            xt
        }
        None => x.transpose(),
    };
    let mut a = &xtw * x;
    for j in 1..d {
        a[(j, j)] += l2;
    }
    // Tiny jitter keeps the normal equations well-posed for collinear
    // one-hot blocks even at l2 = 0.
    for j in 0..d {
        a[(j, j)] += 1e-10;
    }
    let b = &xtw * target;
    Cholesky::new(a).map(|ch| ch.solve(&b))
}

impl LinearModel {
    pub fn fit(spec: &LearnerSpec, features: &FeatureMatrix, y: &[f64], loss: Loss) -> LinearModel {
        let x = design(features);
        let yv = DVector::from_column_slice(y);
        let beta = match loss {
            Loss::Squared => solve_weighted(&x, None, &yv, spec.l2)
                .unwrap_or_else(|| DVector::zeros(x.ncols())),
            Loss::Logistic => {
                let d = x.ncols();
                let mut beta = DVector::zeros(d);
                for _ in 0..IRLS_MAX_ITER {
                    let eta = (&x * &beta).map(|e: f64| e.clamp(-ETA_CAP, ETA_CAP));
                    let p = eta.map(sigmoid);
                    let w = p.map(|pi| (pi * (1.0 - pi)).max(1e-8));
                    // Working response: eta + (y - p) / w.
                    let z = DVector::from_fn(x.nrows(), |i, _| {
                        eta[i] + (yv[i] - p[i]) / w[i]
                    });
                    let Some(next) = solve_weighted(&x, Some(&w), &z, spec.l2) else {
                        break;
                    };
                    let delta = (&next - &beta).amax();
                    beta = next;
                    if delta < IRLS_TOL {
                        break;
                    }
                    // Runaway coefficients on separable data: stop once the
                    // cap region is saturated.
                    if beta.amax() > 1e6 {
                        break;
                    }
                }
                beta
            }
        };
        LinearModel { beta: beta.iter().copied().collect(), loss }
    }

    pub fn predict(&self, features: &FeatureMatrix) -> Vec<f64> {
        (0..features.n)
            .map(|i| {
                let mut eta = self.beta[0];
                for (j, col) in features.cols.iter().enumerate() {
                    eta += self.beta[j + 1] * col[i];
                }
                match self.loss {
                    Loss::Logistic => sigmoid(eta.clamp(-ETA_CAP, ETA_CAP)),
                    Loss::Squared => eta,
                }
            })
            .collect()
    }
}
