//! Regression tree on quantized features with exact split search over the
//! bin grid. Used as the base learner for gradient boosting: fits the
//! per-row (gradient, hessian) pairs with Newton leaf values.

use crate::data::FeatureMatrix;

pub const MAX_BINS: usize = 256;

/// Per-feature quantile cut points; values are mapped to bin indices by
/// upper-bound search so train and test rows share the same grid.
#[derive(Debug, Clone)]
pub struct Quantizer {
    /// cuts[f] holds ascending thresholds; bin = #cuts <= value.
    cuts: Vec<Vec<f64>>,
}

impl Quantizer {
    /// Build cut points from the training rows of each feature. Features
    /// with at most `MAX_BINS` distinct values get exact cuts (one per
    /// distinct value boundary); denser features get quantile cuts.
    pub fn fit(features: &FeatureMatrix, rows: &[usize]) -> Quantizer {
        let cuts = features
            .cols
            .iter()
            .map(|col| {
                let mut values: Vec<f64> = rows.iter().map(|&r| col[r]).collect();
                values.sort_by(|a, b| a.partial_cmp(b).expect("finite feature values"));
                values.dedup();
                if values.len() <= 1 {
                    return Vec::new();
                }
                if values.len() <= MAX_BINS {
                    // Boundaries between consecutive distinct values.
                    values.windows(2).map(|w| (w[0] + w[1]) / 2.0).collect()
                } else {
                    let mut c: Vec<f64> = (1..MAX_BINS)
                        .map(|k| {
                            let idx = k * (values.len() - 1) / MAX_BINS;
                            (values[idx] + values[idx + 1]) / 2.0
                        })
                        .collect();
                    c.dedup();
                    c
                }
            })
            .collect();
        Quantizer { cuts }
    }

    #[cfg(test)]
    pub fn n_bins(&self, feature: usize) -> usize {
        self.cuts[feature].len() + 1
    }

    /// Bin index of a value: number of cuts at or below it.
    pub fn bin(&self, feature: usize, value: f64) -> u16 {
        let cuts = &self.cuts[feature];
        cuts.partition_point(|c| *c <= value) as u16
    }

    /// Bin all rows of all features; binned[f][i] for row index i into `rows`.
    pub fn bin_rows(&self, features: &FeatureMatrix, rows: &[usize]) -> Vec<Vec<u16>> {
        features
            .cols
            .iter()
            .enumerate()
            .map(|(f, col)| rows.iter().map(|&r| self.bin(f, col[r])).collect())
            .collect()
    }
}

#[derive(Debug, Clone)]
enum Node {
    Split { feature: usize, bin: u16, left: usize, right: usize },
    Leaf { value: f64 },
}

/// A fitted regression tree over binned features.
#[derive(Debug, Clone)]
pub struct Tree {
    nodes: Vec<Node>,
}

pub struct TreeParams {
    pub max_depth: usize,
    pub min_leaf: usize,
    pub l2: f64,
}

struct SplitCandidate {
    feature: usize,
    bin: u16,
    gain: f64,
}

impl Tree {
    /// Fit to per-row gradients/hessians over `binned` (feature-major,
    /// already restricted to the training rows).
    pub fn fit(binned: &[Vec<u16>], grad: &[f64], hess: &[f64], params: &TreeParams) -> Tree {
        let n = grad.len();
        let mut tree = Tree { nodes: Vec::new() };
        let rows: Vec<u32> = (0..n as u32).collect();
        tree.grow(binned, grad, hess, params, rows, 0);
        tree
    }

    fn grow(
        &mut self,
        binned: &[Vec<u16>],
        grad: &[f64],
        hess: &[f64],
        params: &TreeParams,
        rows: Vec<u32>,
        depth: usize,
    ) -> usize {
        let g: f64 = rows.iter().map(|&r| grad[r as usize]).sum();
        let h: f64 = rows.iter().map(|&r| hess[r as usize]).sum();
        let make_leaf = |tree: &mut Tree| {
            let value = -g / (h + params.l2);
            tree.nodes.push(Node::Leaf { value });
            tree.nodes.len() - 1
        };
        if depth >= params.max_depth || rows.len() < 2 * params.min_leaf {
            return make_leaf(self);
        }
        let Some(best) = best_split(binned, grad, hess, &rows, params) else {
            return make_leaf(self);
        };
        let (left_rows, right_rows): (Vec<u32>, Vec<u32>) = rows
            .iter()
            .partition(|&&r| binned[best.feature][r as usize] <= best.bin);
        // Reserve the split slot, then grow children.
        let idx = self.nodes.len();
        self.nodes.push(Node::Leaf { value: 0.0 });
        let left = self.grow(binned, grad, hess, params, left_rows, depth + 1);
        let right = self.grow(binned, grad, hess, params, right_rows, depth + 1);
        self.nodes[idx] = Node::Split { feature: best.feature, bin: best.bin, left, right };
        idx
    }

    /// Leaf value for a binned row.
    pub fn value(&self, row_bins: impl Fn(usize) -> u16) -> f64 {
        let mut idx = 0;
        loop {
            match &self.nodes[idx] {
                Node::Leaf { value } => return *value,
                Node::Split { feature, bin, left, right } => {
                    idx = if row_bins(*feature) <= *bin { *left } else { *right };
                }
            }
        }
    }
}

/// Exact best split over all features and all bin boundaries, maximizing
/// the standard second-order gain. Returns `None` when no split improves
/// on the parent or satisfies the leaf-size floor.
fn best_split(
    binned: &[Vec<u16>],
    grad: &[f64],
    hess: &[f64],
    rows: &[u32],
    params: &TreeParams,
) -> Option<SplitCandidate> {
    let g_total: f64 = rows.iter().map(|&r| grad[r as usize]).sum();
    let h_total: f64 = rows.iter().map(|&r| hess[r as usize]).sum();
    let parent_score = g_total * g_total / (h_total + params.l2);

    let mut best: Option<SplitCandidate> = None;
    for (feature, bins) in binned.iter().enumerate() {
        let max_bin = rows.iter().map(|&r| bins[r as usize]).max().unwrap_or(0) as usize;
        if max_bin == 0 {
            continue;
        }
        let mut g_bin = vec![0.0f64; max_bin + 1];
        let mut h_bin = vec![0.0f64; max_bin + 1];
        let mut n_bin = vec![0usize; max_bin + 1];
        for &r in rows {
            let b = bins[r as usize] as usize;
            g_bin[b] += grad[r as usize];
            h_bin[b] += hess[r as usize];
            n_bin[b] += 1;
        }
        let mut g_left = 0.0;
        let mut h_left = 0.0;
        let mut n_left = 0usize;
        for b in 0..max_bin {
            g_left += g_bin[b];
            h_left += h_bin[b];
            n_left += n_bin[b];
            let n_right = rows.len() - n_left;
            if n_left < params.min_leaf || n_right < params.min_leaf {
                continue;
            }
            let g_right = g_total - g_left;
            let h_right = h_total - h_left;
            let gain = g_left * g_left / (h_left + params.l2)
                + g_right * g_right / (h_right + params.l2)
                - parent_score;
            if gain > 1e-12 && best.as_ref().map(|b| gain > b.gain).unwrap_or(true) {
                best = Some(SplitCandidate { feature, bin: b as u16, gain });
            }
        }
    }
    best
}
