//! Small statistics toolkit shared across modules: quantiles, two-group
//! tests, normal tail probabilities, binomial intervals, and the pooling
//! rules for multiple imputation.

use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Two-sided normal tail probability for a z statistic.
pub fn normal_two_sided_p(z: f64) -> f64 {
    if !z.is_finite() {
        return 0.0;
    }
    let n = Normal::new(0.0, 1.0).expect("unit normal");
    2.0 * (1.0 - n.cdf(z.abs()))
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("unit normal").cdf(z)
}

/// Upper tail probability of a chi-squared distribution.
pub fn chi_squared_sf(stat: f64, df: f64) -> f64 {
    if df <= 0.0 {
        return 1.0;
    }
    let d = ChiSquared::new(df).expect("valid df");
    (1.0 - d.cdf(stat)).clamp(0.0, 1.0)
}

/// Sample mean. Returns 0 for empty input.
pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Unbiased sample variance (denominator n-1). Returns 0 for n < 2.
pub fn sample_variance(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(values);
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64
}

/// Standard error of the mean: sd(values)/sqrt(n).
pub fn standard_error(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    (sample_variance(values) / values.len() as f64).sqrt()
}

/// Linear-interpolation quantile (the common "type 7" definition) of a
/// sorted slice. `p` is clamped to [0,1].
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty slice");
    let p = p.clamp(0.0, 1.0);
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
    }
}

/// Quantile of an unsorted slice; sorts a copy.
pub fn quantile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("non-NaN values"));
    quantile_sorted(&v, p)
}

/// Lower empirical quantile used for trimming thresholds: the ceil(q*n)-th
/// smallest value. For q = 0 this is defined as 0 (no threshold).
pub fn lower_quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty slice");
    if q <= 0.0 {
        return 0.0;
    }
    let n = sorted.len();
    let k = ((q * n as f64).ceil() as usize).clamp(1, n);
    sorted[k - 1]
}

/// Median and interquartile range (q25, q75).
pub fn median_iqr(values: &[f64]) -> (f64, f64, f64) {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("non-NaN values"));
    (
        quantile_sorted(&v, 0.5),
        quantile_sorted(&v, 0.25),
        quantile_sorted(&v, 0.75),
    )
}

/// Pearson correlation between two equal-length slices.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::degenerate("correlation needs equal, non-empty inputs"));
    }
    let ma = mean(a);
    let mb = mean(b);
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::degenerate("correlation undefined: zero variance"));
    }
    Ok(sab / (saa.sqrt() * sbb.sqrt()))
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_ci(successes: f64, n: f64, z: f64) -> (f64, f64) {
    if n <= 0.0 {
        return (0.0, 1.0);
    }
    let p = successes / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * ((p * (1.0 - p) + z2 / (4.0 * n)) / n).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Dvoretzky-Kiefer-Wolfowitz band half-width at confidence 1-alpha:
/// sqrt(ln(2/alpha) / (2n)).
pub fn dkw_epsilon(n: usize, alpha: f64) -> f64 {
    assert!(n > 0 && alpha > 0.0 && alpha < 1.0);
    ((2.0 / alpha).ln() / (2.0 * n as f64)).sqrt()
}

/// Two-sided Wilcoxon rank-sum (Mann-Whitney) p-value via the normal
/// approximation with tie correction.
pub fn rank_sum_p(a: &[f64], b: &[f64]) -> Result<f64> {
    let n1 = a.len();
    let n2 = b.len();
    if n1 == 0 || n2 == 0 {
        return Err(Error::degenerate("rank-sum test needs both groups non-empty"));
    }
    let n = n1 + n2;
    let mut pooled: Vec<(f64, usize)> = a
        .iter()
        .map(|&v| (v, 0usize))
        .chain(b.iter().map(|&v| (v, 1usize)))
        .collect();
    pooled.sort_by(|x, y| x.0.partial_cmp(&y.0).expect("non-NaN values"));

    // Midranks and tie counts.
    let mut ranks = vec![0.0f64; n];
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && pooled[j + 1].0 == pooled[i].0 {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        for r in ranks.iter_mut().take(j + 1).skip(i) {
            *r = midrank;
        }
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let w: f64 = pooled
        .iter()
        .zip(&ranks)
        .filter(|((_, g), _)| *g == 0)
        .map(|(_, r)| *r)
        .sum();
    let n1f = n1 as f64;
    let n2f = n2 as f64;
    let nf = n as f64;
    let mu = n1f * (nf + 1.0) / 2.0;
    let var = n1f * n2f / 12.0 * (nf + 1.0 - tie_term / (nf * (nf - 1.0)));
    if var <= 0.0 {
        return Err(Error::degenerate("rank-sum variance is zero (all values tied)"));
    }
    Ok(normal_two_sided_p((w - mu) / var.sqrt()))
}

/// Pearson chi-squared test of independence for an r x c contingency
/// table given as rows of counts. Returns the p-value.
pub fn chi_square_p(table: &[Vec<f64>]) -> Result<f64> {
    let r = table.len();
    if r == 0 {
        return Err(Error::degenerate("empty contingency table"));
    }
    let c = table[0].len();
    if c == 0 || table.iter().any(|row| row.len() != c) {
        return Err(Error::degenerate("ragged contingency table"));
    }
    let row_sums: Vec<f64> = table.iter().map(|row| row.iter().sum()).collect();
    let col_sums: Vec<f64> = (0..c).map(|j| table.iter().map(|row| row[j]).sum()).collect();
    let total: f64 = row_sums.iter().sum();
    if total <= 0.0 {
        return Err(Error::degenerate("contingency table has zero total"));
    }
    let mut stat = 0.0;
    for i in 0..r {
        for j in 0..c {
            let e = row_sums[i] * col_sums[j] / total;
            if e > 0.0 {
                let d = table[i][j] - e;
                stat += d * d / e;
            }
        }
    }
    let df = (r.saturating_sub(1) * c.saturating_sub(1)) as f64;
    if df == 0.0 {
        return Err(Error::degenerate("chi-squared test needs a 2x2 or larger table"));
    }
    Ok(chi_squared_sf(stat, df))
}

/// Rubin's combining rules for multiple imputation: pooled estimate,
/// within-draw variance, between-draw variance, and total standard error.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PooledEstimate {
    pub estimate: f64,
    pub within_variance: f64,
    pub between_variance: f64,
    pub se: f64,
}

/// Pool per-draw estimates and their standard errors.
pub fn rubin_pool(estimates: &[f64], ses: &[f64]) -> Result<PooledEstimate> {
    let m = estimates.len();
    if m == 0 || ses.len() != m {
        return Err(Error::degenerate("pooling needs matching, non-empty inputs"));
    }
    let est = mean(estimates);
    let within = mean(&ses.iter().map(|s| s * s).collect::<Vec<_>>());
    let between = sample_variance(estimates);
    let total = within + (1.0 + 1.0 / m as f64) * between;
    Ok(PooledEstimate {
        estimate: est,
        within_variance: within,
        between_variance: between,
        se: total.sqrt(),
    })
}
