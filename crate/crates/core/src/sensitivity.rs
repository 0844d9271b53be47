//! Sensitivity analyses: overlap (quantile-based propensity trimming with
//! a distribution-free bound and decomposition stability) and attribute
//! missingness (multiple imputation under missing-at-random).

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::crossfit::{fit_crossfit, NuisanceConfig, NuisanceFits};
use crate::data::{build_features, Group, SfmDataset};
use crate::error::{Error, Result};
use crate::estimate::{decompose_tv, TvDecomposition};
use crate::learner::{Loss, Model};
use crate::stats::{self, PooledEstimate};

/// Identifier of the overlap-bound construction recorded in reports.
pub const OVERLAP_BOUND_METHOD: &str = "dkw-quantile-lower-bound";

/// One trimming level of the overlap analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapRow {
    pub q: f64,
    /// Trimming threshold Q(q; e_min) from the base fits.
    pub threshold: f64,
    pub rows_removed: usize,
    pub rows_kept: usize,
    /// Distribution-free lower confidence bound on the q-quantile of the
    /// refit minimum propensity over the trimmed data.
    pub bound: f64,
    /// Bound fell below the nominal trimming threshold: the trimmed data
    /// cannot support the claimed overlap, stronger trimming is needed.
    pub violation: bool,
    pub decomposition: TvDecomposition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub rows: Vec<OverlapRow>,
    /// Confidence level of the bound (1 - alpha).
    pub confidence: f64,
    pub method: String,
}

/// Options for [`overlap_analysis`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapOptions {
    /// Trimming quantiles, ascending; 0 means no trimming.
    pub quantiles: Vec<f64>,
    /// Alpha for the bound's confidence level.
    pub alpha: f64,
    /// Configuration used to refit nuisances on each trimmed dataset.
    pub nuisance: NuisanceConfig,
}

impl Default for OverlapOptions {
    fn default() -> Self {
        OverlapOptions {
            quantiles: vec![0.01, 0.02, 0.03, 0.04, 0.05],
            alpha: 0.05,
            nuisance: NuisanceConfig::default(),
        }
    }
}

/// Distribution-free lower confidence bound on the q-quantile of the
/// minimum propensity: the empirical quantile at level max(0, q - eps_n)
/// with the DKW half-width eps_n = sqrt(ln(2/alpha) / (2n)). At q = 0 (or
/// when the level clamps to zero) this is the sample minimum.
pub fn overlap_bound(e_min: &[f64], q: f64, alpha: f64) -> Result<f64> {
    if e_min.is_empty() {
        return Err(Error::degenerate("overlap bound needs at least one propensity"));
    }
    let mut sorted = e_min.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite propensities"));
    let eps = stats::dkw_epsilon(sorted.len(), alpha);
    let level = (q - eps).max(0.0);
    if level == 0.0 {
        Ok(sorted[0])
    } else {
        Ok(stats::lower_quantile_sorted(&sorted, level))
    }
}

/// Quantile-based trimming analysis. For each q: trim rows whose minimum
/// propensity is at or below the base-fit q-quantile, refit all nuisances
/// on the trimmed data, recompute the decomposition, and test whether the
/// refit propensities still support the nominal overlap threshold.
pub fn overlap_analysis(
    ds: &SfmDataset,
    base_fits: &NuisanceFits,
    opts: &OverlapOptions,
) -> Result<OverlapReport> {
    let e_min = base_fits.min_propensity();
    let mut sorted = e_min.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite propensities"));

    let mut quantiles = opts.quantiles.clone();
    quantiles.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let mut rows_out = Vec::with_capacity(quantiles.len());
    for (qi, &q) in quantiles.iter().enumerate() {
        if !(0.0..1.0).contains(&q) {
            return Err(Error::schema(format!("trimming quantile {q} outside [0, 1)")));
        }
        let threshold = stats::lower_quantile_sorted(&sorted, q);
        let kept_fit_rows: Vec<usize> = if q == 0.0 {
            (0..base_fits.n).collect()
        } else {
            (0..base_fits.n).filter(|&i| e_min[i] > threshold).collect()
        };
        let removed = base_fits.n - kept_fit_rows.len();
        for g in Group::BOTH {
            if !kept_fit_rows.iter().any(|&i| base_fits.group[i] == g) {
                return Err(Error::degenerate(format!(
                    "trimming at q={q} empties the {g} group"
                )));
            }
        }
        let ds_rows: Vec<usize> = kept_fit_rows.iter().map(|&i| base_fits.rows[i]).collect();
        let trimmed = ds.subset(&ds_rows);
        let config = NuisanceConfig {
            seed: opts.nuisance.seed.wrapping_add(qi as u64 + 1),
            ..opts.nuisance.clone()
        };
        let refit = fit_crossfit(&trimmed, &config)?;
        let decomposition = decompose_tv(&refit)?;
        let bound = overlap_bound(&refit.min_propensity(), q, opts.alpha)?;
        rows_out.push(OverlapRow {
            q,
            threshold,
            rows_removed: removed,
            rows_kept: kept_fit_rows.len(),
            bound,
            violation: bound < threshold,
            decomposition,
        });
    }
    Ok(OverlapReport {
        rows: rows_out,
        confidence: 1.0 - opts.alpha,
        method: OVERLAP_BOUND_METHOD.into(),
    })
}

// ---------------------------------------------------------------------------
// Missing-attribute sensitivity
// ---------------------------------------------------------------------------

/// Rubin-pooled decomposition components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledDecomposition {
    pub tv: PooledEstimate,
    pub direct: PooledEstimate,
    pub indirect_negated: PooledEstimate,
    pub confounded_negated: PooledEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissingnessReport {
    /// One decomposition per imputation draw.
    pub draws: Vec<TvDecomposition>,
    pub pooled: PooledDecomposition,
    /// Decomposition on attribute-complete rows only.
    pub complete_case: TvDecomposition,
    pub n_attribute_missing: usize,
}

fn pool(draws: &[TvDecomposition], pick: impl Fn(&TvDecomposition) -> (f64, f64)) -> Result<PooledEstimate> {
    let (estimates, ses): (Vec<f64>, Vec<f64>) = draws.iter().map(&pick).unzip();
    stats::rubin_pool(&estimates, &ses)
}

/// Multiple-imputation sensitivity analysis for missing attribute values
/// under missing-at-random: the attribute is regressed on (Z, W, Y) over
/// complete rows, missing values are drawn from the predicted
/// probabilities, the decomposition is recomputed per draw, and the draws
/// are pooled with the usual combining rules (between-draw variance
/// inflated by 1 + 1/m).
pub fn missingness_analysis(
    ds: &SfmDataset,
    config: &NuisanceConfig,
    draws: usize,
) -> Result<MissingnessReport> {
    if draws == 0 {
        return Err(Error::schema("missingness analysis needs at least one draw"));
    }
    let groups = ds.attribute_groups();
    let missing_rows: Vec<usize> =
        (0..ds.n_rows).filter(|&i| groups[i].is_none()).collect();

    let complete_fits = fit_crossfit(ds, config)?;
    let complete_case = decompose_tv(&complete_fits)?;

    if missing_rows.is_empty() {
        let draws_vec = vec![complete_case.clone(); draws];
        let pooled = PooledDecomposition {
            tv: pool(&draws_vec, |d| (d.tv.value, d.tv.se))?,
            direct: pool(&draws_vec, |d| (d.direct.value, d.direct.se))?,
            indirect_negated: pool(&draws_vec, |d| {
                (d.indirect_negated.value, d.indirect_negated.se)
            })?,
            confounded_negated: pool(&draws_vec, |d| {
                (d.confounded_negated.value, d.confounded_negated.se)
            })?,
        };
        return Ok(MissingnessReport {
            draws: draws_vec,
            pooled,
            complete_case,
            n_attribute_missing: 0,
        });
    }

    // Imputation model: P(X = minority | Z, W, Y) fit on complete rows.
    let (y_all, y_missing) = ds.outcome_values(config.outcome)?;
    let feature_cols: Vec<String> = ds
        .schema
        .confounders
        .iter()
        .chain(ds.schema.mediators.iter())
        .cloned()
        .collect();
    let complete_rows: Vec<usize> =
        (0..ds.n_rows).filter(|&i| groups[i].is_some() && !y_missing[i]).collect();
    if complete_rows.is_empty() {
        return Err(Error::degenerate("no attribute-complete rows to fit the imputation model"));
    }
    let mut fm_train = build_features(ds, &feature_cols, &complete_rows)?;
    fm_train.push_column("outcome", complete_rows.iter().map(|&i| y_all[i]).collect());
    let target: Vec<f64> = complete_rows
        .iter()
        .map(|&i| if groups[i] == Some(Group::Minority) { 1.0 } else { 0.0 })
        .collect();
    let model = Model::fit(&config.learner, &fm_train, &target, Loss::Logistic)?;

    // Rows still usable after imputation need an observed outcome.
    let imputable: Vec<usize> =
        missing_rows.iter().copied().filter(|&i| !y_missing[i]).collect();
    let mut fm_missing = build_features(ds, &feature_cols, &imputable)?;
    fm_missing.push_column("outcome", imputable.iter().map(|&i| y_all[i]).collect());
    let probs = model.predict(&fm_missing);

    let mut draw_decomps = Vec::with_capacity(draws);
    for d in 0..draws {
        let mut rng =
            ChaCha8Rng::seed_from_u64(config.seed ^ 0xace0_ba5e ^ ((d as u64) << 32));
        // fill_missing_attribute expects one entry per masked row in row
        // order; rows whose outcome is missing get an arbitrary fill (they
        // are excluded from estimation anyway).
        let mut by_row: Vec<(usize, Group)> = Vec::with_capacity(missing_rows.len());
        for (&row, &p) in imputable.iter().zip(&probs) {
            let g = if rng.gen::<f64>() < p { Group::Minority } else { Group::Majority };
            by_row.push((row, g));
        }
        for &row in &missing_rows {
            if y_missing[row] {
                by_row.push((row, Group::Majority));
            }
        }
        by_row.sort_by_key(|&(row, _)| row);
        let fills: Vec<Group> = by_row.iter().map(|&(_, g)| g).collect();
        let filled = ds.fill_missing_attribute(&fills)?;
        let draw_config = NuisanceConfig {
            seed: config.seed.wrapping_add(1000 + d as u64),
            ..config.clone()
        };
        let fits = fit_crossfit(&filled, &draw_config)?;
        draw_decomps.push(decompose_tv(&fits)?);
    }

    let pooled = PooledDecomposition {
        tv: pool(&draw_decomps, |d| (d.tv.value, d.tv.se))?,
        direct: pool(&draw_decomps, |d| (d.direct.value, d.direct.se))?,
        indirect_negated: pool(&draw_decomps, |d| {
            (d.indirect_negated.value, d.indirect_negated.se)
        })?,
        confounded_negated: pool(&draw_decomps, |d| {
            (d.confounded_negated.value, d.confounded_negated.se)
        })?,
    };

    Ok(MissingnessReport {
        draws: draw_decomps,
        pooled,
        complete_case,
        n_attribute_missing: missing_rows.len(),
    })
}

/// Delete the attribute on rows selected by a probability function of the
/// row index; test helper for MAR / MNAR constructions.
pub fn delete_attribute_where(
    ds: &SfmDataset,
    mut select: impl FnMut(usize) -> bool,
) -> SfmDataset {
    let mut out = ds.clone();
    let attr = out.schema.attribute.clone();
    let col = out.columns.iter_mut().find(|c| c.name == attr).expect("attribute exists");
    for row in 0..out.n_rows {
        if select(row) {
            col.missing[row] = true;
        }
    }
    out
}
