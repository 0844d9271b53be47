//! Effect heterogeneity across age x admission-type cells: doubly-robust
//! cell means of the direct-effect score, age-binned indirect effects,
//! plain mechanism profiles, and correlation between heatmaps.
//!
//! Heterogeneous effects are estimated by averaging the per-row
//! doubly-robust pseudo-outcomes within cells (the reported objects are
//! cell averages, and the cell mean of the score targets exactly the
//! cell-conditional effect). Uncertainty comes from a nonparametric
//! bootstrap over rows with the fitted nuisances held fixed.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::crossfit::NuisanceFits;
use crate::data::{ColumnData, Group, SfmDataset};
use crate::error::{Error, Result};
use crate::estimate::{direct_pseudo_outcomes, indirect_pseudo_outcomes};
use crate::stats;

/// Estimation method recorded in heatmap metadata.
pub const DR_CELL_MEAN_METHOD: &str = "dr-cell-mean";

/// Age bins (inclusive year ranges) crossed with admission-type columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellGrid {
    pub age_bins: Vec<(f64, f64)>,
    pub admission_types: Vec<String>,
}

impl CellGrid {
    pub fn new(age_bins: Vec<(f64, f64)>, admission_types: Vec<String>) -> Result<CellGrid> {
        let grid = CellGrid { age_bins, admission_types };
        grid.validate()?;
        Ok(grid)
    }

    /// Default heterogeneity bins: 18-54, 55-64, 65-74, 75-100.
    pub fn default_age_bins() -> Vec<(f64, f64)> {
        vec![(18.0, 54.0), (55.0, 64.0), (65.0, 74.0), (75.0, 100.0)]
    }

    /// Default admission types, most-urgent first.
    pub fn default_admission_types() -> Vec<String> {
        vec!["Medical".into(), "Surgery-Emergency".into(), "Surgery-Elective".into()]
    }

    pub fn validate(&self) -> Result<()> {
        if self.age_bins.is_empty() || self.admission_types.is_empty() {
            return Err(Error::schema("cell grid needs at least one bin and one type"));
        }
        for &(lo, hi) in &self.age_bins {
            if lo > hi {
                return Err(Error::schema(format!("age bin [{lo}, {hi}] is inverted")));
            }
        }
        for w in self.age_bins.windows(2) {
            if w[1].0 <= w[0].1 {
                return Err(Error::schema("age bins must be disjoint and ordered"));
            }
        }
        Ok(())
    }

    pub fn age_bin_of(&self, age: f64) -> Option<usize> {
        self.age_bins.iter().position(|&(lo, hi)| age >= lo && age <= hi)
    }

    pub fn type_of(&self, label: &str) -> Option<usize> {
        self.admission_types.iter().position(|t| t == label)
    }

    pub fn n_cells(&self) -> usize {
        self.age_bins.len() * self.admission_types.len()
    }
}

/// Grid of effect estimates with per-cell confidence intervals. Cells
/// below the sample-size floor are masked (`None`), never fabricated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub grid: CellGrid,
    pub values: Vec<Vec<Option<f64>>>,
    pub ci_lo: Vec<Vec<Option<f64>>>,
    pub ci_hi: Vec<Vec<Option<f64>>>,
    /// Effective per-cell sample size (minority rows for effect heatmaps,
    /// admission counts for risk-ratio heatmaps).
    pub n: Vec<Vec<usize>>,
    pub method: String,
}

impl Heatmap {
    pub fn masked_cells(&self) -> usize {
        self.values.iter().flatten().filter(|v| v.is_none()).count()
    }

    /// Flattened (row-major) paired values of two heatmaps over cells
    /// unmasked in both.
    fn paired(&self, other: &Heatmap) -> Result<(Vec<f64>, Vec<f64>, usize)> {
        if self.grid != other.grid {
            return Err(Error::schema("heatmap correlation requires identical grids"));
        }
        let mut a = Vec::new();
        let mut b = Vec::new();
        let mut skipped = 0usize;
        for (row_a, row_b) in self.values.iter().zip(&other.values) {
            for (va, vb) in row_a.iter().zip(row_b) {
                match (va, vb) {
                    (Some(x), Some(y)) => {
                        a.push(*x);
                        b.push(*y);
                    }
                    _ => skipped += 1,
                }
            }
        }
        Ok((a, b, skipped))
    }
}

/// Bootstrap settings: replicate count and seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BootstrapPlan {
    pub replicates: usize,
    pub seed: u64,
}

impl Default for BootstrapPlan {
    fn default() -> Self {
        BootstrapPlan { replicates: 200, seed: 0 }
    }
}

/// Options for cell-conditional estimation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellOptions {
    pub bootstrap: BootstrapPlan,
    /// Cells with fewer minority rows than this are masked.
    pub cell_floor: usize,
}

impl Default for CellOptions {
    fn default() -> Self {
        CellOptions { bootstrap: BootstrapPlan::default(), cell_floor: 50 }
    }
}

/// Ages and admission labels of the estimation rows.
fn cell_coordinates(
    ds: &SfmDataset,
    fits: &NuisanceFits,
) -> Result<(Vec<f64>, Vec<Option<String>>)> {
    let age_col = ds
        .schema
        .age
        .as_deref()
        .ok_or_else(|| Error::schema("heterogeneity needs an age column in the schema"))?;
    let (ages_all, age_missing) = ds.numeric(age_col)?;
    let adm_col_name = ds
        .schema
        .admission_type
        .as_deref()
        .ok_or_else(|| Error::schema("heterogeneity needs an admission-type column in the schema"))?;
    let adm_col = ds
        .column(adm_col_name)
        .ok_or_else(|| Error::schema(format!("column '{adm_col_name}' not in data")))?;
    let labels: Vec<Option<String>> = match &adm_col.data {
        ColumnData::Categorical { codes, levels } => fits
            .rows
            .iter()
            .map(|&r| {
                if adm_col.missing[r] {
                    None
                } else {
                    Some(levels[codes[r] as usize].clone())
                }
            })
            .collect(),
        ColumnData::Numeric(values) => fits
            .rows
            .iter()
            .map(|&r| if adm_col.missing[r] { None } else { Some(format!("{}", values[r])) })
            .collect(),
    };
    let ages: Vec<f64> = fits
        .rows
        .iter()
        .map(|&r| if age_missing[r] { f64::NAN } else { ages_all[r] })
        .collect();
    Ok((ages, labels))
}

/// Mean of the score over a cell divided by its minority count, with a
/// seeded within-cell bootstrap for the confidence interval.
fn cell_estimate(
    scores: &[f64],
    groups: &[Group],
    rows: &[usize],
    plan: &BootstrapPlan,
    cell_seed: u64,
) -> (f64, Option<(f64, f64)>) {
    let n0 = rows.iter().filter(|&&i| groups[i] == Group::Minority).count();
    let total: f64 = rows.iter().map(|&i| scores[i]).sum();
    let estimate = total / n0 as f64;
    if plan.replicates == 0 {
        return (estimate, None);
    }
    let reps: Vec<f64> = (0..plan.replicates)
        .filter_map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(plan.seed ^ cell_seed ^ (b as u64) << 20);
            let mut sum = 0.0;
            let mut n0_b = 0usize;
            for _ in 0..rows.len() {
                let pick = rows[rng.gen_range(0..rows.len())];
                sum += scores[pick];
                if groups[pick] == Group::Minority {
                    n0_b += 1;
                }
            }
            (n0_b > 0).then_some(sum / n0_b as f64)
        })
        .collect();
    if reps.len() < 2 {
        return (estimate, None);
    }
    let sd = stats::sample_variance(&reps).sqrt();
    (estimate, Some((estimate - 1.96 * sd, estimate + 1.96 * sd)))
}

/// Cell-conditional direct effects over the grid: per-cell averages of the
/// direct-effect pseudo-outcome among rows in the cell, normalized by the
/// cell's minority count. Negative values are protective for the minority
/// group.
pub fn conditional_direct_effect(
    ds: &SfmDataset,
    fits: &NuisanceFits,
    grid: &CellGrid,
    opts: &CellOptions,
) -> Result<Heatmap> {
    grid.validate()?;
    let (ages, labels) = cell_coordinates(ds, fits)?;
    let scores = direct_pseudo_outcomes(fits);

    let nb = grid.age_bins.len();
    let nt = grid.admission_types.len();
    let mut cell_rows: Vec<Vec<Vec<usize>>> = vec![vec![Vec::new(); nt]; nb];
    for i in 0..fits.n {
        let Some(bi) = (!ages[i].is_nan()).then(|| grid.age_bin_of(ages[i])).flatten() else {
            continue;
        };
        let Some(ti) = labels[i].as_deref().and_then(|l| grid.type_of(l)) else { continue };
        cell_rows[bi][ti].push(i);
    }

    let mut values = vec![vec![None; nt]; nb];
    let mut ci_lo = vec![vec![None; nt]; nb];
    let mut ci_hi = vec![vec![None; nt]; nb];
    let mut n = vec![vec![0usize; nt]; nb];
    for bi in 0..nb {
        for ti in 0..nt {
            let rows = &cell_rows[bi][ti];
            let n0 = rows.iter().filter(|&&i| fits.group[i] == Group::Minority).count();
            n[bi][ti] = n0;
            if n0 < opts.cell_floor.max(1) {
                continue;
            }
            let (est, ci) = cell_estimate(
                &scores,
                &fits.group,
                rows,
                &opts.bootstrap,
                (bi * nt + ti) as u64 + 1,
            );
            values[bi][ti] = Some(est);
            if let Some((lo, hi)) = ci {
                ci_lo[bi][ti] = Some(lo);
                ci_hi[bi][ti] = Some(hi);
            }
        }
    }
    Ok(Heatmap {
        grid: grid.clone(),
        values,
        ci_lo,
        ci_hi,
        n,
        method: DR_CELL_MEAN_METHOD.into(),
    })
}

/// Age-binned effects: estimates with bootstrap intervals per bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinEffects {
    pub bins: Vec<(f64, f64)>,
    pub estimates: Vec<Option<f64>>,
    pub ci_lo: Vec<Option<f64>>,
    pub ci_hi: Vec<Option<f64>>,
    pub n: Vec<usize>,
}

/// Age-conditional negated indirect effects: per-bin averages of the
/// indirect pseudo-outcome over minority counts.
pub fn conditional_indirect_effect(
    ds: &SfmDataset,
    fits: &NuisanceFits,
    age_bins: &[(f64, f64)],
    opts: &CellOptions,
) -> Result<BinEffects> {
    if age_bins.is_empty() {
        return Err(Error::schema("need at least one age bin"));
    }
    let age_col = ds
        .schema
        .age
        .as_deref()
        .ok_or_else(|| Error::schema("indirect heterogeneity needs an age column"))?;
    let (ages_all, age_missing) = ds.numeric(age_col)?;
    let scores = indirect_pseudo_outcomes(fits);

    let mut bin_rows: Vec<Vec<usize>> = vec![Vec::new(); age_bins.len()];
    for i in 0..fits.n {
        let r = fits.rows[i];
        if age_missing[r] {
            continue;
        }
        if let Some(bi) =
            age_bins.iter().position(|&(lo, hi)| ages_all[r] >= lo && ages_all[r] <= hi)
        {
            bin_rows[bi].push(i);
        }
    }

    let mut out = BinEffects {
        bins: age_bins.to_vec(),
        estimates: vec![None; age_bins.len()],
        ci_lo: vec![None; age_bins.len()],
        ci_hi: vec![None; age_bins.len()],
        n: vec![0; age_bins.len()],
    };
    for (bi, rows) in bin_rows.iter().enumerate() {
        let n0 = rows.iter().filter(|&&i| fits.group[i] == Group::Minority).count();
        out.n[bi] = n0;
        if n0 < opts.cell_floor.max(1) {
            continue;
        }
        let (est, ci) =
            cell_estimate(&scores, &fits.group, rows, &opts.bootstrap, 0x5eed + bi as u64);
        out.estimates[bi] = Some(est);
        if let Some((lo, hi)) = ci {
            out.ci_lo[bi] = Some(lo);
            out.ci_hi[bi] = Some(hi);
        }
    }
    Ok(out)
}

/// Plain conditional proportions explaining the indirect-effect mechanism.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProportionCell {
    pub bin: (f64, f64),
    /// Group for urgent-share rows, urgency class for mortality rows.
    pub stratum: String,
    pub proportion: Option<f64>,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechanismProfiles {
    /// Share of urgent admissions per (group, age bin).
    pub urgent_share: Vec<ProportionCell>,
    /// Outcome rate per (urgency class, age bin).
    pub mortality: Vec<ProportionCell>,
}

/// Urgent-admission share by group x bin and outcome rate by urgency x bin,
/// with Wilson binomial intervals. Empty strata are masked.
pub fn mechanism_profiles(
    ds: &SfmDataset,
    age_bins: &[(f64, f64)],
    urgent_types: &[String],
) -> Result<MechanismProfiles> {
    let age_col = ds
        .schema
        .age
        .as_deref()
        .ok_or_else(|| Error::schema("mechanism profiles need an age column"))?;
    let (ages, age_missing) = ds.numeric(age_col)?;
    let adm_name = ds
        .schema
        .admission_type
        .as_deref()
        .ok_or_else(|| Error::schema("mechanism profiles need an admission-type column"))?;
    let adm = ds
        .column(adm_name)
        .ok_or_else(|| Error::schema(format!("column '{adm_name}' not in data")))?;
    let urgent: Vec<Option<bool>> = match &adm.data {
        ColumnData::Categorical { codes, levels } => (0..ds.n_rows)
            .map(|r| {
                (!adm.missing[r])
                    .then(|| urgent_types.iter().any(|t| *t == levels[codes[r] as usize]))
            })
            .collect(),
        ColumnData::Numeric(_) => {
            return Err(Error::validation("admission-type column must be categorical"))
        }
    };
    let groups = ds.attribute_groups();
    let (y, _) = ds.outcome_values(crate::data::OutcomeVar::Primary)?;

    let bin_of = |r: usize| -> Option<usize> {
        if age_missing[r] {
            return None;
        }
        age_bins.iter().position(|&(lo, hi)| ages[r] >= lo && ages[r] <= hi)
    };

    let mut urgent_share = Vec::new();
    for g in Group::BOTH {
        for (bi, &bin) in age_bins.iter().enumerate() {
            let rows: Vec<usize> = (0..ds.n_rows)
                .filter(|&r| groups[r] == Some(g) && bin_of(r) == Some(bi) && urgent[r].is_some())
                .collect();
            let n = rows.len();
            let cell = if n == 0 {
                ProportionCell {
                    bin,
                    stratum: g.to_string(),
                    proportion: None,
                    ci_lo: None,
                    ci_hi: None,
                    n,
                }
            } else {
                let k = rows.iter().filter(|&&r| urgent[r] == Some(true)).count() as f64;
                let p = k / n as f64;
                let (lo, hi) = stats::wilson_ci(k, n as f64, 1.96);
                ProportionCell {
                    bin,
                    stratum: g.to_string(),
                    proportion: Some(p),
                    ci_lo: Some(lo),
                    ci_hi: Some(hi),
                    n,
                }
            };
            urgent_share.push(cell);
        }
    }

    let mut mortality = Vec::new();
    for (class, want_urgent) in [("urgent", true), ("elective", false)] {
        for (bi, &bin) in age_bins.iter().enumerate() {
            let rows: Vec<usize> = (0..ds.n_rows)
                .filter(|&r| bin_of(r) == Some(bi) && urgent[r] == Some(want_urgent))
                .collect();
            let n = rows.len();
            let cell = if n == 0 {
                ProportionCell {
                    bin,
                    stratum: class.into(),
                    proportion: None,
                    ci_lo: None,
                    ci_hi: None,
                    n,
                }
            } else {
                let k = rows.iter().map(|&r| y[r]).sum::<f64>();
                let p = k / n as f64;
                let (lo, hi) = stats::wilson_ci(k, n as f64, 1.96);
                ProportionCell {
                    bin,
                    stratum: class.into(),
                    proportion: Some(p),
                    ci_lo: Some(lo),
                    ci_hi: Some(hi),
                    n,
                }
            };
            mortality.push(cell);
        }
    }

    Ok(MechanismProfiles { urgent_share, mortality })
}

/// Pearson correlation between two heatmaps over their unmasked cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub rho: f64,
    pub cells_used: usize,
    /// Cells skipped because one side was masked (pairwise-complete
    /// fallback; nonzero values deserve a caveat in reports).
    pub masked_skipped: usize,
}

/// The 12-entry (in the default grid) Pearson correlation between two
/// heatmaps; `negate_l` flips the sign of the second heatmap first.
pub fn heatmap_correlation(h: &Heatmap, l: &Heatmap, negate_l: bool) -> Result<Correlation> {
    let (a, mut b, skipped) = h.paired(l)?;
    if negate_l {
        b.iter_mut().for_each(|v| *v = -*v);
    }
    if a.len() < 2 {
        return Err(Error::degenerate("correlation needs at least two unmasked cell pairs"));
    }
    let rho = stats::pearson(&a, &b)?;
    Ok(Correlation { rho, cells_used: a.len(), masked_skipped: skipped })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationCi {
    pub rho: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub replicates_used: usize,
}

/// Bootstrap confidence interval for a heatmap correlation: both heatmaps
/// are re-estimated on row resamples and a Gaussian approximation is
/// applied to the replicate correlations.
pub fn heatmap_correlation_ci<H, L>(
    n_rows: usize,
    estimate_h: H,
    estimate_l: L,
    negate_l: bool,
    plan: &BootstrapPlan,
) -> Result<CorrelationCi>
where
    H: Fn(&[usize]) -> Result<Heatmap> + Sync,
    L: Fn(&[usize]) -> Result<Heatmap> + Sync,
{
    if n_rows == 0 {
        return Err(Error::degenerate("cannot bootstrap an empty dataset"));
    }
    let identity: Vec<usize> = (0..n_rows).collect();
    let full = heatmap_correlation(&estimate_h(&identity)?, &estimate_l(&identity)?, negate_l)?;

    let rhos: Vec<f64> = (0..plan.replicates)
        .into_par_iter()
        .filter_map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(plan.seed.wrapping_add(0x9e3779b9).wrapping_mul(b as u64 + 1));
            let idx: Vec<usize> = (0..n_rows).map(|_| rng.gen_range(0..n_rows)).collect();
            let h = estimate_h(&idx).ok()?;
            let l = estimate_l(&idx).ok()?;
            heatmap_correlation(&h, &l, negate_l).ok().map(|c| c.rho)
        })
        .collect();
    if rhos.len() < 2 {
        return Err(Error::degenerate("bootstrap produced fewer than 2 valid replicates"));
    }
    let sd = stats::sample_variance(&rhos).sqrt();
    Ok(CorrelationCi {
        rho: full.rho,
        ci_lo: full.rho - 1.96 * sd,
        ci_hi: full.rho + 1.96 * sd,
        replicates_used: rhos.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crossfit::{fit_crossfit, NuisanceConfig};
    use crate::data::{Column, RoleSchema};
    use crate::scm::{ComponentDef, LevelDef, ScmSpec, SpecialRole};

    /// 2-bin x 2-type spec where the direct effect lives only in Medical
    /// admissions.
    pub(crate) fn medical_only_spec() -> ScmSpec {
        let z = vec![ComponentDef {
            name: "age".into(),
            levels: vec![LevelDef::numeric(40.0), LevelDef::numeric(80.0)],
            special: Some(SpecialRole::Age),
        }];
        let w = vec![ComponentDef {
            name: "admission_type".into(),
            levels: vec![LevelDef::named("Medical"), LevelDef::named("Surgery-Elective")],
            special: Some(SpecialRole::AdmissionType),
        }];
        // Mild confounding and a mediator mechanism that depends on x.
        let joint_xz = vec![vec![0.22, 0.18], vec![0.28, 0.32]];
        let w_given_xz = vec![
            vec![vec![0.7, 0.3], vec![0.6, 0.4]],
            vec![vec![0.45, 0.55], vec![0.35, 0.65]],
        ];
        // Direct effect: +0.08 on Medical cells only.
        let p_y = vec![
            vec![vec![0.20, 0.10], vec![0.30, 0.15]],
            vec![vec![0.28, 0.10], vec![0.38, 0.15]],
        ];
        ScmSpec {
            name: "medical-only-direct".into(),
            z,
            w,
            joint_xz,
            w_given_xz,
            p_y,
            additive_risk: false,
        }
    }

    fn grid_2x2() -> CellGrid {
        CellGrid::new(
            vec![(18.0, 60.0), (61.0, 100.0)],
            vec!["Medical".into(), "Surgery-Elective".into()],
        )
        .unwrap()
    }

    #[test]
    fn grid_validation_and_binning() {
        assert!(CellGrid::new(vec![], vec!["a".into()]).is_err());
        assert!(CellGrid::new(vec![(50.0, 40.0)], vec!["a".into()]).is_err());
        assert!(CellGrid::new(vec![(18.0, 60.0), (60.0, 80.0)], vec!["a".into()]).is_err());
        let grid = CellGrid::new(CellGrid::default_age_bins(), vec!["a".into()]).unwrap();
        assert_eq!(grid.age_bin_of(18.0), Some(0));
        assert_eq!(grid.age_bin_of(54.0), Some(0));
        assert_eq!(grid.age_bin_of(54.5), None);
        assert_eq!(grid.age_bin_of(75.0), Some(3));
        assert_eq!(grid.age_bin_of(101.0), None);
    }

    #[test]
    fn direct_effect_localizes_to_medical_cells() {
        let spec = medical_only_spec();
        let ds = spec.sample_dataset(30_000, 71).unwrap();
        let fits = fit_crossfit(&ds, &NuisanceConfig::default()).unwrap();
        let grid = grid_2x2();
        let opts = CellOptions { bootstrap: BootstrapPlan { replicates: 150, seed: 5 }, cell_floor: 30 };
        let heat = conditional_direct_effect(&ds, &fits, &grid, &opts).unwrap();
        let oracle = spec.oracle_de_cells(&grid).unwrap();

        for bi in 0..2 {
            for ti in 0..2 {
                let est = heat.values[bi][ti].expect("cell populated");
                let truth = oracle[bi][ti].unwrap();
                let half = (heat.ci_hi[bi][ti].unwrap() - heat.ci_lo[bi][ti].unwrap()) / 2.0;
                let se = half / 1.96;
                assert!(
                    (est - truth).abs() <= 3.0 * se,
                    "cell ({bi},{ti}): {est} vs oracle {truth} (se {se})"
                );
                if ti == 1 {
                    assert!(truth.abs() < 1e-12, "elective cells have no direct effect");
                    assert!(est.abs() <= 3.0 * se, "elective cell should be null: {est}");
                }
            }
        }
    }

    #[test]
    fn cell_weighted_average_matches_global_direct() {
        let spec = medical_only_spec();
        let ds = spec.sample_dataset(20_000, 57).unwrap();
        let fits = fit_crossfit(&ds, &NuisanceConfig::default()).unwrap();
        let grid = grid_2x2();
        let heat = conditional_direct_effect(
            &ds,
            &fits,
            &grid,
            &CellOptions { bootstrap: BootstrapPlan { replicates: 0, seed: 0 }, cell_floor: 1 },
        )
        .unwrap();
        let decomp = crate::estimate::decompose_tv(&fits).unwrap();
        let mut weighted = 0.0;
        let mut total = 0usize;
        for bi in 0..2 {
            for ti in 0..2 {
                weighted += heat.values[bi][ti].unwrap() * heat.n[bi][ti] as f64;
                total += heat.n[bi][ti];
            }
        }
        weighted /= total as f64;
        assert!(
            (weighted - decomp.direct.value).abs() <= 2.0 * decomp.direct.se,
            "weighted {weighted} vs global {}",
            decomp.direct.value
        );
    }

    #[test]
    fn small_cells_are_masked() {
        let spec = medical_only_spec();
        let ds = spec.sample_dataset(400, 3).unwrap();
        let fits = fit_crossfit(&ds, &NuisanceConfig::default()).unwrap();
        let heat = conditional_direct_effect(
            &ds,
            &fits,
            &grid_2x2(),
            &CellOptions { cell_floor: 10_000, ..Default::default() },
        )
        .unwrap();
        assert_eq!(heat.masked_cells(), 4);
    }

    /// Spec with the attribute-to-mediator push growing with age.
    fn ie_growing_spec() -> ScmSpec {
        let ages = [30.0, 60.0, 80.0];
        let z = vec![ComponentDef {
            name: "age".into(),
            levels: ages.iter().map(|&a| LevelDef::numeric(a)).collect(),
            special: Some(SpecialRole::Age),
        }];
        let w = vec![ComponentDef {
            name: "admission_type".into(),
            levels: vec![LevelDef::named("Medical"), LevelDef::named("Surgery-Elective")],
            special: Some(SpecialRole::AdmissionType),
        }];
        let joint_xz = vec![vec![0.15, 0.13, 0.12], vec![0.2, 0.2, 0.2]];
        // Minority gets more medical admissions; the push grows with age.
        let w_given_xz = vec![
            vec![vec![0.75, 0.25], vec![0.8, 0.2], vec![0.85, 0.15]],
            vec![vec![0.7, 0.3], vec![0.6, 0.4], vec![0.45, 0.55]],
        ];
        let p_y = vec![
            vec![vec![0.25, 0.08], vec![0.3, 0.1], vec![0.35, 0.12]],
            vec![vec![0.25, 0.08], vec![0.3, 0.1], vec![0.35, 0.12]],
        ];
        ScmSpec {
            name: "ie-grows-with-age".into(),
            z,
            w,
            joint_xz,
            w_given_xz,
            p_y,
            additive_risk: false,
        }
    }

    #[test]
    fn indirect_effect_grows_with_age() {
        let spec = ie_growing_spec();
        let bins = vec![(18.0, 45.0), (46.0, 70.0), (71.0, 100.0)];
        let oracle = spec.oracle_ie_bins(&bins).unwrap();
        let truths: Vec<f64> = oracle.iter().map(|v| v.unwrap()).collect();
        assert!(
            truths[0].abs() < truths[1].abs() && truths[1].abs() < truths[2].abs(),
            "oracle magnitudes increase: {truths:?}"
        );
        let ds = spec.sample_dataset(40_000, 23).unwrap();
        let fits = fit_crossfit(&ds, &NuisanceConfig::default()).unwrap();
        let est = conditional_indirect_effect(
            &ds,
            &fits,
            &bins,
            &CellOptions { bootstrap: BootstrapPlan { replicates: 120, seed: 2 }, cell_floor: 30 },
        )
        .unwrap();
        for bi in 0..3 {
            let e = est.estimates[bi].unwrap();
            let half = (est.ci_hi[bi].unwrap() - est.ci_lo[bi].unwrap()) / 2.0;
            assert!(
                (e - truths[bi]).abs() <= 3.0 * (half / 1.96),
                "bin {bi}: {e} vs {}",
                truths[bi]
            );
        }
    }

    #[test]
    fn no_mediator_edge_gives_null_bins() {
        let mut spec = ie_growing_spec();
        spec.w_given_xz[1] = spec.w_given_xz[0].clone();
        let bins = vec![(18.0, 45.0), (46.0, 70.0), (71.0, 100.0)];
        let ds = spec.sample_dataset(20_000, 27).unwrap();
        let fits = fit_crossfit(&ds, &NuisanceConfig::default()).unwrap();
        let est = conditional_indirect_effect(
            &ds,
            &fits,
            &bins,
            &CellOptions { bootstrap: BootstrapPlan { replicates: 120, seed: 4 }, cell_floor: 30 },
        )
        .unwrap();
        for bi in 0..3 {
            let e = est.estimates[bi].unwrap();
            let half = (est.ci_hi[bi].unwrap() - est.ci_lo[bi].unwrap()) / 2.0;
            assert!(e.abs() <= 3.0 * (half / 1.96), "bin {bi} should be null, got {e}");
        }
    }

    fn profile_fixture(urgent_min: f64, urgent_maj: f64) -> SfmDataset {
        // Two age bins x two groups with exact urgent shares.
        let mut xs = Vec::new();
        let mut ages = Vec::new();
        let mut adm = Vec::new();
        let mut y = Vec::new();
        for (group, share) in [("m", urgent_min), ("M", urgent_maj)] {
            for bin_age in [30.0, 70.0] {
                let n = 100usize;
                let urgent_n = (share * n as f64).round() as usize;
                for i in 0..n {
                    xs.push(Some(group));
                    ages.push(bin_age);
                    adm.push(Some(if i < urgent_n { "Medical" } else { "Surgery-Elective" }));
                    y.push(if bin_age > 50.0 { (i % 4 == 0) as i32 as f64 } else { (i % 10 == 0) as i32 as f64 });
                }
            }
        }
        let cols = vec![
            Column::categorical("x", &xs),
            Column::numeric("age", ages),
            Column::categorical("adm", &adm),
            Column::numeric("y", y),
        ];
        let mut schema = RoleSchema::new("x", "m", "M", vec!["age".into()], vec!["adm".into()], "y");
        schema.age = Some("age".into());
        schema.admission_type = Some("adm".into());
        crate::data::SfmDataset::from_columns(cols, schema, 0).unwrap()
    }

    #[test]
    fn urgent_share_reproduces_constants() {
        let ds = profile_fixture(0.7, 0.5);
        let bins = vec![(18.0, 50.0), (51.0, 100.0)];
        let prof =
            mechanism_profiles(&ds, &bins, &["Medical".into(), "Surgery-Emergency".into()])
                .unwrap();
        for cell in &prof.urgent_share {
            let expect = if cell.stratum == "minority" { 0.7 } else { 0.5 };
            assert!((cell.proportion.unwrap() - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn all_elective_gives_zero_urgent_share() {
        let ds = profile_fixture(0.0, 0.0);
        let bins = vec![(18.0, 50.0), (51.0, 100.0)];
        let prof =
            mechanism_profiles(&ds, &bins, &["Medical".into(), "Surgery-Emergency".into()])
                .unwrap();
        for cell in &prof.urgent_share {
            assert_eq!(cell.proportion.unwrap(), 0.0);
        }
    }

    #[test]
    fn mortality_profile_is_monotone_on_monotone_fixture() {
        let ds = profile_fixture(0.5, 0.5);
        let bins = vec![(18.0, 50.0), (51.0, 100.0)];
        let prof = mechanism_profiles(&ds, &bins, &["Medical".into()]).unwrap();
        for class in ["urgent", "elective"] {
            let rates: Vec<f64> = prof
                .mortality
                .iter()
                .filter(|c| c.stratum == class)
                .map(|c| c.proportion.unwrap())
                .collect();
            assert!(rates[0] < rates[1], "{class}: {rates:?}");
        }
    }

    fn plain_heatmap(values: Vec<Vec<Option<f64>>>) -> Heatmap {
        let grid = CellGrid::new(
            (0..values.len()).map(|i| (i as f64 * 10.0, i as f64 * 10.0 + 9.0)).collect(),
            (0..values[0].len()).map(|j| format!("t{j}")).collect(),
        )
        .unwrap();
        let shape_lo = values.iter().map(|r| vec![None; r.len()]).collect::<Vec<_>>();
        Heatmap {
            n: values.iter().map(|r| vec![100; r.len()]).collect(),
            ci_lo: shape_lo.clone(),
            ci_hi: shape_lo,
            grid,
            values,
            method: "test".into(),
        }
    }

    #[test]
    fn correlation_identity_and_affine() {
        let h = plain_heatmap(vec![
            vec![Some(1.0), Some(2.0)],
            vec![Some(3.0), Some(4.0)],
        ]);
        assert!((heatmap_correlation(&h, &h, false).unwrap().rho - 1.0).abs() < 1e-12);
        let l = plain_heatmap(vec![
            vec![Some(2.0), Some(4.0)],
            vec![Some(6.0), Some(8.0)],
        ]);
        assert!((heatmap_correlation(&h, &l, false).unwrap().rho - 1.0).abs() < 1e-12);
        // Negation flips the sign.
        assert!((heatmap_correlation(&h, &l, true).unwrap().rho + 1.0).abs() < 1e-12);
    }

    #[test]
    fn correlation_errors_and_masking() {
        let h = plain_heatmap(vec![vec![Some(1.0), Some(1.0)], vec![Some(1.0), Some(1.0)]]);
        let l = plain_heatmap(vec![vec![Some(1.0), Some(2.0)], vec![Some(3.0), Some(4.0)]]);
        assert!(matches!(heatmap_correlation(&h, &l, false), Err(Error::Degenerate(_))));
        let masked = plain_heatmap(vec![vec![Some(1.0), None], vec![Some(3.0), Some(9.0)]]);
        let c = heatmap_correlation(&masked, &l, false).unwrap();
        assert_eq!(c.cells_used, 3);
        assert_eq!(c.masked_skipped, 1);
    }

    #[test]
    fn bootstrap_ci_width_is_stable_in_replicates() {
        // Synthetic rows: two columns whose cell means define the heatmaps.
        let n = 600;
        let grid = CellGrid::new(vec![(0.0, 0.0), (1.0, 1.0)], vec!["a".into(), "b".into()]).unwrap();
        let cell_of = |i: usize| (i % 2, (i / 2) % 2);
        let h_vals: Vec<f64> = (0..n).map(|i| {
            let (r, c) = cell_of(i);
            (r * 2 + c) as f64 + ((i * 37) % 11) as f64 / 11.0
        }).collect();
        let l_vals: Vec<f64> = (0..n).map(|i| {
            let (r, c) = cell_of(i);
            (r * 3 + c * 2) as f64 + ((i * 17) % 7) as f64 / 7.0
        }).collect();
        let make = |vals: &[f64]| {
            let vals = vals.to_vec();
            move |idx: &[usize]| -> Result<Heatmap> {
                let mut sums = [[0.0f64; 2]; 2];
                let mut counts = [[0usize; 2]; 2];
                for &i in idx {
                    let (r, c) = (i % 2, (i / 2) % 2);
                    sums[r][c] += vals[i];
                    counts[r][c] += 1;
                }
                let values = (0..2)
                    .map(|r| {
                        (0..2)
                            .map(|c| (counts[r][c] > 0).then(|| sums[r][c] / counts[r][c] as f64))
                            .collect()
                    })
                    .collect();
                Ok(Heatmap {
                    grid: CellGrid::new(vec![(0.0, 0.0), (1.0, 1.0)], vec!["a".into(), "b".into()]).unwrap(),
                    values,
                    ci_lo: vec![vec![None; 2]; 2],
                    ci_hi: vec![vec![None; 2]; 2],
                    n: vec![vec![0; 2]; 2],
                    method: "test".into(),
                })
            }
        };
        let _ = grid;
        let small = heatmap_correlation_ci(
            n,
            make(&h_vals),
            make(&l_vals),
            false,
            &BootstrapPlan { replicates: 200, seed: 9 },
        )
        .unwrap();
        let large = heatmap_correlation_ci(
            n,
            make(&h_vals),
            make(&l_vals),
            false,
            &BootstrapPlan { replicates: 2000, seed: 9 },
        )
        .unwrap();
        let w_small = small.ci_hi - small.ci_lo;
        let w_large = large.ci_hi - large.ci_lo;
        assert!(
            (w_small - w_large).abs() / w_large < 0.2,
            "widths {w_small} vs {w_large}"
        );
        assert_eq!(small.rho, large.rho);
    }
}
