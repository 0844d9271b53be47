//! Cross-fitted nuisance functions. Every row receives out-of-fold
//! predictions for the outcome regressions mu(x,z,w) = E[Y | x,z,w], the
//! propensities pi_x(z) = P(X=x|Z=z) and rho_x(z,w) = P(X=x|Z=z,W=w), and
//! the nested regressions eta_{a,b}(z) = E[mu(b,Z,W) | X=a, Z=z], produced
//! by models that never saw the row's fold.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{build_features, FeatureMatrix, Group, SfmDataset};
use crate::error::{Error, Result};
use crate::learner::{LearnerSpec, Loss, Model};
use crate::scm::ScmSpec;

pub use crate::data::OutcomeVar;

/// Fold bookkeeping: a partition of rows reproducible from the seed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CrossFitPlan {
    pub folds: usize,
    pub seed: u64,
    /// Fold id per row.
    pub assignment: Vec<usize>,
}

impl CrossFitPlan {
    /// Random assignment stratified by attribute group, so every fold (and
    /// every training complement) keeps both levels whenever each group has
    /// at least two members.
    pub fn stratified(groups: &[Group], folds: usize, seed: u64) -> Result<CrossFitPlan> {
        if folds < 2 {
            return Err(Error::schema("cross-fitting needs at least 2 folds"));
        }
        if groups.len() < folds {
            return Err(Error::degenerate(format!(
                "cannot split {} rows into {folds} folds",
                groups.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut assignment = vec![0usize; groups.len()];
        for g in Group::BOTH {
            let mut idx: Vec<usize> = (0..groups.len()).filter(|&i| groups[i] == g).collect();
            idx.shuffle(&mut rng);
            for (pos, row) in idx.into_iter().enumerate() {
                assignment[row] = pos % folds;
            }
        }
        let plan = CrossFitPlan { folds, seed, assignment };
        plan.check_partition()?;
        Ok(plan)
    }

    fn check_partition(&self) -> Result<()> {
        let mut counts = vec![0usize; self.folds];
        for &f in &self.assignment {
            if f >= self.folds {
                return Err(Error::internal("fold id out of range"));
            }
            counts[f] += 1;
        }
        if counts.iter().any(|&c| c == 0) {
            return Err(Error::degenerate("a fold is empty"));
        }
        Ok(())
    }

    /// True when, for every fold, the training complement contains both
    /// attribute levels.
    fn complements_have_both_levels(&self, groups: &[Group]) -> bool {
        for fold in 0..self.folds {
            for g in Group::BOTH {
                let present = groups
                    .iter()
                    .zip(&self.assignment)
                    .any(|(&gi, &fi)| fi != fold && gi == g);
                if !present {
                    return false;
                }
            }
        }
        true
    }
}

/// Configuration for one cross-fitting run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuisanceConfig {
    pub learner: LearnerSpec,
    pub folds: usize,
    pub seed: u64,
    /// Probability clipping bound; all probability predictions are forced
    /// into [clip, 1-clip].
    pub clip: f64,
    pub outcome: OutcomeVar,
}

impl Default for NuisanceConfig {
    fn default() -> Self {
        NuisanceConfig {
            learner: LearnerSpec::default(),
            folds: 5,
            seed: 0,
            clip: 0.01,
            outcome: OutcomeVar::Primary,
        }
    }
}

/// Out-of-fold nuisance predictions over the estimation rows (rows with
/// observed attribute and outcome).
#[derive(Debug, Clone)]
pub struct NuisanceFits {
    /// Number of estimation rows.
    pub n: usize,
    /// Original dataset row index per estimation row.
    pub rows: Vec<usize>,
    pub group: Vec<Group>,
    pub y: Vec<f64>,
    /// mu[b][i] = E[Y | X=b, Z_i, W_i].
    pub mu: [Vec<f64>; 2],
    /// P(X = minority | Z_i).
    pub pi_minority: Vec<f64>,
    /// P(X = minority | Z_i, W_i).
    pub rho_minority: Vec<f64>,
    /// eta[a][b][i] = E[mu(b, Z, W) | X=a, Z_i].
    pub eta: [[Vec<f64>; 2]; 2],
    pub fold: Vec<usize>,
    /// Folds actually used (may be below the requested count).
    pub folds_used: usize,
    pub clip: f64,
    pub config: NuisanceConfig,
}

impl NuisanceFits {
    pub fn pi(&self, x: Group, i: usize) -> f64 {
        match x {
            Group::Minority => self.pi_minority[i],
            Group::Majority => 1.0 - self.pi_minority[i],
        }
    }

    pub fn rho(&self, x: Group, i: usize) -> f64 {
        match x {
            Group::Minority => self.rho_minority[i],
            Group::Majority => 1.0 - self.rho_minority[i],
        }
    }

    /// m(x, z) = E[Y | X=x, Z=z]; the eta diagonal.
    pub fn m(&self, x: Group) -> &[f64] {
        &self.eta[x.index()][x.index()]
    }

    pub fn count(&self, g: Group) -> usize {
        self.group.iter().filter(|&&gi| gi == g).count()
    }

    /// Empirical share of X = g among estimation rows.
    pub fn p_group(&self, g: Group) -> f64 {
        self.count(g) as f64 / self.n as f64
    }

    /// Per-row minimum group propensity min(rho_x0, rho_x1).
    pub fn min_propensity(&self) -> Vec<f64> {
        self.rho_minority.iter().map(|&r| r.min(1.0 - r)).collect()
    }
}

/// Per-row minimum propensity e_min(z,w) = min over groups of rho.
pub fn predict_min_propensity(fits: &NuisanceFits) -> Vec<f64> {
    fits.min_propensity()
}

fn clip_to(values: &mut [f64], clip: f64) {
    for v in values {
        *v = v.clamp(clip, 1.0 - clip);
    }
}

fn take_rows(fm: &FeatureMatrix, idx: &[usize]) -> FeatureMatrix {
    FeatureMatrix {
        n: idx.len(),
        names: fm.names.clone(),
        cols: fm.cols.iter().map(|c| idx.iter().map(|&i| c[i]).collect()).collect(),
    }
}

/// Fit all nuisance functions with K-fold cross-fitting. If some training
/// complement would lack an attribute level, the fold count is reduced;
/// two folds failing is an error.
pub fn fit_crossfit(ds: &SfmDataset, config: &NuisanceConfig) -> Result<NuisanceFits> {
    config.learner.validate()?;
    if !(config.clip > 0.0 && config.clip < 0.5) {
        return Err(Error::schema("clip must be in (0, 0.5)"));
    }
    let groups_all = ds.attribute_groups();
    let (y_all, y_missing) = ds.outcome_values(config.outcome)?;

    let rows: Vec<usize> = (0..ds.n_rows)
        .filter(|&i| groups_all[i].is_some() && !y_missing[i])
        .collect();
    if rows.is_empty() {
        return Err(Error::degenerate("no rows with observed attribute and outcome"));
    }
    let group: Vec<Group> = rows.iter().map(|&i| groups_all[i].unwrap()).collect();
    let y: Vec<f64> = rows.iter().map(|&i| y_all[i]).collect();
    for g in Group::BOTH {
        if !group.contains(&g) {
            return Err(Error::degenerate(format!("no rows in the {g} group")));
        }
    }

    let n = rows.len();
    let zw_cols: Vec<String> = ds
        .schema
        .confounders
        .iter()
        .chain(ds.schema.mediators.iter())
        .cloned()
        .collect();
    let features_zw = build_features(ds, &zw_cols, &rows)?;
    let features_z = build_features(ds, &ds.schema.confounders, &rows)?;

    // Reduce the fold count until every training complement has both levels.
    let mut plan = None;
    let max_folds = config.folds.min(n).max(2);
    for k in (2..=max_folds).rev() {
        let candidate = CrossFitPlan::stratified(&group, k, config.seed)?;
        if candidate.complements_have_both_levels(&group) {
            plan = Some(candidate);
            break;
        }
    }
    let plan = plan.ok_or_else(|| {
        Error::degenerate("cannot form 2 folds whose training sets contain both attribute levels")
    })?;

    struct FoldOutput {
        test: Vec<usize>,
        mu: [Vec<f64>; 2],
        pi: Vec<f64>,
        rho: Vec<f64>,
        eta: [[Vec<f64>; 2]; 2],
    }

    let fold_outputs: Vec<Result<FoldOutput>> = (0..plan.folds)
        .into_par_iter()
        .map(|fold| {
            let train: Vec<usize> =
                (0..n).filter(|&i| plan.assignment[i] != fold).collect();
            let test: Vec<usize> = (0..n).filter(|&i| plan.assignment[i] == fold).collect();
            let fm_zw_train = take_rows(&features_zw, &train);
            let fm_z_train = take_rows(&features_z, &train);
            let fm_zw_test = take_rows(&features_zw, &test);
            let fm_z_test = take_rows(&features_z, &test);

            // Outcome regressions per attribute level.
            let mut mu_models = Vec::with_capacity(2);
            for g in Group::BOTH {
                let g_local: Vec<usize> =
                    (0..train.len()).filter(|&j| group[train[j]] == g).collect();
                if g_local.is_empty() {
                    return Err(Error::internal("training fold lacks an attribute level"));
                }
                let fm = take_rows(&fm_zw_train, &g_local);
                let target: Vec<f64> = g_local.iter().map(|&j| y[train[j]]).collect();
                mu_models.push(Model::fit(&config.learner, &fm, &target, Loss::Logistic)?);
            }

            // Propensities.
            let minority_target: Vec<f64> = train
                .iter()
                .map(|&i| if group[i] == Group::Minority { 1.0 } else { 0.0 })
                .collect();
            let pi_model =
                Model::fit(&config.learner, &fm_z_train, &minority_target, Loss::Logistic)?;
            let rho_model =
                Model::fit(&config.learner, &fm_zw_train, &minority_target, Loss::Logistic)?;

            // Nested regressions: regress clipped mu(b, Z, W) predictions on
            // Z over training rows with X = a.
            let mut eta_out: [[Vec<f64>; 2]; 2] = Default::default();
            let mut mu_on_train: Vec<Vec<f64>> = Vec::with_capacity(2);
            for b in Group::BOTH {
                let mut preds = mu_models[b.index()].predict(&fm_zw_train);
                clip_to(&mut preds, config.clip);
                mu_on_train.push(preds);
            }
            for a in Group::BOTH {
                let a_local: Vec<usize> =
                    (0..train.len()).filter(|&j| group[train[j]] == a).collect();
                let fm = take_rows(&fm_z_train, &a_local);
                for b in Group::BOTH {
                    let target: Vec<f64> =
                        a_local.iter().map(|&j| mu_on_train[b.index()][j]).collect();
                    let model = Model::fit(&config.learner, &fm, &target, Loss::Squared)?;
                    eta_out[a.index()][b.index()] = model.predict(&fm_z_test);
                }
            }

            Ok(FoldOutput {
                test,
                mu: [
                    mu_models[0].predict(&fm_zw_test),
                    mu_models[1].predict(&fm_zw_test),
                ],
                pi: pi_model.predict(&fm_z_test),
                rho: rho_model.predict(&fm_zw_test),
                eta: eta_out,
            })
        })
        .collect();

    let mut mu = [vec![0.0; n], vec![0.0; n]];
    let mut pi_minority = vec![0.0; n];
    let mut rho_minority = vec![0.0; n];
    let mut eta: [[Vec<f64>; 2]; 2] = [
        [vec![0.0; n], vec![0.0; n]],
        [vec![0.0; n], vec![0.0; n]],
    ];
    for out in fold_outputs {
        let out = out?;
        for (j, &i) in out.test.iter().enumerate() {
            mu[0][i] = out.mu[0][j];
            mu[1][i] = out.mu[1][j];
            pi_minority[i] = out.pi[j];
            rho_minority[i] = out.rho[j];
            for a in 0..2 {
                for b in 0..2 {
                    eta[a][b][i] = out.eta[a][b][j];
                }
            }
        }
    }

    for arr in mu.iter_mut() {
        clip_to(arr, config.clip);
    }
    clip_to(&mut pi_minority, config.clip);
    clip_to(&mut rho_minority, config.clip);
    for row in eta.iter_mut() {
        for arr in row.iter_mut() {
            clip_to(arr, config.clip);
        }
    }

    Ok(NuisanceFits {
        n,
        rows,
        group,
        y,
        mu,
        pi_minority,
        rho_minority,
        eta,
        fold: plan.assignment.clone(),
        folds_used: plan.folds,
        clip: config.clip,
        config: config.clone(),
    })
}

/// Nuisance fits filled with the true mechanism values of a spec, for
/// datasets sampled from that spec. Test-oracle construction: lets the
/// estimator be exercised with exactly-correct (or deliberately corrupted)
/// nuisances, independent of any learner.
pub fn oracle_nuisance_fits(spec: &ScmSpec, ds: &SfmDataset, clip: f64) -> Result<NuisanceFits> {
    spec.validate()?;
    let groups_all = ds.attribute_groups();
    let (y_all, y_missing) = ds.outcome_values(OutcomeVar::Primary)?;
    let rows: Vec<usize> = (0..ds.n_rows)
        .filter(|&i| groups_all[i].is_some() && !y_missing[i])
        .collect();
    let n = rows.len();
    let group: Vec<Group> = rows.iter().map(|&i| groups_all[i].unwrap()).collect();
    let y: Vec<f64> = rows.iter().map(|&i| y_all[i]).collect();

    let z_cfg = config_indices(spec, ds, &rows, true)?;
    let w_cfg = config_indices(spec, ds, &rows, false)?;

    let mut mu = [vec![0.0; n], vec![0.0; n]];
    let mut pi_minority = vec![0.0; n];
    let mut rho_minority = vec![0.0; n];
    let mut eta: [[Vec<f64>; 2]; 2] = [
        [vec![0.0; n], vec![0.0; n]],
        [vec![0.0; n], vec![0.0; n]],
    ];
    for i in 0..n {
        let (zi, wi) = (z_cfg[i], w_cfg[i]);
        for b in 0..2 {
            mu[b][i] = spec.p_y[b][zi][wi];
        }
        pi_minority[i] = spec.pi_minority(zi);
        rho_minority[i] = spec.rho_minority(zi, wi);
        for a in 0..2 {
            for b in 0..2 {
                let mut v = 0.0;
                for w in 0..spec.n_w() {
                    v += spec.w_given_xz[a][zi][w] * spec.p_y[b][zi][w];
                }
                eta[a][b][i] = v;
            }
        }
    }
    for arr in mu.iter_mut() {
        clip_to(arr, clip);
    }
    clip_to(&mut pi_minority, clip);
    clip_to(&mut rho_minority, clip);
    for row in eta.iter_mut() {
        for arr in row.iter_mut() {
            clip_to(arr, clip);
        }
    }

    Ok(NuisanceFits {
        n,
        rows,
        group,
        y,
        mu,
        pi_minority,
        rho_minority,
        eta,
        fold: vec![0; n],
        folds_used: 1,
        clip,
        config: NuisanceConfig { clip, ..Default::default() },
    })
}

/// Recover per-row component config indices by matching dataset cells to
/// spec levels.
pub(crate) fn config_indices(
    spec: &ScmSpec,
    ds: &SfmDataset,
    rows: &[usize],
    confounders: bool,
) -> Result<Vec<usize>> {
    let comps = if confounders { &spec.z } else { &spec.w };
    let mut level_per_comp: Vec<Vec<usize>> = Vec::with_capacity(comps.len());
    for comp in comps {
        let col = ds
            .column(&comp.name)
            .ok_or_else(|| Error::schema(format!("column '{}' missing for oracle fits", comp.name)))?;
        let levels: Vec<usize> = rows
            .iter()
            .map(|&r| {
                let cell = col.cell_text(r).unwrap_or_default();
                comp.levels
                    .iter()
                    .position(|l| {
                        l.label == cell
                            || l.value
                                .map(|v| cell.parse::<f64>().map(|c| c == v).unwrap_or(false))
                                .unwrap_or(false)
                    })
                    .ok_or_else(|| {
                        Error::validation(format!(
                            "cell '{cell}' does not match any level of component '{}'",
                            comp.name
                        ))
                    })
            })
            .collect::<Result<_>>()?;
        level_per_comp.push(levels);
    }
    let mut out = vec![0usize; rows.len()];
    for i in 0..rows.len() {
        let mut idx = 0;
        for (ci, comp) in comps.iter().enumerate() {
            idx = idx * comp.cardinality() + level_per_comp[ci][i];
        }
        out[i] = idx;
    }
    Ok(out)
}
