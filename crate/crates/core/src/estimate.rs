//! One-step debiased estimation of nested counterfactual means
//! psi(a,b,c) = E[Y_{b,W_a} | X=c] and the total-variation decomposition
//! assembled from them.
//!
//! The per-row uncentered pseudo-outcome for psi(a,b,c) is
//!
//! ```text
//! phi_i = 1{X_i=b} * [rho_a(Z_i,W_i)/rho_b(Z_i,W_i)] * [pi_c(Z_i)/pi_a(Z_i)] * (Y_i - mu(b,Z_i,W_i)) / P(c)
//!       + 1{X_i=a} * [pi_c(Z_i)/pi_a(Z_i)] * (mu(b,Z_i,W_i) - eta_ab(Z_i)) / P(c)
//!       + 1{X_i=c} * eta_ab(Z_i) / P(c)
//! ```
//!
//! whose mean is the one-step estimate. When a=b=c the three terms cancel
//! row-wise and the estimate reduces exactly to the group mean of Y.
//!
//! Both decompositions telescope the same disparity
//! TV = E[Y|majority] - E[Y|minority] through different intermediate arms:
//!
//! - forward: direct at natural-minority mediators, then the mediator
//!   shift at the majority direct arm, then the conditioning-group shift;
//! - reverse: the mediator shift at the minority direct arm first, then
//!   direct at natural-majority mediators, then the same group shift.
//!
//! Components are differences of shared psi estimates, so
//! direct + indirect_negated + confounded_negated = tv holds to floating
//! point roundoff by construction, in both directions.

use serde::{Deserialize, Serialize};

use crate::crossfit::NuisanceFits;
use crate::data::OutcomeVar;
use crate::error::{Error, Result};
use crate::learner::LearnerSpec;
use crate::stats;

pub use crate::data::Group;

/// Which telescoping of the disparity a decomposition reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    Forward,
    Reverse,
}

/// A nested counterfactual mean query: mediators from arm `a`, direct arm
/// `b`, conditioning group `c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CtfQuery {
    pub mediator_arm: Group,
    pub direct_arm: Group,
    pub conditioning: Group,
}

impl CtfQuery {
    pub fn new(a: Group, b: Group, c: Group) -> CtfQuery {
        CtfQuery { mediator_arm: a, direct_arm: b, conditioning: c }
    }
}

/// A point estimate with its centered influence values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CtfEstimate {
    pub value: f64,
    pub se: f64,
    pub ci95: (f64, f64),
    /// Estimate was truncated into the outcome range [0,1].
    pub truncated: bool,
    /// Centered per-row influence contributions; mean zero by construction.
    #[serde(skip)]
    pub influence: Vec<f64>,
}

impl CtfEstimate {
    fn from_phi(phi: Vec<f64>, truncate: bool) -> CtfEstimate {
        let raw = stats::mean(&phi);
        let influence: Vec<f64> = phi.iter().map(|p| p - raw).collect();
        let se = stats::standard_error(&influence);
        let (value, truncated) = if truncate && !(0.0..=1.0).contains(&raw) {
            (raw.clamp(0.0, 1.0), true)
        } else {
            (raw, false)
        };
        CtfEstimate {
            value,
            se,
            ci95: (value - 1.96 * se, value + 1.96 * se),
            truncated,
            influence,
        }
    }

    /// Difference of two arm estimates sharing the same rows; influence
    /// values subtract row-wise.
    fn contrast(hi: &ArmEstimate, lo: &ArmEstimate) -> CtfEstimate {
        let value = hi.value - lo.value;
        let influence: Vec<f64> = hi
            .phi
            .iter()
            .zip(&lo.phi)
            .map(|(h, l)| (h - l) - (hi.raw - lo.raw))
            .collect();
        let se = stats::standard_error(&influence);
        CtfEstimate {
            value,
            se,
            ci95: (value - 1.96 * se, value + 1.96 * se),
            truncated: hi.truncated || lo.truncated,
            influence,
        }
    }
}

/// Internal arm bookkeeping: the uncentered pseudo-outcomes plus raw and
/// truncated means.
#[derive(Debug, Clone)]
pub struct ArmEstimate {
    pub raw: f64,
    pub value: f64,
    pub truncated: bool,
    pub phi: Vec<f64>,
}

/// All eight psi arms computed from one fit set; the building block for
/// decompositions and interaction tests.
#[derive(Debug, Clone)]
pub struct ArmEstimates {
    arms: Vec<ArmEstimate>,
    pub n: usize,
}

impl ArmEstimates {
    pub fn arm(&self, a: Group, b: Group, c: Group) -> &ArmEstimate {
        &self.arms[(a.index() * 2 + b.index()) * 2 + c.index()]
    }

    pub fn estimate(&self, a: Group, b: Group, c: Group) -> CtfEstimate {
        let arm = self.arm(a, b, c);
        let influence: Vec<f64> = arm.phi.iter().map(|p| p - arm.raw).collect();
        let se = stats::standard_error(&influence);
        CtfEstimate {
            value: arm.value,
            se,
            ci95: (arm.value - 1.96 * se, arm.value + 1.96 * se),
            truncated: arm.truncated,
            influence,
        }
    }

    pub fn contrast(&self, hi: (Group, Group, Group), lo: (Group, Group, Group)) -> CtfEstimate {
        CtfEstimate::contrast(self.arm(hi.0, hi.1, hi.2), self.arm(lo.0, lo.1, lo.2))
    }

    pub fn truncation_events(&self) -> usize {
        self.arms.iter().filter(|a| a.truncated).count()
    }
}

/// Uncentered pseudo-outcome vector for one arm.
fn phi_vector(fits: &NuisanceFits, a: Group, b: Group, c: Group) -> Result<Vec<f64>> {
    let n_c = fits.count(c);
    if n_c == 0 {
        return Err(Error::degenerate(format!("conditioning group {c} is empty")));
    }
    let p_c = n_c as f64 / fits.n as f64;
    let mu_b = &fits.mu[b.index()];
    let eta_ab = &fits.eta[a.index()][b.index()];
    let mut phi = Vec::with_capacity(fits.n);
    for i in 0..fits.n {
        let pi_ratio = fits.pi(c, i) / fits.pi(a, i);
        let mut v = 0.0;
        if fits.group[i] == b {
            let rho_ratio = fits.rho(a, i) / fits.rho(b, i);
            v += rho_ratio * pi_ratio * (fits.y[i] - mu_b[i]);
        }
        if fits.group[i] == a {
            v += pi_ratio * (mu_b[i] - eta_ab[i]);
        }
        if fits.group[i] == c {
            v += eta_ab[i];
        }
        let v = v / p_c;
        if !v.is_finite() {
            return Err(Error::internal(format!(
                "non-finite pseudo-outcome at row {i}; clipping should prevent this"
            )));
        }
        phi.push(v);
    }
    Ok(phi)
}

/// One-step estimate of a single nested counterfactual mean.
pub fn estimate_ctf_mean(fits: &NuisanceFits, query: &CtfQuery) -> Result<CtfEstimate> {
    let phi = phi_vector(fits, query.mediator_arm, query.direct_arm, query.conditioning)?;
    Ok(CtfEstimate::from_phi(phi, true))
}

/// Plug-in (non-debiased) estimate of the same functional: the mean of
/// eta_{a,b}(Z) over the conditioning group. Diagnostic counterpart to
/// [`estimate_ctf_mean`].
pub fn plugin_ctf_mean(fits: &NuisanceFits, query: &CtfQuery) -> Result<f64> {
    let c = query.conditioning;
    let n_c = fits.count(c);
    if n_c == 0 {
        return Err(Error::degenerate(format!("conditioning group {c} is empty")));
    }
    let eta = &fits.eta[query.mediator_arm.index()][query.direct_arm.index()];
    let sum: f64 = (0..fits.n).filter(|&i| fits.group[i] == c).map(|i| eta[i]).sum();
    Ok(sum / n_c as f64)
}

/// Compute all eight arms once so decompositions and tests share the same
/// psi floats.
pub fn estimate_all_arms(fits: &NuisanceFits) -> Result<ArmEstimates> {
    let mut arms = Vec::with_capacity(8);
    for a in Group::BOTH {
        for b in Group::BOTH {
            for c in Group::BOTH {
                let phi = phi_vector(fits, a, b, c)?;
                let raw = stats::mean(&phi);
                let (value, truncated) = if (0.0..=1.0).contains(&raw) {
                    (raw, false)
                } else {
                    (raw.clamp(0.0, 1.0), true)
                };
                arms.push(ArmEstimate { raw, value, truncated, phi });
            }
        }
    }
    Ok(ArmEstimates { arms, n: fits.n })
}

/// Run metadata echoed into decomposition reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionMeta {
    pub n_used: usize,
    pub n_minority: usize,
    pub n_majority: usize,
    pub outcome: OutcomeVar,
    pub folds_used: usize,
    pub seed: u64,
    pub clip: f64,
    pub learner: LearnerSpec,
    /// Count of psi arms truncated into the outcome range.
    pub truncation_events: usize,
}

/// The disparity and its three causal components. The telescoping identity
/// `tv = direct + indirect_negated + confounded_negated` holds to floating
/// point roundoff in both directions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TvDecomposition {
    pub direction: Direction,
    pub tv: CtfEstimate,
    pub direct: CtfEstimate,
    pub indirect_negated: CtfEstimate,
    pub confounded_negated: CtfEstimate,
    pub meta: DecompositionMeta,
}

const X0: Group = Group::Minority;
const X1: Group = Group::Majority;

fn meta_from(fits: &NuisanceFits, arms: &ArmEstimates) -> DecompositionMeta {
    DecompositionMeta {
        n_used: fits.n,
        n_minority: fits.count(X0),
        n_majority: fits.count(X1),
        outcome: fits.config.outcome,
        folds_used: fits.folds_used,
        seed: fits.config.seed,
        clip: fits.clip,
        learner: fits.config.learner.clone(),
        truncation_events: arms.truncation_events(),
    }
}

/// Forward decomposition: direct effect measured at the natural minority
/// mediator level, conditioned on the minority group.
pub fn decompose_tv(fits: &NuisanceFits) -> Result<TvDecomposition> {
    let arms = estimate_all_arms(fits)?;
    Ok(decompose_from_arms(fits, &arms, Direction::Forward))
}

/// Reverse decomposition: the alternate telescoping needed by interaction
/// testing, with the direct effect measured at the natural majority
/// mediator level.
pub fn decompose_tv_reverse(fits: &NuisanceFits) -> Result<TvDecomposition> {
    let arms = estimate_all_arms(fits)?;
    Ok(decompose_from_arms(fits, &arms, Direction::Reverse))
}

/// Build a decomposition from precomputed arms (shared with interaction
/// testing so every report uses identical psi floats).
pub fn decompose_from_arms(
    fits: &NuisanceFits,
    arms: &ArmEstimates,
    direction: Direction,
) -> TvDecomposition {
    let meta = meta_from(fits, arms);
    let tv = arms.contrast((X1, X1, X1), (X0, X0, X0));
    match direction {
        Direction::Forward => TvDecomposition {
            direction,
            direct: arms.contrast((X0, X1, X0), (X0, X0, X0)),
            indirect_negated: arms.contrast((X1, X1, X0), (X0, X1, X0)),
            confounded_negated: arms.contrast((X1, X1, X1), (X1, X1, X0)),
            tv,
            meta,
        },
        Direction::Reverse => TvDecomposition {
            direction,
            direct: arms.contrast((X1, X1, X0), (X1, X0, X0)),
            indirect_negated: arms.contrast((X1, X0, X0), (X0, X0, X0)),
            confounded_negated: arms.contrast((X1, X1, X1), (X1, X1, X0)),
            tv,
            meta,
        },
    }
}

impl TvDecomposition {
    /// Residual of the telescoping identity; bounded by floating point
    /// roundoff.
    pub fn telescoping_residual(&self) -> f64 {
        (self.direct.value + self.indirect_negated.value + self.confounded_negated.value
            - self.tv.value)
            .abs()
    }
}

// ---------------------------------------------------------------------------
// Doubly-robust pseudo-outcomes for cell-conditional effects
// ---------------------------------------------------------------------------

/// Per-row direct-effect score xi. Restricted cell averages
/// sum(xi over cell) / #(minority rows in cell) estimate
/// E[Y_{x1,W_{x0}} - Y_{x0} | cell, X=x0]; summed over everything they
/// reproduce the global forward direct effect.
pub fn direct_pseudo_outcomes(fits: &NuisanceFits) -> Vec<f64> {
    let mu1 = &fits.mu[X1.index()];
    (0..fits.n)
        .map(|i| match fits.group[i] {
            Group::Majority => {
                (fits.rho(X0, i) / fits.rho(X1, i)) * (fits.y[i] - mu1[i])
            }
            Group::Minority => mu1[i] - fits.y[i],
        })
        .collect()
}

/// Per-row negated-indirect score zeta. Restricted bin averages
/// sum(zeta over bin) / #(minority rows in bin) estimate
/// E[Y_{x1,W_{x1}} - Y_{x1,W_{x0}} | bin, X=x0] for confounder-measurable
/// bins.
pub fn indirect_pseudo_outcomes(fits: &NuisanceFits) -> Vec<f64> {
    let mu1 = &fits.mu[X1.index()];
    let eta11 = &fits.eta[X1.index()][X1.index()];
    (0..fits.n)
        .map(|i| match fits.group[i] {
            Group::Majority => {
                (fits.pi(X0, i) / fits.pi(X1, i)) * (fits.y[i] - eta11[i])
                    - (fits.rho(X0, i) / fits.rho(X1, i)) * (fits.y[i] - mu1[i])
            }
            Group::Minority => eta11[i] - mu1[i],
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crossfit::{fit_crossfit, oracle_nuisance_fits, NuisanceConfig};
    use crate::scm::families;
    use crate::scm::ScmSpec;

    fn within_3se(est: &CtfEstimate, truth: f64) -> bool {
        (est.value - truth).abs() <= 3.0 * est.se.max(1e-9)
    }

    #[test]
    fn reduction_to_group_mean() {
        // a=b=c collapses the pseudo-outcome to Y/P(c); the estimate is the
        // exact sample mean. Fixture mirrors a 7.9% minority mortality.
        let n_min = 1000;
        let n_maj = 4000;
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..n_min {
            xs.push(Some("m"));
            ys.push(if i < 79 { 1.0 } else { 0.0 });
        }
        for i in 0..n_maj {
            xs.push(Some("M"));
            ys.push(if i % 13 == 0 { 1.0 } else { 0.0 });
        }
        let zs: Vec<f64> = (0..(n_min + n_maj)).map(|i| (i % 3) as f64).collect();
        let ws: Vec<f64> = (0..(n_min + n_maj)).map(|i| (i % 2) as f64).collect();
        let cols = vec![
            crate::data::Column::categorical("x", &xs),
            crate::data::Column::numeric("z", zs),
            crate::data::Column::numeric("w", ws),
            crate::data::Column::numeric("y", ys),
        ];
        let schema = crate::data::RoleSchema::new(
            "x",
            "m",
            "M",
            vec!["z".into()],
            vec!["w".into()],
            "y",
        );
        let ds = crate::data::SfmDataset::from_columns(cols, schema, 0).unwrap();
        let fits = fit_crossfit(
            &ds,
            &NuisanceConfig {
                learner: LearnerSpec { min_leaf: 5, ..Default::default() },
                ..Default::default()
            },
        )
        .unwrap();
        let est = estimate_ctf_mean(&fits, &CtfQuery::new(X0, X0, X0)).unwrap();
        assert!((est.value - 0.079).abs() < 1e-12, "got {}", est.value);
        let est_maj = estimate_ctf_mean(&fits, &CtfQuery::new(X1, X1, X1)).unwrap();
        let exact = (0..n_maj).filter(|i| i % 13 == 0).count() as f64 / n_maj as f64;
        assert!((est_maj.value - exact).abs() < 1e-12);
        // Influence values center to zero.
        assert!(stats::mean(&est.influence).abs() < 1e-12);
        assert_eq!(est.ci95, (est.value - 1.96 * est.se, est.value + 1.96 * est.se));
    }

    #[test]
    fn oracle_recovery_with_true_nuisances() {
        let spec = crate::scm::hand_spec();
        let ds = spec.sample_dataset(40_000, 31).unwrap();
        let fits = oracle_nuisance_fits(&spec, &ds, 1e-6).unwrap();
        let oracle = spec.oracle_effects(None).unwrap();
        for a in Group::BOTH {
            for b in Group::BOTH {
                for c in Group::BOTH {
                    let est = estimate_ctf_mean(&fits, &CtfQuery::new(a, b, c)).unwrap();
                    let truth = oracle.psi[a.index()][b.index()][c.index()];
                    assert!(
                        within_3se(&est, truth),
                        "psi({a},{b},{c}) = {} +- {} vs {truth}",
                        est.value,
                        est.se
                    );
                }
            }
        }
    }

    #[test]
    fn oracle_recovery_with_learned_nuisances() {
        let spec = families::random_overlapped(13);
        let ds = spec.sample_dataset(20_000, 77).unwrap();
        let fits = fit_crossfit(&ds, &NuisanceConfig::default()).unwrap();
        let oracle = spec.oracle_effects(None).unwrap();
        let decomp = decompose_tv(&fits).unwrap();
        assert!(within_3se(&decomp.tv, oracle.forward.tv));
        assert!(within_3se(&decomp.direct, oracle.forward.direct));
        assert!(within_3se(&decomp.indirect_negated, oracle.forward.indirect_negated));
        assert!(within_3se(&decomp.confounded_negated, oracle.forward.confounded_negated));
        let rev = decompose_tv_reverse(&fits).unwrap();
        assert!(within_3se(&rev.direct, oracle.reverse.direct));
        assert!(within_3se(&rev.indirect_negated, oracle.reverse.indirect_negated));
    }

    #[test]
    fn no_effect_null_arms_agree() {
        // X independent of (Z, W, Y): all arms with the same direct arm are
        // the same functional.
        let spec = no_effect_spec();
        let ds = spec.sample_dataset(20_000, 5).unwrap();
        let fits = fit_crossfit(&ds, &NuisanceConfig::default()).unwrap();
        let arms = estimate_all_arms(&fits).unwrap();
        for b in Group::BOTH {
            let reference = arms.arm(X0, b, X0).value;
            for a in Group::BOTH {
                for c in Group::BOTH {
                    let contrast = arms.contrast((a, b, c), (X0, b, X0));
                    assert!(
                        contrast.value.abs() <= 3.0 * contrast.se.max(1e-6),
                        "psi({a},{b},{c}) = {} differs from {reference}",
                        arms.arm(a, b, c).value
                    );
                }
            }
        }
    }

    fn no_effect_spec() -> ScmSpec {
        let mut spec = families::random_overlapped(23);
        // Make X independent of everything: factorize the joint and erase
        // the mechanism/risk dependence on x.
        let nz = spec.n_z();
        let pz: Vec<f64> =
            (0..nz).map(|zi| spec.joint_xz[0][zi] + spec.joint_xz[1][zi]).collect();
        for zi in 0..nz {
            spec.joint_xz[0][zi] = 0.4 * pz[zi];
            spec.joint_xz[1][zi] = 0.6 * pz[zi];
        }
        spec.w_given_xz[1] = spec.w_given_xz[0].clone();
        spec.p_y[1] = spec.p_y[0].clone();
        spec
    }

    #[test]
    fn telescoping_is_exact_both_directions() {
        let spec = families::random_overlapped(3);
        let ds = spec.sample_dataset(5_000, 11).unwrap();
        let fits = fit_crossfit(&ds, &NuisanceConfig::default()).unwrap();
        for decomp in [decompose_tv(&fits).unwrap(), decompose_tv_reverse(&fits).unwrap()] {
            assert!(
                decomp.telescoping_residual() <= 1e-12,
                "residual {}",
                decomp.telescoping_residual()
            );
        }
        // Forward and reverse decompose the same disparity.
        let f = decompose_tv(&fits).unwrap();
        let r = decompose_tv_reverse(&fits).unwrap();
        assert_eq!(f.tv.value, r.tv.value);
    }

    #[test]
    fn structural_null_direct_is_zero() {
        let spec = families::structural_null(families::StructuralNull::NoDirect, 2);
        let ds = spec.sample_dataset(20_000, 9).unwrap();
        let fits = fit_crossfit(&ds, &NuisanceConfig::default()).unwrap();
        let decomp = decompose_tv(&fits).unwrap();
        assert!(
            decomp.direct.value.abs() <= 3.0 * decomp.direct.se,
            "direct = {} +- {}",
            decomp.direct.value,
            decomp.direct.se
        );
    }

    #[test]
    fn additive_spec_forward_equals_reverse_direct() {
        let spec = families::additive_null(4);
        let ds = spec.sample_dataset(20_000, 13).unwrap();
        let fits = fit_crossfit(&ds, &NuisanceConfig::default()).unwrap();
        let f = decompose_tv(&fits).unwrap();
        let r = decompose_tv_reverse(&fits).unwrap();
        let diff = f.direct.value - r.direct.value;
        let se = (f.direct.se.powi(2) + r.direct.se.powi(2)).sqrt();
        assert!(diff.abs() <= 3.0 * se, "fwd {} vs rev {}", f.direct.value, r.direct.value);
    }

    #[test]
    fn xw_interaction_separates_directions() {
        let spec = families::xw_interaction(6, 0.12);
        let oracle = spec.oracle_effects(None).unwrap();
        let ds = spec.sample_dataset(20_000, 17).unwrap();
        let fits = fit_crossfit(&ds, &NuisanceConfig::default()).unwrap();
        let f = decompose_tv(&fits).unwrap();
        let r = decompose_tv_reverse(&fits).unwrap();
        let est_gap = f.direct.value - r.direct.value;
        let true_gap = oracle.forward.direct - oracle.reverse.direct;
        let se = (f.direct.se.powi(2) + r.direct.se.powi(2)).sqrt();
        assert!(
            (est_gap - true_gap).abs() <= 3.0 * se,
            "gap {est_gap} vs oracle {true_gap} (se {se})"
        );
    }

    #[test]
    fn swapped_schema_negates_tv() {
        let spec = families::random_overlapped(8);
        let ds = spec.sample_dataset(4_000, 3).unwrap();
        let fits = fit_crossfit(&ds, &NuisanceConfig::default()).unwrap();
        let forward = decompose_tv(&fits).unwrap();

        let mut swapped = ds.clone();
        std::mem::swap(
            &mut swapped.schema.minority_level,
            &mut swapped.schema.majority_level,
        );
        let fits_swapped = fit_crossfit(&swapped, &NuisanceConfig::default()).unwrap();
        let reverse = decompose_tv_reverse(&fits_swapped).unwrap();
        // The reverse tv under swapped labels equals the negated forward tv
        // exactly: both reduce to group-mean differences.
        assert!(
            (reverse.tv.value + forward.tv.value).abs() < 1e-12,
            "{} vs {}",
            reverse.tv.value,
            forward.tv.value
        );
    }

    #[test]
    fn plugin_and_onestep_agree_on_well_specified_fixture() {
        let spec = families::random_overlapped(19);
        let ds = spec.sample_dataset(20_000, 29).unwrap();
        let fits = fit_crossfit(&ds, &NuisanceConfig::default()).unwrap();
        for (a, b, c) in [(X0, X1, X0), (X1, X1, X0), (X1, X0, X1)] {
            let one_step = estimate_ctf_mean(&fits, &CtfQuery::new(a, b, c)).unwrap();
            let plug = plugin_ctf_mean(&fits, &CtfQuery::new(a, b, c)).unwrap();
            assert!(
                (one_step.value - plug).abs() <= 3.0 * one_step.se,
                "one-step {} vs plug-in {plug}",
                one_step.value
            );
        }
    }

    #[test]
    fn double_robustness_wrong_outcome_model() {
        // Corrupt mu (and keep eta consistent with the corrupted mu) while
        // propensities stay correct: the one-step estimate stays near truth.
        let spec = crate::scm::hand_spec();
        let ds = spec.sample_dataset(40_000, 41).unwrap();
        let mut fits = oracle_nuisance_fits(&spec, &ds, 1e-6).unwrap();
        let z_cfg = crate::crossfit::config_indices(&spec, &ds, &fits.rows, true).unwrap();
        let w_cfg = crate::crossfit::config_indices(&spec, &ds, &fits.rows, false).unwrap();
        let corrupt = |b: usize, zi: usize, wi: usize| {
            (spec.p_y[b][zi][wi] + 0.17 * ((zi + 2 * wi + b) as f64).sin()).clamp(0.02, 0.98)
        };
        for i in 0..fits.n {
            let (zi, wi) = (z_cfg[i], w_cfg[i]);
            for b in 0..2 {
                fits.mu[b][i] = corrupt(b, zi, wi);
            }
            for a in 0..2 {
                for b in 0..2 {
                    let mut v = 0.0;
                    for w in 0..spec.n_w() {
                        v += spec.w_given_xz[a][zi][w] * corrupt(b, zi, w);
                    }
                    fits.eta[a][b][i] = v;
                }
            }
        }
        let oracle = spec.oracle_effects(None).unwrap();
        for (a, b, c) in [(X0, X1, X0), (X1, X1, X0), (X1, X1, X1)] {
            let est = estimate_ctf_mean(&fits, &CtfQuery::new(a, b, c)).unwrap();
            let truth = oracle.psi[a.index()][b.index()][c.index()];
            assert!(
                within_3se(&est, truth),
                "psi({a},{b},{c}) with corrupted mu: {} +- {} vs {truth}",
                est.value,
                est.se
            );
        }
    }

    #[test]
    fn double_robustness_wrong_propensities() {
        // Corrupt pi and rho while mu and eta stay correct.
        let spec = crate::scm::hand_spec();
        let ds = spec.sample_dataset(40_000, 43).unwrap();
        let mut fits = oracle_nuisance_fits(&spec, &ds, 1e-6).unwrap();
        for i in 0..fits.n {
            fits.pi_minority[i] = (fits.pi_minority[i] + 0.2 * ((i % 7) as f64 / 7.0 - 0.4))
                .clamp(0.05, 0.95);
            fits.rho_minority[i] = (fits.rho_minority[i] - 0.15 * ((i % 5) as f64 / 5.0 - 0.5))
                .clamp(0.05, 0.95);
        }
        let oracle = spec.oracle_effects(None).unwrap();
        for (a, b, c) in [(X0, X1, X0), (X1, X1, X0)] {
            let est = estimate_ctf_mean(&fits, &CtfQuery::new(a, b, c)).unwrap();
            let truth = oracle.psi[a.index()][b.index()][c.index()];
            assert!(
                within_3se(&est, truth),
                "psi({a},{b},{c}) with corrupted propensities: {} +- {} vs {truth}",
                est.value,
                est.se
            );
        }
    }

    #[test]
    fn pseudo_outcome_sums_match_global_estimates() {
        let spec = families::random_overlapped(4);
        let ds = spec.sample_dataset(8_000, 19).unwrap();
        let fits = fit_crossfit(&ds, &NuisanceConfig::default()).unwrap();
        let decomp = decompose_tv(&fits).unwrap();
        let xi = direct_pseudo_outcomes(&fits);
        let n0 = fits.count(X0) as f64;
        let global = xi.iter().sum::<f64>() / n0;
        assert!((global - decomp.direct.value).abs() < 1e-10);
        let zeta = indirect_pseudo_outcomes(&fits);
        let global_ie = zeta.iter().sum::<f64>() / n0;
        assert!((global_ie - decomp.indirect_negated.value).abs() < 1e-10);
    }
}
