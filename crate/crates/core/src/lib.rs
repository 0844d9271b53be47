//! Batch analysis engine for decomposing group disparities in a binary
//! outcome into direct, indirect, and confounded causal components under
//! the standard fairness model (attribute X, confounders Z, mediators W,
//! outcome Y).
//!
//! The crate is organized around a small number of subsystems:
//!
//! - [`data`]: column-typed tabular datasets with role tags, loading,
//!   cohort filtering, and descriptive summaries.
//! - [`learner`]: in-repo gradient boosted trees and ridge/logistic linear
//!   models used for all nuisance regressions.
//! - [`crossfit`]: K-fold cross-fitted nuisance functions (outcome
//!   regressions, propensities, nested regressions).
//! - [`estimate`]: one-step debiased nested counterfactual means
//!   psi(a,b,c) = E[Y_{b,W_a} | X=c] and the total-variation decomposition
//!   built from them.
//! - [`interaction`]: non-parametric tests for interactions between the
//!   direct, indirect, and confounded pathways.
//! - [`heterogeneity`]: cell-conditional effects over age x admission-type
//!   grids, mechanism profiles, and heatmap correlation.
//! - [`popn`]: census-anchored admission risks, risk ratios, and the
//!   area-level risk radar.
//! - [`sensitivity`]: overlap (propensity trimming) and missing-attribute
//!   (multiple imputation) sensitivity analyses.
//! - [`scm`]: a discrete structural causal model simulator with exact
//!   enumeration of counterfactual means, used as the test oracle.

pub mod crossfit;
pub mod data;
pub mod error;
pub mod estimate;
pub mod heterogeneity;
pub mod interaction;
pub mod learner;
pub mod popn;
pub mod scm;
pub mod sensitivity;
pub mod stats;

pub use crossfit::{CrossFitPlan, NuisanceConfig, NuisanceFits, OutcomeVar};
pub use data::{CohortSummary, FilterRule, Predicate, RoleSchema, SfmDataset};
pub use error::{Error, Result};
pub use estimate::{CtfEstimate, CtfQuery, Direction, Group, TvDecomposition};
pub use heterogeneity::{BootstrapPlan, CellGrid, Heatmap};
pub use interaction::InteractionReport;
pub use learner::{LearnerKind, LearnerSpec};
pub use popn::{AdmissionCounts, CensusTable, RadarTable, RiskCategory};
pub use scm::{OracleEffects, ScmSpec};
pub use sensitivity::{MissingnessReport, OverlapReport};
