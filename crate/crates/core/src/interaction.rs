//! Non-parametric tests for interactions between the direct, indirect,
//! and confounded pathways.
//!
//! Each statistic is a linear contrast of the eight nested counterfactual
//! means whose population value is zero under the corresponding additive
//! restriction of the outcome risk:
//!
//! - `DE x IE`: the direct effect measured at natural-minority mediators
//!   minus the same transition at natural-majority mediators.
//! - `DE x SE` / `IE x SE` / `TE x SE`: the direct / indirect / total
//!   effect contrasted across the two conditioning groups.
//! - `DE x IE x SE`: the difference-in-differences of the direct-effect
//!   asymmetry across conditioning groups.
//!
//! Tests are two-sided z-tests on per-row influence differences.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::crossfit::NuisanceFits;
use crate::error::Result;
use crate::estimate::{estimate_all_arms, ArmEstimates, Group};
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InteractionKind {
    TotalBySpurious,
    DirectByIndirect,
    DirectBySpurious,
    IndirectBySpurious,
    ThreeWay,
}

impl fmt::Display for InteractionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            InteractionKind::TotalBySpurious => "TE x SE",
            InteractionKind::DirectByIndirect => "DE x IE",
            InteractionKind::DirectBySpurious => "DE x SE",
            InteractionKind::IndirectBySpurious => "IE x SE",
            InteractionKind::ThreeWay => "DE x IE x SE",
        };
        write!(f, "{s}")
    }
}

pub const ALL_TESTS: [InteractionKind; 5] = [
    InteractionKind::TotalBySpurious,
    InteractionKind::DirectByIndirect,
    InteractionKind::DirectBySpurious,
    InteractionKind::IndirectBySpurious,
    InteractionKind::ThreeWay,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionTest {
    pub kind: InteractionKind,
    pub statistic: f64,
    pub se: f64,
    pub z: f64,
    pub p_value: f64,
    pub reject: bool,
    /// Influence variance was (numerically) zero; the p-value is reported
    /// as 1.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionReport {
    pub alpha: f64,
    pub tests: Vec<InteractionTest>,
}

impl InteractionReport {
    pub fn test(&self, kind: InteractionKind) -> &InteractionTest {
        self.tests.iter().find(|t| t.kind == kind).expect("all kinds present")
    }
}

const X0: Group = Group::Minority;
const X1: Group = Group::Majority;

type Term = (f64, (Group, Group, Group));

fn contrast_terms(kind: InteractionKind) -> Vec<Term> {
    match kind {
        // [psi(1,1,0) - psi(0,0,0)] - [psi(1,1,1) - psi(0,0,1)]
        InteractionKind::TotalBySpurious => vec![
            (1.0, (X1, X1, X0)),
            (-1.0, (X0, X0, X0)),
            (-1.0, (X1, X1, X1)),
            (1.0, (X0, X0, X1)),
        ],
        // [psi(0,1,0) - psi(0,0,0)] - [psi(1,1,0) - psi(1,0,0)]
        InteractionKind::DirectByIndirect => vec![
            (1.0, (X0, X1, X0)),
            (-1.0, (X0, X0, X0)),
            (-1.0, (X1, X1, X0)),
            (1.0, (X1, X0, X0)),
        ],
        // [psi(0,1,0) - psi(0,0,0)] - [psi(0,1,1) - psi(0,0,1)]
        InteractionKind::DirectBySpurious => vec![
            (1.0, (X0, X1, X0)),
            (-1.0, (X0, X0, X0)),
            (-1.0, (X0, X1, X1)),
            (1.0, (X0, X0, X1)),
        ],
        // [psi(0,1,0) - psi(1,1,0)] - [psi(0,1,1) - psi(1,1,1)]
        InteractionKind::IndirectBySpurious => vec![
            (1.0, (X0, X1, X0)),
            (-1.0, (X1, X1, X0)),
            (-1.0, (X0, X1, X1)),
            (1.0, (X1, X1, X1)),
        ],
        // DE x IE contrast at c=x0 minus the same contrast at c=x1.
        InteractionKind::ThreeWay => vec![
            (1.0, (X0, X1, X0)),
            (-1.0, (X0, X0, X0)),
            (-1.0, (X1, X1, X0)),
            (1.0, (X1, X0, X0)),
            (-1.0, (X0, X1, X1)),
            (1.0, (X0, X0, X1)),
            (1.0, (X1, X1, X1)),
            (-1.0, (X1, X0, X1)),
        ],
    }
}

fn run_test(arms: &ArmEstimates, kind: InteractionKind, alpha: f64) -> InteractionTest {
    let terms = contrast_terms(kind);
    let statistic: f64 =
        terms.iter().map(|(c, (a, b, g))| c * arms.arm(*a, *b, *g).raw).sum();
    let mut influence = vec![0.0f64; arms.n];
    for (coef, (a, b, g)) in &terms {
        let arm = arms.arm(*a, *b, *g);
        for (i, phi) in arm.phi.iter().enumerate() {
            influence[i] += coef * (phi - arm.raw);
        }
    }
    let se = stats::standard_error(&influence);
    if se < 1e-12 {
        return InteractionTest {
            kind,
            statistic,
            se,
            z: 0.0,
            p_value: 1.0,
            reject: false,
            degenerate: true,
        };
    }
    let z = statistic / se;
    let p_value = stats::normal_two_sided_p(z);
    InteractionTest { kind, statistic, se, z, p_value, reject: p_value < alpha, degenerate: false }
}

/// Run the full five-test battery at level `alpha`. Raw p-values are
/// reported without multiplicity correction.
pub fn test_interactions(fits: &NuisanceFits, alpha: f64) -> Result<InteractionReport> {
    let arms = estimate_all_arms(fits)?;
    Ok(test_interactions_from_arms(&arms, alpha))
}

/// Same battery from precomputed arms.
pub fn test_interactions_from_arms(arms: &ArmEstimates, alpha: f64) -> InteractionReport {
    let tests = ALL_TESTS.iter().map(|&kind| run_test(arms, kind, alpha)).collect();
    InteractionReport { alpha, tests }
}
