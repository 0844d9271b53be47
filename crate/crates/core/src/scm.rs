//! Discrete structural causal model simulator over the fairness-model
//! shape: attribute X and confounders Z jointly distributed (their
//! dependence realizes the bidirected confounding arc through a shared
//! latent), mediators W drawn from a mechanism table given (X, Z), and a
//! Bernoulli outcome with risk p_y(x, z, w).
//!
//! Because every mechanism is a finite table, all nested counterfactual
//! means psi(a,b,c) = E[Y_{b,W_a} | X=c] have closed forms by enumeration:
//!
//! ```text
//! psi(a,b,c) = sum_z P(z|X=c) sum_w P(w|x=a,z) p_y(b,z,w)
//! ```
//!
//! which is what the estimators in this crate target. The module provides
//! exact oracle effects, dataset sampling, and serialization so fixture
//! specs can be committed alongside their oracle values.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::data::{Column, Group, RoleSchema, SfmDataset};
use crate::error::{Error, Result};
use crate::heterogeneity::CellGrid;

/// One level of a discrete component: a label for categorical emission and
/// an optional numeric value (required for age-like components).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelDef {
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
}

impl LevelDef {
    pub fn named(label: impl Into<String>) -> LevelDef {
        LevelDef { label: label.into(), value: None }
    }

    pub fn numeric(value: f64) -> LevelDef {
        LevelDef { label: format!("{value}"), value: Some(value) }
    }
}

/// A discrete confounder or mediator component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentDef {
    pub name: String,
    pub levels: Vec<LevelDef>,
    /// Marks the component binned by age grids (confounders) or matched to
    /// admission types (mediators).
    #[serde(default)]
    pub special: Option<SpecialRole>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpecialRole {
    Age,
    AdmissionType,
}

impl ComponentDef {
    pub fn cardinality(&self) -> usize {
        self.levels.len()
    }

    fn is_numeric(&self) -> bool {
        self.levels.iter().all(|l| l.value.is_some())
    }
}

/// Full specification of a discrete fairness-model SCM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScmSpec {
    pub name: String,
    pub z: Vec<ComponentDef>,
    pub w: Vec<ComponentDef>,
    /// Joint P(X=x, Z=z): indexed `[group][z_config]`, sums to 1.
    pub joint_xz: Vec<Vec<f64>>,
    /// Mechanism P(W=w | X=x, Z=z): indexed `[group][z_config][w_config]`,
    /// each row sums to 1.
    pub w_given_xz: Vec<Vec<Vec<f64>>>,
    /// Outcome risk p_y(x, z, w): indexed `[group][z_config][w_config]`.
    pub p_y: Vec<Vec<Vec<f64>>>,
    /// Declares (and `validate` enforces) that p_y is additive:
    /// p_y(x,z,w) = p1(x) + p2(w) + p3(z).
    #[serde(default)]
    pub additive_risk: bool,
}

fn config_count(components: &[ComponentDef]) -> usize {
    components.iter().map(|c| c.cardinality()).product::<usize>().max(1)
}

/// Mixed-radix decode: config index -> per-component level indices
/// (first component varies slowest).
fn decode_config(components: &[ComponentDef], mut idx: usize) -> Vec<usize> {
    let mut out = vec![0; components.len()];
    for (i, comp) in components.iter().enumerate().rev() {
        out[i] = idx % comp.cardinality();
        idx /= comp.cardinality();
    }
    out
}

impl ScmSpec {
    pub fn n_z(&self) -> usize {
        config_count(&self.z)
    }

    pub fn n_w(&self) -> usize {
        config_count(&self.w)
    }

    pub fn validate(&self) -> Result<()> {
        let nz = self.n_z();
        let nw = self.n_w();
        let shape_err = |what: &str| Error::validation(format!("scm '{}': {what}", self.name));
        if self.joint_xz.len() != 2 || self.joint_xz.iter().any(|r| r.len() != nz) {
            return Err(shape_err("joint_xz must be 2 x n_z"));
        }
        if self.w_given_xz.len() != 2
            || self.w_given_xz.iter().any(|g| g.len() != nz || g.iter().any(|r| r.len() != nw))
        {
            return Err(shape_err("w_given_xz must be 2 x n_z x n_w"));
        }
        if self.p_y.len() != 2
            || self.p_y.iter().any(|g| g.len() != nz || g.iter().any(|r| r.len() != nw))
        {
            return Err(shape_err("p_y must be 2 x n_z x n_w"));
        }
        let total: f64 = self.joint_xz.iter().flatten().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(shape_err(&format!("joint_xz sums to {total}, expected 1")));
        }
        if self.joint_xz.iter().flatten().any(|p| *p < 0.0) {
            return Err(shape_err("joint_xz has negative mass"));
        }
        for g in 0..2 {
            for zi in 0..nz {
                let row = &self.w_given_xz[g][zi];
                let s: f64 = row.iter().sum();
                if (s - 1.0).abs() > 1e-9 || row.iter().any(|p| *p < 0.0) {
                    return Err(shape_err(&format!(
                        "w_given_xz[{g}][{zi}] is not a distribution (sum {s})"
                    )));
                }
                for &p in &self.p_y[g][zi] {
                    if !(0.0..=1.0).contains(&p) {
                        return Err(shape_err(&format!("p_y value {p} outside [0,1]")));
                    }
                }
            }
        }
        if self.additive_risk {
            self.check_additive()?;
        }
        Ok(())
    }

    /// p_y(x,z,w) + 2*p_y(x0,z0,w0) = p_y(x,z0,w0) + p_y(x0,z,w0) + p_y(x0,z0,w)
    /// for all (x,z,w) iff the risk is additive in its three arguments.
    fn check_additive(&self) -> Result<()> {
        let base = self.p_y[0][0][0];
        for g in 0..2 {
            for zi in 0..self.n_z() {
                for wi in 0..self.n_w() {
                    let lhs = self.p_y[g][zi][wi] + 2.0 * base;
                    let rhs = self.p_y[g][0][0] + self.p_y[0][zi][0] + self.p_y[0][0][wi];
                    if (lhs - rhs).abs() > 1e-9 {
                        return Err(Error::validation(format!(
                            "scm '{}' declared additive_risk but p_y[{g}][{zi}][{wi}] violates additivity",
                            self.name
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Marginal attribute share P(X = g).
    pub fn p_group(&self, g: Group) -> f64 {
        self.joint_xz[g.index()].iter().sum()
    }

    /// P(Z = z | X = c).
    fn p_z_given(&self, zi: usize, c: Group) -> f64 {
        self.joint_xz[c.index()][zi] / self.p_group(c)
    }

    /// Exact nested counterfactual mean psi(a,b,c) = E[Y_{b,W_a} | X=c].
    pub fn psi(&self, a: Group, b: Group, c: Group) -> f64 {
        let mut total = 0.0;
        for zi in 0..self.n_z() {
            let pz = self.p_z_given(zi, c);
            if pz == 0.0 {
                continue;
            }
            let mut inner = 0.0;
            for wi in 0..self.n_w() {
                inner += self.w_given_xz[a.index()][zi][wi] * self.p_y[b.index()][zi][wi];
            }
            total += pz * inner;
        }
        total
    }

    /// True conditional propensity P(X = minority | Z=z, W=w). Exposed for
    /// overlap fixtures and oracle nuisances.
    pub fn rho_minority(&self, zi: usize, wi: usize) -> f64 {
        let num = self.joint_xz[0][zi] * self.w_given_xz[0][zi][wi];
        let den = num + self.joint_xz[1][zi] * self.w_given_xz[1][zi][wi];
        if den == 0.0 {
            0.5
        } else {
            num / den
        }
    }

    /// True P(X = minority | Z=z).
    pub fn pi_minority(&self, zi: usize) -> f64 {
        let den = self.joint_xz[0][zi] + self.joint_xz[1][zi];
        if den == 0.0 {
            0.5
        } else {
            self.joint_xz[0][zi] / den
        }
    }

    fn age_component(&self) -> Option<usize> {
        self.z.iter().position(|c| c.special == Some(SpecialRole::Age))
    }

    fn admission_component(&self) -> Option<usize> {
        self.w.iter().position(|c| c.special == Some(SpecialRole::AdmissionType))
    }

    /// Exact effects for every arm plus both decompositions; cell effects
    /// when a grid is given and the spec has age/admission components.
    pub fn oracle_effects(&self, grid: Option<&CellGrid>) -> Result<OracleEffects> {
        self.validate()?;
        let mut psi = [[[0.0f64; 2]; 2]; 2];
        for a in Group::BOTH {
            for b in Group::BOTH {
                for c in Group::BOTH {
                    psi[a.index()][b.index()][c.index()] = self.psi(a, b, c);
                }
            }
        }
        let forward = OracleDecomposition {
            direct: psi[0][1][0] - psi[0][0][0],
            indirect_negated: psi[1][1][0] - psi[0][1][0],
            confounded_negated: psi[1][1][1] - psi[1][1][0],
            tv: psi[1][1][1] - psi[0][0][0],
        };
        let reverse = OracleDecomposition {
            direct: psi[1][1][0] - psi[1][0][0],
            indirect_negated: psi[1][0][0] - psi[0][0][0],
            confounded_negated: psi[1][1][1] - psi[1][1][0],
            tv: psi[1][1][1] - psi[0][0][0],
        };

        let (de_cells, ie_bins) = match grid {
            Some(grid) => (
                Some(self.oracle_de_cells(grid)?),
                Some(self.oracle_ie_bins(&grid.age_bins)?),
            ),
            None => (None, None),
        };

        Ok(OracleEffects { psi, forward, reverse, de_cells, ie_bins })
    }

    ///E[p_y(x1,z,w) - p_y(x0,z,w) | age in bin, admission = type, X = x0]
    /// per grid cell; `None` for cells with no probability mass.
    pub fn oracle_de_cells(&self, grid: &CellGrid) -> Result<Vec<Vec<Option<f64>>>> {
        let age_idx = self
            .age_component()
            .ok_or_else(|| Error::schema("scm has no age-like confounder component"))?;
        let adm_idx = self
            .admission_component()
            .ok_or_else(|| Error::schema("scm has no admission-type mediator component"))?;
        let mut cells =
            vec![vec![(0.0f64, 0.0f64); grid.admission_types.len()]; grid.age_bins.len()];
        for zi in 0..self.n_z() {
            let z_levels = decode_config(&self.z, zi);
            let age = self.z[age_idx].levels[z_levels[age_idx]]
                .value
                .ok_or_else(|| Error::schema("age component levels must be numeric"))?;
            let Some(bi) = grid.age_bin_of(age) else { continue };
            let pz = self.p_z_given(zi, Group::Minority);
            for wi in 0..self.n_w() {
                let w_levels = decode_config(&self.w, wi);
                let label = &self.w[adm_idx].levels[w_levels[adm_idx]].label;
                let Some(ti) = grid.admission_types.iter().position(|t| t == label) else {
                    continue;
                };
                let mass = pz * self.w_given_xz[0][zi][wi];
                let de = self.p_y[1][zi][wi] - self.p_y[0][zi][wi];
                cells[bi][ti].0 += mass;
                cells[bi][ti].1 += mass * de;
            }
        }
        Ok(cells
            .into_iter()
            .map(|row| {
                row.into_iter()
                    .map(|(mass, sum)| if mass > 0.0 { Some(sum / mass) } else { None })
                    .collect()
            })
            .collect())
    }

    /// E[Y_{x1,W_{x1}} - Y_{x1,W_{x0}} | age in bin, X=x0] per age bin.
    pub fn oracle_ie_bins(&self, bins: &[(f64, f64)]) -> Result<Vec<Option<f64>>> {
        let age_idx = self
            .age_component()
            .ok_or_else(|| Error::schema("scm has no age-like confounder component"))?;
        let mut acc = vec![(0.0f64, 0.0f64); bins.len()];
        for zi in 0..self.n_z() {
            let z_levels = decode_config(&self.z, zi);
            let age = self.z[age_idx].levels[z_levels[age_idx]]
                .value
                .ok_or_else(|| Error::schema("age component levels must be numeric"))?;
            let Some(bi) = bins
                .iter()
                .position(|&(lo, hi)| age >= lo && age <= hi)
            else {
                continue;
            };
            let pz = self.p_z_given(zi, Group::Minority);
            let mut inner = 0.0;
            for wi in 0..self.n_w() {
                inner += (self.w_given_xz[1][zi][wi] - self.w_given_xz[0][zi][wi])
                    * self.p_y[1][zi][wi];
            }
            acc[bi].0 += pz;
            acc[bi].1 += pz * inner;
        }
        Ok(acc
            .into_iter()
            .map(|(mass, sum)| if mass > 0.0 { Some(sum / mass) } else { None })
            .collect())
    }

    /// Sample n i.i.d. rows; mechanisms are evaluated in topological order
    /// (X,Z jointly, then W | X,Z, then Y | X,Z,W). The dataset carries an
    /// auto-generated role schema.
    pub fn sample_dataset(&self, n: usize, seed: u64) -> Result<SfmDataset> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nz = self.n_z();

        // Flatten the joint for categorical sampling.
        let mut joint_flat = Vec::with_capacity(2 * nz);
        for g in 0..2 {
            for zi in 0..nz {
                joint_flat.push(self.joint_xz[g][zi]);
            }
        }

        let mut groups = Vec::with_capacity(n);
        let mut z_cfg = Vec::with_capacity(n);
        let mut w_cfg = Vec::with_capacity(n);
        let mut outcome = Vec::with_capacity(n);
        for _ in 0..n {
            let cell = sample_categorical(&mut rng, &joint_flat);
            let g = cell / nz;
            let zi = cell % nz;
            let wi = sample_categorical(&mut rng, &self.w_given_xz[g][zi]);
            let y = if rng.gen::<f64>() < self.p_y[g][zi][wi] { 1.0 } else { 0.0 };
            groups.push(g);
            z_cfg.push(zi);
            w_cfg.push(wi);
            outcome.push(y);
        }

        let mut columns = Vec::new();
        let attr_cells: Vec<Option<&str>> = groups
            .iter()
            .map(|&g| Some(if g == 0 { "minority" } else { "majority" }))
            .collect();
        columns.push(Column::categorical("attr", &attr_cells));
        for (ci, comp) in self.z.iter().enumerate() {
            columns.push(component_column(comp, &z_cfg, &self.z, ci));
        }
        for (ci, comp) in self.w.iter().enumerate() {
            columns.push(component_column(comp, &w_cfg, &self.w, ci));
        }
        columns.push(Column::numeric("outcome", outcome));

        let schema = self.role_schema();
        SfmDataset::from_columns(columns, schema, 0)
    }

    /// The role schema matching `sample_dataset` output.
    pub fn role_schema(&self) -> RoleSchema {
        let mut schema = RoleSchema::new(
            "attr",
            "minority",
            "majority",
            self.z.iter().map(|c| c.name.clone()).collect(),
            self.w.iter().map(|c| c.name.clone()).collect(),
            "outcome",
        );
        schema.age = self.age_component().map(|i| self.z[i].name.clone());
        schema.admission_type = self.admission_component().map(|i| self.w[i].name.clone());
        schema
    }

    /// Monte-Carlo check of the enumeration oracle: samples units and
    /// evaluates counterfactual outcome means directly on the sampled
    /// mechanism inputs. Returns psi estimates and their standard errors.
    pub fn monte_carlo_psi(&self, n: usize, seed: u64) -> McPsi {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nz = self.n_z();
        let mut joint_flat = Vec::with_capacity(2 * nz);
        for g in 0..2 {
            for zi in 0..nz {
                joint_flat.push(self.joint_xz[g][zi]);
            }
        }
        let mut sums = [[[0.0f64; 2]; 2]; 2];
        let mut sq = [[[0.0f64; 2]; 2]; 2];
        let mut counts = [0usize; 2];
        for _ in 0..n {
            let cell = sample_categorical(&mut rng, &joint_flat);
            let c = cell / nz;
            let zi = cell % nz;
            counts[c] += 1;
            for a in 0..2 {
                // Counterfactual mediator draw under do(X = a).
                let wi = sample_categorical(&mut rng, &self.w_given_xz[a][zi]);
                for b in 0..2 {
                    let v = self.p_y[b][zi][wi];
                    sums[a][b][c] += v;
                    sq[a][b][c] += v * v;
                }
            }
        }
        let mut psi = [[[f64::NAN; 2]; 2]; 2];
        let mut se = [[[f64::NAN; 2]; 2]; 2];
        for a in 0..2 {
            for b in 0..2 {
                for c in 0..2 {
                    let m = counts[c] as f64;
                    if m > 1.0 {
                        let mean = sums[a][b][c] / m;
                        let var = (sq[a][b][c] / m - mean * mean).max(0.0) * m / (m - 1.0);
                        psi[a][b][c] = mean;
                        se[a][b][c] = (var / m).sqrt();
                    }
                }
            }
        }
        McPsi { psi, se }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scm spec serializes")
    }

    pub fn from_json(text: &str) -> Result<ScmSpec> {
        let spec: ScmSpec = serde_json::from_str(text)
            .map_err(|e| Error::validation(format!("scm spec parse: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<ScmSpec> {
        let text = std::fs::read_to_string(path)?;
        ScmSpec::from_json(&text)
    }
}

fn component_column(
    comp: &ComponentDef,
    configs: &[usize],
    all: &[ComponentDef],
    comp_idx: usize,
) -> Column {
    let level_of = |cfg: usize| decode_config(all, cfg)[comp_idx];
    if comp.is_numeric() {
        let values: Vec<f64> = configs
            .iter()
            .map(|&cfg| comp.levels[level_of(cfg)].value.expect("numeric component"))
            .collect();
        Column::numeric(&comp.name, values)
    } else {
        let labels: Vec<Option<&str>> = configs
            .iter()
            .map(|&cfg| Some(comp.levels[level_of(cfg)].label.as_str()))
            .collect();
        Column::categorical(&comp.name, &labels)
    }
}

fn sample_categorical(rng: &mut ChaCha8Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Exact population-level decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleDecomposition {
    pub direct: f64,
    pub indirect_negated: f64,
    pub confounded_negated: f64,
    pub tv: f64,
}

/// Exact counterfactual means and effects for a spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleEffects {
    /// psi[a][b][c] with minority = 0, majority = 1.
    pub psi: [[[f64; 2]; 2]; 2],
    pub forward: OracleDecomposition,
    pub reverse: OracleDecomposition,
    /// Direct effect per (age bin, admission type), when a grid was given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub de_cells: Option<Vec<Vec<Option<f64>>>>,
    /// Negated indirect effect per age bin.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ie_bins: Option<Vec<Option<f64>>>,
}

/// Monte-Carlo psi estimates with standard errors.
#[derive(Debug, Clone, Copy)]
pub struct McPsi {
    pub psi: [[[f64; 2]; 2]; 2],
    pub se: [[[f64; 2]; 2]; 2],
}

// ---------------------------------------------------------------------------
// Spec families used by fixtures and tests
// ---------------------------------------------------------------------------

pub mod families {
    //! Constructors for the spec families used across the test suites:
    //! randomized well-overlapped specs, structural nulls, additive-risk
    //! (interaction-free) specs, and product-interaction specs.

    use super::*;
    use rand::Rng;

    const DEFAULT_AGES: [f64; 4] = [30.0, 60.0, 70.0, 85.0];

    fn rng_for(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    /// Random joint P(x,z) with conditional attribute shares bounded away
    /// from 0 and 1 for healthy overlap.
    fn random_joint(rng: &mut ChaCha8Rng, nz: usize, lo: f64, hi: f64) -> Vec<Vec<f64>> {
        let mut pz: Vec<f64> = (0..nz).map(|_| rng.gen_range(0.4..1.0)).collect();
        let total: f64 = pz.iter().sum();
        pz.iter_mut().for_each(|p| *p /= total);
        let mut joint = vec![vec![0.0; nz]; 2];
        for zi in 0..nz {
            let share = rng.gen_range(lo..hi);
            joint[0][zi] = pz[zi] * share;
            joint[1][zi] = pz[zi] * (1.0 - share);
        }
        joint
    }

    fn random_mechanism(rng: &mut ChaCha8Rng, nz: usize, nw: usize, floor: f64) -> Vec<Vec<Vec<f64>>> {
        let mut mech = vec![vec![vec![0.0; nw]; nz]; 2];
        for g in 0..2 {
            for zi in 0..nz {
                let mut row: Vec<f64> = (0..nw).map(|_| rng.gen_range(floor..1.0)).collect();
                let s: f64 = row.iter().sum();
                row.iter_mut().for_each(|p| *p /= s);
                mech[g][zi] = row;
            }
        }
        mech
    }

    fn z_components(rng: &mut ChaCha8Rng, with_age: bool) -> Vec<ComponentDef> {
        let n_age_levels = rng.gen_range(2..=4usize);
        let age = ComponentDef {
            name: "age".into(),
            levels: DEFAULT_AGES[..n_age_levels].iter().map(|&a| LevelDef::numeric(a)).collect(),
            special: if with_age { Some(SpecialRole::Age) } else { None },
        };
        vec![age]
    }

    fn w_components(rng: &mut ChaCha8Rng, with_admission: bool) -> Vec<ComponentDef> {
        let types = ["Medical", "Surgery-Emergency", "Surgery-Elective"];
        let n_types = rng.gen_range(2..=3usize);
        let adm = ComponentDef {
            name: "admission_type".into(),
            levels: types[..n_types].iter().map(|t| LevelDef::named(*t)).collect(),
            special: if with_admission { Some(SpecialRole::AdmissionType) } else { None },
        };
        if rng.gen_bool(0.5) {
            let n_sev = rng.gen_range(2..=2usize);
            let sev = ComponentDef {
                name: "severity".into(),
                levels: (0..n_sev).map(|i| LevelDef::numeric(i as f64)).collect(),
                special: None,
            };
            vec![adm, sev]
        } else {
            vec![adm]
        }
    }

    /// A randomized, well-overlapped spec with all three pathways active.
    /// Attribute shares conditional on Z stay within [0.2, 0.8] and the
    /// mediator mechanism has a mass floor, so propensities are bounded.
    pub fn random_overlapped(seed: u64) -> ScmSpec {
        let mut rng = rng_for(seed);
        let z = z_components(&mut rng, true);
        let w = w_components(&mut rng, true);
        let nz = config_count(&z);
        let nw = config_count(&w);
        let joint_xz = random_joint(&mut rng, nz, 0.2, 0.8);
        let w_given_xz = random_mechanism(&mut rng, nz, nw, 0.08);
        let mut p_y = vec![vec![vec![0.0; nw]; nz]; 2];
        for g in 0..2 {
            for zi in 0..nz {
                for wi in 0..nw {
                    p_y[g][zi][wi] = rng.gen_range(0.03..0.35);
                }
            }
        }
        ScmSpec {
            name: format!("random-overlapped-{seed}"),
            z,
            w,
            joint_xz,
            w_given_xz,
            p_y,
            additive_risk: false,
        }
    }

    /// Which structural edge to remove for a null spec.
    #[derive(Debug, Clone, Copy, PartialEq, Eq)]
    pub enum StructuralNull {
        /// p_y does not depend on x: zero direct effect.
        NoDirect,
        /// P(w|x,z) does not depend on x: zero indirect effect.
        NoIndirect,
        /// X independent of Z: zero confounded effect.
        NoConfounding,
    }

    /// Randomized spec with one pathway structurally removed.
    pub fn structural_null(kind: StructuralNull, seed: u64) -> ScmSpec {
        let mut spec = random_overlapped(seed);
        match kind {
            StructuralNull::NoDirect => {
                spec.p_y[1] = spec.p_y[0].clone();
                spec.name = format!("null-no-direct-{seed}");
            }
            StructuralNull::NoIndirect => {
                spec.w_given_xz[1] = spec.w_given_xz[0].clone();
                spec.name = format!("null-no-indirect-{seed}");
            }
            StructuralNull::NoConfounding => {
                let nz = spec.n_z();
                let p_min: f64 = spec.joint_xz[0].iter().sum();
                let pz: Vec<f64> = (0..nz)
                    .map(|zi| spec.joint_xz[0][zi] + spec.joint_xz[1][zi])
                    .collect();
                for zi in 0..nz {
                    spec.joint_xz[0][zi] = pz[zi] * p_min;
                    spec.joint_xz[1][zi] = pz[zi] * (1.0 - p_min);
                }
                spec.name = format!("null-no-confounding-{seed}");
            }
        }
        spec
    }

    /// Additive-risk spec where every interaction null holds: the risk is
    /// p_y = p1(x) + p2(w) + p3(z) with p2 linear in the mediator value,
    /// and the mediator mechanism adds an attribute bump independent of Z,
    /// so mediated gaps do not vary with the conditioning group.
    pub fn additive_null(seed: u64) -> ScmSpec {
        let mut rng = rng_for(seed);
        let n_ages = rng.gen_range(2..=4usize);
        let z = vec![ComponentDef {
            name: "age".into(),
            levels: DEFAULT_AGES[..n_ages].iter().map(|&a| LevelDef::numeric(a)).collect(),
            special: Some(SpecialRole::Age),
        }];
        let w = vec![ComponentDef {
            name: "w".into(),
            levels: (0..3).map(|i| LevelDef::numeric(i as f64)).collect(),
            special: None,
        }];
        let nz = config_count(&z);
        let joint_xz = random_joint(&mut rng, nz, 0.25, 0.75);

        // W = base(z) + bump(x): base ~ Bernoulli(pb(z)); the bump fires
        // with a z-independent, attribute-specific probability. Both arms
        // keep every level's mass positive so no propensity is a structural
        // zero.
        let s0 = rng.gen_range(0.05..0.15);
        let s1 = s0 + rng.gen_range(0.15..0.4);
        let pbs: Vec<f64> = (0..nz).map(|_| rng.gen_range(0.2..0.8)).collect();
        let mut w_given_xz = vec![vec![vec![0.0; 3]; nz]; 2];
        for (zi, &pb) in pbs.iter().enumerate() {
            for (g, &s) in [s0, s1].iter().enumerate() {
                w_given_xz[g][zi] =
                    vec![(1.0 - pb) * (1.0 - s), pb * (1.0 - s) + (1.0 - pb) * s, pb * s];
            }
        }

        let base = rng.gen_range(0.05..0.12);
        let cx = rng.gen_range(-0.03..0.05);
        let gamma = rng.gen_range(0.02..0.07);
        let cz: Vec<f64> = (0..nz).map(|_| rng.gen_range(0.0..0.1)).collect();
        let mut p_y = vec![vec![vec![0.0; 3]; nz]; 2];
        for g in 0..2 {
            for zi in 0..nz {
                for wi in 0..3 {
                    p_y[g][zi][wi] =
                        base + if g == 1 { cx } else { 0.0 } + gamma * wi as f64 + cz[zi];
                }
            }
        }
        let spec = ScmSpec {
            name: format!("additive-null-{seed}"),
            z,
            w,
            joint_xz,
            w_given_xz,
            p_y,
            additive_risk: true,
        };
        debug_assert!(spec.validate().is_ok());
        spec
    }

    /// Additive spec plus a strong attribute-by-mediator product term in
    /// the risk; the direct-by-indirect interaction test should reject.
    pub fn xw_interaction(seed: u64, theta: f64) -> ScmSpec {
        let mut spec = additive_null(seed);
        for zi in 0..spec.n_z() {
            for wi in 0..spec.n_w() {
                spec.p_y[1][zi][wi] = (spec.p_y[1][zi][wi] + theta * wi as f64).min(0.95);
            }
        }
        spec.additive_risk = false;
        spec.name = format!("xw-interaction-{seed}");
        spec
    }

    /// Well-overlapped spec tailored to the overlap sensitivity analysis:
    /// a many-level numeric confounder with thin binomial tails drives a
    /// logit-linear attribute share in [~0.26, ~0.55], and the mediator is
    /// independent of the attribute, so the conditional propensity is
    /// exactly logit-linear in (age, mediator dummies) and a parametric
    /// propensity model refits coherently after trimming.
    pub fn smooth_overlap(seed: u64) -> ScmSpec {
        let mut rng = rng_for(seed);
        let n_levels = 25usize;
        let z = vec![ComponentDef {
            name: "age".into(),
            levels: (0..n_levels)
                .map(|i| LevelDef::numeric(20.0 + 2.5 * i as f64))
                .collect(),
            special: Some(SpecialRole::Age),
        }];
        let w = vec![ComponentDef {
            name: "admission_type".into(),
            levels: vec![LevelDef::named("Medical"), LevelDef::named("Surgery-Elective")],
            special: Some(SpecialRole::AdmissionType),
        }];
        // Binomial(n_levels-1, 1/2) confounder weights: thin tails keep the
        // extreme propensities rare.
        let mut pz = vec![0.0f64; n_levels];
        let m = (n_levels - 1) as f64;
        for (i, p) in pz.iter_mut().enumerate() {
            let mut log_c = 0.0;
            for k in 0..i {
                log_c += ((m - k as f64) / (k as f64 + 1.0)).ln();
            }
            *p = (log_c + m * 0.5f64.ln()).exp();
        }
        let total: f64 = pz.iter().sum();
        pz.iter_mut().for_each(|p| *p /= total);

        let slope = 0.045 + rng.gen_range(0.0..0.01);
        let mid = n_levels as f64 / 2.0;
        let mut joint_xz = vec![vec![0.0; n_levels]; 2];
        for zi in 0..n_levels {
            let logit = -0.55 + slope * (zi as f64 - mid);
            let share = 1.0 / (1.0 + (-logit as f64).exp());
            joint_xz[0][zi] = pz[zi] * share;
            joint_xz[1][zi] = pz[zi] * (1.0 - share);
        }
        // Mediator independent of the attribute (and of z): the attribute
        // share given (z, w) reduces to the share given z alone.
        let p_med = 0.6;
        let w_row = vec![p_med, 1.0 - p_med];
        let w_given_xz = vec![vec![w_row.clone(); n_levels]; 2];
        let mut p_y = vec![vec![vec![0.0; 2]; n_levels]; 2];
        let cx = rng.gen_range(0.015..0.03);
        for g in 0..2 {
            for zi in 0..n_levels {
                for wi in 0..2 {
                    p_y[g][zi][wi] = 0.04
                        + 0.004 * zi as f64
                        + if wi == 0 { 0.05 } else { 0.0 }
                        + if g == 1 { cx } else { 0.0 };
                }
            }
        }
        ScmSpec {
            name: format!("smooth-overlap-{seed}"),
            z,
            w,
            joint_xz,
            w_given_xz,
            p_y,
            additive_risk: false,
        }
    }

    /// Spec with near-deterministic attribute cells: a slab of the
    /// population sits at propensities around `floor`, spread over many
    /// distinct levels so quantile trimming cannot remove it all at once.
    pub fn poor_overlap(seed: u64, floor: f64) -> ScmSpec {
        let mut rng = rng_for(seed);
        let n_levels = 8;
        let z = vec![ComponentDef {
            name: "age".into(),
            levels: (0..n_levels).map(|i| LevelDef::numeric(30.0 + 8.0 * i as f64)).collect(),
            special: Some(SpecialRole::Age),
        }];
        let w = vec![ComponentDef {
            name: "w".into(),
            levels: (0..2).map(|i| LevelDef::numeric(i as f64)).collect(),
            special: None,
        }];
        let nz = n_levels;
        // First half of the z levels: tiny, slightly different minority
        // shares; second half: healthy shares.
        let mut joint_xz = vec![vec![0.0; nz]; 2];
        for zi in 0..nz {
            let pz = 1.0 / nz as f64;
            let share = if zi < nz / 2 {
                floor * (1.0 + zi as f64)
            } else {
                rng.gen_range(0.35..0.6)
            };
            joint_xz[0][zi] = pz * share;
            joint_xz[1][zi] = pz * (1.0 - share);
        }
        let w_given_xz = random_mechanism(&mut rng, nz, 2, 0.25);
        let mut p_y = vec![vec![vec![0.0; 2]; nz]; 2];
        for g in 0..2 {
            for zi in 0..nz {
                for wi in 0..2 {
                    p_y[g][zi][wi] = rng.gen_range(0.05..0.3);
                }
            }
        }
        ScmSpec {
            name: format!("poor-overlap-{seed}"),
            z,
            w,
            joint_xz,
            w_given_xz,
            p_y,
            additive_risk: false,
        }
    }
}

/// Hand-enumerable 2x2x2 spec shared by tests across the crate: the psi
/// values asserted in this module's tests were expanded on paper from the
/// tables.
#[cfg(test)]
pub(crate) fn hand_spec() -> ScmSpec {
    ScmSpec {
        name: "hand-2x2x2".into(),
        z: vec![ComponentDef {
            name: "z".into(),
            levels: vec![LevelDef::numeric(0.0), LevelDef::numeric(1.0)],
            special: None,
        }],
        w: vec![ComponentDef {
            name: "w".into(),
            levels: vec![LevelDef::numeric(0.0), LevelDef::numeric(1.0)],
            special: None,
        }],
        joint_xz: vec![vec![0.3, 0.2], vec![0.1, 0.4]],
        w_given_xz: vec![
            vec![vec![0.8, 0.2], vec![0.5, 0.5]],
            vec![vec![0.3, 0.7], vec![0.1, 0.9]],
        ],
        p_y: vec![
            vec![vec![0.10, 0.30], vec![0.20, 0.40]],
            vec![vec![0.15, 0.25], vec![0.35, 0.45]],
        ],
        additive_risk: false,
    }
}
