//! Census-anchored baseline risks of admission, event-specific risk
//! ratios, the age x admission-type risk-ratio heatmap, and the area-level
//! risk radar.
//!
//! Population counts come from census anchor years and are linearly
//! interpolated per (area, age band, group); admission counts come from a
//! dataset or a pre-aggregated file. The per-cell risk is n/N and
//! event-specific risks mix cells with weights proportional to the total
//! (both groups) population.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::data::{ColumnData, Group, SfmDataset};
use crate::error::{Error, Result};
use crate::heterogeneity::{BootstrapPlan, CellGrid, Heatmap};
use crate::stats;

/// How a census count was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Anchor,
    Interpolated,
    /// Linear continuation beyond the anchor range.
    Extrapolated,
    /// Single-anchor constant extension.
    ConstantExtension,
}

/// Census population group: published tables carry minority and total
/// counts; majority counts are derived as total - minority.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PopGroup {
    Minority,
    Total,
}

impl fmt::Display for PopGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PopGroup::Minority => write!(f, "minority"),
            PopGroup::Total => write!(f, "total"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CensusRecord {
    pub area: String,
    pub year: i32,
    pub age_lo: f64,
    pub age_hi: f64,
    pub group: PopGroup,
    pub count: f64,
    #[serde(default = "anchor_provenance")]
    pub provenance: Provenance,
}

fn anchor_provenance() -> Provenance {
    Provenance::Anchor
}

/// Population counts per (area, year, age band, group).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CensusTable {
    pub records: Vec<CensusRecord>,
}

type BandKey = (u64, u64);

fn band_key(lo: f64, hi: f64) -> BandKey {
    (lo.to_bits(), hi.to_bits())
}

impl CensusTable {
    pub fn validate(&self) -> Result<()> {
        for r in &self.records {
            if r.count < 0.0 {
                return Err(Error::validation(format!(
                    "census count {} for area {} is negative",
                    r.count, r.area
                )));
            }
            if r.age_lo > r.age_hi {
                return Err(Error::validation(format!(
                    "census age band [{}, {}] is inverted",
                    r.age_lo, r.age_hi
                )));
            }
        }
        // Minority never exceeds total for the same cell.
        for r in &self.records {
            if r.group == PopGroup::Minority {
                if let Some(total) = self.lookup(&r.area, r.year, r.age_lo, r.age_hi, PopGroup::Total)
                {
                    if r.count > total + 1e-9 {
                        return Err(Error::validation(format!(
                            "minority count {} exceeds total {total} in area {} year {} ages {}-{}",
                            r.count, r.area, r.year, r.age_lo, r.age_hi
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn lookup(&self, area: &str, year: i32, lo: f64, hi: f64, group: PopGroup) -> Option<f64> {
        self.records
            .iter()
            .find(|r| {
                r.area == area
                    && r.year == year
                    && band_key(r.age_lo, r.age_hi) == band_key(lo, hi)
                    && r.group == group
            })
            .map(|r| r.count)
    }

    pub fn areas(&self) -> Vec<String> {
        let set: BTreeSet<String> = self.records.iter().map(|r| r.area.clone()).collect();
        set.into_iter().collect()
    }

    /// Distinct age bands, ascending by lower bound.
    pub fn age_bands(&self) -> Vec<(f64, f64)> {
        let mut set: Vec<(f64, f64)> = Vec::new();
        for r in &self.records {
            if !set.iter().any(|&(lo, hi)| band_key(lo, hi) == band_key(r.age_lo, r.age_hi)) {
                set.push((r.age_lo, r.age_hi));
            }
        }
        set.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        set
    }

    pub fn years(&self) -> Vec<i32> {
        let set: BTreeSet<i32> = self.records.iter().map(|r| r.year).collect();
        set.into_iter().collect()
    }

    pub fn restrict_to_area(&self, area: &str) -> CensusTable {
        CensusTable {
            records: self.records.iter().filter(|r| r.area == area).cloned().collect(),
        }
    }

    /// Header: area,year,age_lo,age_hi,group,count
    pub fn load_csv(path: &Path) -> Result<CensusTable> {
        let mut rdr = csv::ReaderBuilder::new().from_path(path).map_err(|e| {
            Error::Io(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("cannot open census file {}: {e}", path.display()),
            ))
        })?;
        let mut records = Vec::new();
        for row in rdr.deserialize::<CensusCsvRow>() {
            let row = row.map_err(|e| Error::validation(format!("census parse: {e}")))?;
            let group = match row.group.as_str() {
                "minority" => PopGroup::Minority,
                "total" => PopGroup::Total,
                other => {
                    return Err(Error::validation(format!(
                        "census group must be 'minority' or 'total', got '{other}'"
                    )))
                }
            };
            records.push(CensusRecord {
                area: row.area,
                year: row.year,
                age_lo: row.age_lo,
                age_hi: row.age_hi,
                group,
                count: row.count,
                provenance: Provenance::Anchor,
            });
        }
        let table = CensusTable { records };
        table.validate()?;
        Ok(table)
    }
}

#[derive(Debug, Deserialize)]
struct CensusCsvRow {
    area: String,
    year: i32,
    age_lo: f64,
    age_hi: f64,
    group: String,
    count: f64,
}

#[derive(Debug, Deserialize)]
struct AdmissionCsvRow {
    area: Option<String>,
    year: i32,
    age_lo: f64,
    age_hi: f64,
    group: String,
    diagnosis: String,
    n: f64,
}

/// Piecewise-linear interpolation of census counts to the target years,
/// per (area, age band, group). Years outside the anchor range continue
/// the nearest segment and are flagged; a single anchor extends as a
/// constant.
pub fn interpolate_population(census: &CensusTable, target_years: &[i32]) -> Result<CensusTable> {
    census.validate()?;
    let mut out = Vec::new();
    let mut series: Vec<(String, BandKey, (f64, f64), PopGroup, Vec<(i32, f64)>)> = Vec::new();
    for r in &census.records {
        let key = band_key(r.age_lo, r.age_hi);
        match series
            .iter_mut()
            .find(|(area, bk, _, g, _)| *area == r.area && *bk == key && *g == r.group)
        {
            Some((_, _, _, _, anchors)) => anchors.push((r.year, r.count)),
            None => series.push((
                r.area.clone(),
                key,
                (r.age_lo, r.age_hi),
                r.group,
                vec![(r.year, r.count)],
            )),
        }
    }
    for (area, _, (lo, hi), group, mut anchors) in series {
        anchors.sort_by_key(|&(y, _)| y);
        anchors.dedup_by_key(|&mut (y, _)| y);
        for &year in target_years {
            let (count, provenance) = interpolate_series(&anchors, year);
            out.push(CensusRecord {
                area: area.clone(),
                year,
                age_lo: lo,
                age_hi: hi,
                group,
                count,
                provenance,
            });
        }
    }
    Ok(CensusTable { records: out })
}

fn interpolate_series(anchors: &[(i32, f64)], year: i32) -> (f64, Provenance) {
    if anchors.len() == 1 {
        let p = if anchors[0].0 == year { Provenance::Anchor } else { Provenance::ConstantExtension };
        return (anchors[0].1, p);
    }
    if let Some(&(_, c)) = anchors.iter().find(|&&(y, _)| y == year) {
        return (c, Provenance::Anchor);
    }
    let first = anchors[0];
    let last = anchors[anchors.len() - 1];
    let segment = if year < first.0 {
        (anchors[0], anchors[1], Provenance::Extrapolated)
    } else if year > last.0 {
        (anchors[anchors.len() - 2], last, Provenance::Extrapolated)
    } else {
        let pos = anchors.iter().position(|&(y, _)| y > year).expect("inside range");
        (anchors[pos - 1], anchors[pos], Provenance::Interpolated)
    };
    let ((y0, c0), (y1, c1), provenance) = segment;
    let t = (year - y0) as f64 / (y1 - y0) as f64;
    (c0 + t * (c1 - c0), provenance)
}

// ---------------------------------------------------------------------------
// Admission counts
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissionRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub area: Option<String>,
    pub year: i32,
    pub age_lo: f64,
    pub age_hi: f64,
    pub group: Group,
    pub diagnosis: String,
    pub n: f64,
}

/// Admission counts per (area?, year, age band, group, diagnosis).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AdmissionCounts {
    pub records: Vec<AdmissionRecord>,
}

impl AdmissionCounts {
    pub fn validate(&self) -> Result<()> {
        if self.records.iter().any(|r| r.n < 0.0) {
            return Err(Error::validation("admission counts must be non-negative"));
        }
        Ok(())
    }

    pub fn total(&self) -> f64 {
        self.records.iter().map(|r| r.n).sum()
    }

    pub fn areas(&self) -> Vec<String> {
        let set: BTreeSet<String> =
            self.records.iter().filter_map(|r| r.area.clone()).collect();
        set.into_iter().collect()
    }

    pub fn restrict_to_area(&self, area: &str) -> AdmissionCounts {
        AdmissionCounts {
            records: self
                .records
                .iter()
                .filter(|r| r.area.as_deref() == Some(area))
                .cloned()
                .collect(),
        }
    }

    /// Count admissions in a dataset into the given age bands, using the
    /// schema's year, age, admission-type (diagnosis), and optionally area
    /// columns. Rows with a missing attribute or missing cell values are
    /// skipped.
    pub fn from_dataset(
        ds: &SfmDataset,
        age_bands: &[(f64, f64)],
        by_area: bool,
    ) -> Result<AdmissionCounts> {
        let age_col =
            ds.schema.age.as_deref().ok_or_else(|| Error::schema("need an age column"))?;
        let year_col =
            ds.schema.year.as_deref().ok_or_else(|| Error::schema("need a year column"))?;
        let adm_col = ds
            .schema
            .admission_type
            .as_deref()
            .ok_or_else(|| Error::schema("need an admission-type column"))?;
        let (ages, age_miss) = ds.numeric(age_col)?;
        let (years, year_miss) = ds.numeric(year_col)?;
        let adm = ds.column(adm_col).expect("schema-checked");
        let area_col = if by_area {
            let name = ds
                .schema
                .area
                .as_deref()
                .ok_or_else(|| Error::schema("need an area column for per-area counts"))?;
            Some(ds.column(name).expect("schema-checked"))
        } else {
            None
        };
        let groups = ds.attribute_groups();

        let mut records: Vec<AdmissionRecord> = Vec::new();
        for r in 0..ds.n_rows {
            let Some(g) = groups[r] else { continue };
            if age_miss[r] || year_miss[r] || adm.missing[r] {
                continue;
            }
            let Some(&(lo, hi)) =
                age_bands.iter().find(|&&(lo, hi)| ages[r] >= lo && ages[r] <= hi)
            else {
                continue;
            };
            let diagnosis = match &adm.data {
                ColumnData::Categorical { codes, levels } => levels[codes[r] as usize].clone(),
                ColumnData::Numeric(v) => format!("{}", v[r]),
            };
            let area = match area_col {
                Some(col) => {
                    if col.missing[r] {
                        continue;
                    }
                    col.cell_text(r)
                }
                None => None,
            };
            let year = years[r] as i32;
            match records.iter_mut().find(|rec| {
                rec.area == area
                    && rec.year == year
                    && band_key(rec.age_lo, rec.age_hi) == band_key(lo, hi)
                    && rec.group == g
                    && rec.diagnosis == diagnosis
            }) {
                Some(rec) => rec.n += 1.0,
                None => records.push(AdmissionRecord {
                    area,
                    year,
                    age_lo: lo,
                    age_hi: hi,
                    group: g,
                    diagnosis,
                    n: 1.0,
                }),
            }
        }
        Ok(AdmissionCounts { records })
    }

    /// Header: area,year,age_lo,age_hi,group,diagnosis,n with group in
    /// {minority, majority}; an empty area means national.
    pub fn load_csv(path: &Path) -> Result<AdmissionCounts> {
        let mut rdr = csv::ReaderBuilder::new().from_path(path).map_err(|e| {
            Error::Io(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("cannot open admissions file {}: {e}", path.display()),
            ))
        })?;
        let mut records = Vec::new();
        for row in rdr.deserialize::<AdmissionCsvRow>() {
            let row = row.map_err(|e| Error::validation(format!("admissions parse: {e}")))?;
            let group = match row.group.as_str() {
                "minority" => Group::Minority,
                "majority" => Group::Majority,
                other => {
                    return Err(Error::validation(format!(
                        "admissions group must be 'minority' or 'majority', got '{other}'"
                    )))
                }
            };
            records.push(AdmissionRecord {
                area: row.area.filter(|a| !a.is_empty()),
                year: row.year,
                age_lo: row.age_lo,
                age_hi: row.age_hi,
                group,
                diagnosis: row.diagnosis,
                n: row.n,
            });
        }
        let counts = AdmissionCounts { records };
        counts.validate()?;
        Ok(counts)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut wtr = csv::Writer::from_path(path)
            .map_err(|e| Error::validation(format!("cannot write admissions: {e}")))?;
        wtr.write_record(["area", "year", "age_lo", "age_hi", "group", "diagnosis", "n"])
            .map_err(|e| Error::validation(e.to_string()))?;
        for r in &self.records {
            wtr.write_record([
                r.area.clone().unwrap_or_default(),
                r.year.to_string(),
                format!("{}", r.age_lo),
                format!("{}", r.age_hi),
                r.group.to_string(),
                r.diagnosis.clone(),
                format!("{}", r.n),
            ])
            .map_err(|e| Error::validation(e.to_string()))?;
        }
        wtr.flush()?;
        Ok(())
    }

    fn count_matching(
        &self,
        year: i32,
        band: (f64, f64),
        group: Group,
        diagnoses: Option<&[String]>,
    ) -> f64 {
        self.records
            .iter()
            .filter(|r| {
                r.year == year
                    && band_key(r.age_lo, r.age_hi) == band_key(band.0, band.1)
                    && r.group == group
                    && diagnoses.map(|ds| ds.contains(&r.diagnosis)).unwrap_or(true)
            })
            .map(|r| r.n)
            .sum()
    }
}

// ---------------------------------------------------------------------------
// Risks and risk ratios
// ---------------------------------------------------------------------------

/// Conditioning event over (age band, year) cells; `None` means no
/// restriction.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub age_bands: Option<Vec<(f64, f64)>>,
    pub years: Option<Vec<i32>>,
}

impl Event {
    pub fn all() -> Event {
        Event::default()
    }

    pub fn ages(bands: Vec<(f64, f64)>) -> Event {
        Event { age_bands: Some(bands), years: None }
    }

    fn includes(&self, band: (f64, f64), year: i32) -> bool {
        let band_ok = match &self.age_bands {
            // A census band counts when fully contained in a requested band.
            Some(bands) => bands.iter().any(|&(lo, hi)| band.0 >= lo && band.1 <= hi),
            None => true,
        };
        let year_ok = match &self.years {
            Some(years) => years.contains(&year),
            None => true,
        };
        band_ok && year_ok
    }
}

/// Population cells (band, year, N_minority, N_majority) of the census
/// matching an event. When the table spans several areas the counts are
/// summed, so a multi-area table yields the pooled (national) cells.
fn population_cells(census: &CensusTable, event: &Event) -> Result<Vec<((f64, f64), i32, f64, f64)>> {
    let mut cells: Vec<((f64, f64), i32, f64, f64)> = Vec::new();
    for band in census.age_bands() {
        for year in census.years() {
            if !event.includes(band, year) {
                continue;
            }
            let mut minority = 0.0;
            let mut total = 0.0;
            let mut seen = false;
            for r in &census.records {
                if r.year == year && band_key(r.age_lo, r.age_hi) == band_key(band.0, band.1) {
                    seen = true;
                    match r.group {
                        PopGroup::Minority => minority += r.count,
                        PopGroup::Total => total += r.count,
                    }
                }
            }
            if seen {
                cells.push((band, year, minority, total - minority));
            }
        }
    }
    if cells.is_empty() {
        return Err(Error::degenerate("no census cells match the event"));
    }
    Ok(cells)
}

/// Event-specific admission risk for one group: per-cell risks n/N mixed
/// with weights proportional to the total (minority + majority) population.
pub fn admission_risk(
    census: &CensusTable,
    admissions: &AdmissionCounts,
    event: &Event,
    group: Group,
    diagnoses: Option<&[String]>,
) -> Result<f64> {
    admissions.validate()?;
    let cells = population_cells(census, event)?;
    let weight_total: f64 = cells.iter().map(|&(_, _, n0, n1)| n0 + n1).sum();
    if weight_total <= 0.0 {
        return Err(Error::degenerate("event has zero total population"));
    }
    let mut risk = 0.0;
    for &(band, year, n_min, n_maj) in &cells {
        let pop = match group {
            Group::Minority => n_min,
            Group::Majority => n_maj,
        };
        if pop <= 0.0 {
            return Err(Error::degenerate(format!(
                "zero {group} population in ages {}-{} year {year}",
                band.0, band.1
            )));
        }
        let n = admissions.count_matching(year, band, group, diagnoses);
        risk += (n_min + n_maj) / weight_total * (n / pop);
    }
    Ok(risk)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskRatio {
    pub rr: f64,
    pub risk_minority: f64,
    pub risk_majority: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ci: Option<(f64, f64)>,
}

/// Minority-to-majority risk ratio for an event, with an optional
/// bootstrap interval (admissions resampled, Gaussian approximation on the
/// log ratio).
pub fn risk_ratio(
    census: &CensusTable,
    admissions: &AdmissionCounts,
    event: &Event,
    diagnoses: Option<&[String]>,
    bootstrap: Option<&BootstrapPlan>,
) -> Result<RiskRatio> {
    let risk_minority = admission_risk(census, admissions, event, Group::Minority, diagnoses)?;
    let risk_majority = admission_risk(census, admissions, event, Group::Majority, diagnoses)?;
    if risk_majority <= 0.0 {
        return Err(Error::degenerate("majority risk is zero; risk ratio undefined"));
    }
    let rr = risk_minority / risk_majority;
    let ci = match bootstrap {
        Some(plan) if plan.replicates > 1 => {
            let logs: Vec<f64> = (0..plan.replicates)
                .filter_map(|b| {
                    let resampled = resample_admissions(admissions, plan.seed, b as u64);
                    let rm = admission_risk(census, &resampled, event, Group::Minority, diagnoses)
                        .ok()?;
                    let rj = admission_risk(census, &resampled, event, Group::Majority, diagnoses)
                        .ok()?;
                    (rm > 0.0 && rj > 0.0).then(|| (rm / rj).ln())
                })
                .collect();
            if logs.len() < 2 {
                None
            } else {
                let sd = stats::sample_variance(&logs).sqrt();
                Some(((rr.ln() - 1.96 * sd).exp(), (rr.ln() + 1.96 * sd).exp()))
            }
        }
        _ => None,
    };
    Ok(RiskRatio { rr, risk_minority, risk_majority, ci })
}

/// Multinomial resample of admission counts holding the total fixed
/// (conditional-binomial construction, deterministic in the seed).
fn resample_admissions(admissions: &AdmissionCounts, seed: u64, replicate: u64) -> AdmissionCounts {
    let total = admissions.total();
    let m = total.round() as u64;
    if m == 0 {
        return admissions.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (replicate.wrapping_mul(0x9e3779b97f4a7c15)));
    let mut remaining = m;
    let mut mass_left = total;
    let mut out = admissions.clone();
    for rec in out.records.iter_mut() {
        if remaining == 0 {
            rec.n = 0.0;
            continue;
        }
        let p = (rec.n / mass_left).clamp(0.0, 1.0);
        let draw = if p >= 1.0 {
            remaining
        } else {
            Binomial::new(remaining, p).map(|d| d.sample(&mut rng)).unwrap_or(0)
        };
        mass_left -= rec.n;
        rec.n = draw as f64;
        remaining -= draw;
    }
    out
}

/// Per-cell risk ratios over an age x diagnosis grid; shares the heatmap
/// type so the correlation operation applies directly.
pub fn rr_heatmap(
    census: &CensusTable,
    admissions: &AdmissionCounts,
    grid: &CellGrid,
    bootstrap: Option<&BootstrapPlan>,
) -> Result<Heatmap> {
    grid.validate()?;
    let nb = grid.age_bins.len();
    let nt = grid.admission_types.len();
    let mut values = vec![vec![None; nt]; nb];
    let mut ci_lo = vec![vec![None; nt]; nb];
    let mut ci_hi = vec![vec![None; nt]; nb];
    let mut n = vec![vec![0usize; nt]; nb];
    for (bi, &bin) in grid.age_bins.iter().enumerate() {
        for (ti, ty) in grid.admission_types.iter().enumerate() {
            let event = Event::ages(vec![bin]);
            let diag = vec![ty.clone()];
            let r = risk_ratio(census, admissions, &event, Some(&diag), bootstrap)?;
            values[bi][ti] = Some(r.rr);
            if let Some((lo, hi)) = r.ci {
                ci_lo[bi][ti] = Some(lo);
                ci_hi[bi][ti] = Some(hi);
            }
            n[bi][ti] = admissions
                .records
                .iter()
                .filter(|rec| {
                    rec.age_lo >= bin.0 && rec.age_hi <= bin.1 && rec.diagnosis == *ty
                })
                .map(|rec| rec.n)
                .sum::<f64>() as usize;
        }
    }
    Ok(Heatmap {
        grid: grid.clone(),
        values,
        ci_lo,
        ci_hi,
        n,
        method: "risk-ratio".into(),
    })
}

// ---------------------------------------------------------------------------
// Risk radar
// ---------------------------------------------------------------------------

/// Excess-risk categories with exact boundaries:
/// `<10%` none, `[10%,50%)` moderate, `[50%,100%)` substantial,
/// `[100%,200%)` severe, `>=200%` extreme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RiskCategory {
    None,
    Moderate,
    Substantial,
    Severe,
    Extreme,
}

impl RiskCategory {
    pub fn from_excess(excess: f64) -> RiskCategory {
        if excess < 0.10 {
            RiskCategory::None
        } else if excess < 0.50 {
            RiskCategory::Moderate
        } else if excess < 1.0 {
            RiskCategory::Substantial
        } else if excess < 2.0 {
            RiskCategory::Severe
        } else {
            RiskCategory::Extreme
        }
    }
}

impl fmt::Display for RiskCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            RiskCategory::None => "none",
            RiskCategory::Moderate => "moderate",
            RiskCategory::Substantial => "substantial",
            RiskCategory::Severe => "severe",
            RiskCategory::Extreme => "extreme",
        };
        write!(f, "{name}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadarRow {
    pub area: String,
    pub rr: f64,
    /// RR - 1, as a percentage.
    pub excess_pct: f64,
    pub category: RiskCategory,
}

/// Per-area age-adjusted admission risk ratios with risk categories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadarTable {
    pub rows: Vec<RadarRow>,
    /// Areas present in admissions but absent from the census.
    pub excluded_areas: Vec<String>,
}

impl RadarTable {
    /// Plot-ready delimited text: area,rr,excess_pct,category.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut wtr = csv::Writer::from_path(path)
            .map_err(|e| Error::validation(format!("cannot write radar: {e}")))?;
        wtr.write_record(["area", "rr", "excess_pct", "category"])
            .map_err(|e| Error::validation(e.to_string()))?;
        for row in &self.rows {
            wtr.write_record([
                row.area.clone(),
                format!("{}", row.rr),
                format!("{}", row.excess_pct),
                row.category.to_string(),
            ])
            .map_err(|e| Error::validation(e.to_string()))?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Per-area age-adjusted risk ratio, categorized by excess risk. All
/// diagnoses are pooled by default; passing a diagnosis set stratifies the
/// radar. The census table's native age bands drive the adjustment, and
/// admission areas without census coverage are excluded and listed.
pub fn build_radar(
    census: &CensusTable,
    admissions: &AdmissionCounts,
    diagnoses: Option<&[String]>,
) -> Result<RadarTable> {
    let census_areas: BTreeSet<String> = census.areas().into_iter().collect();
    let mut rows = Vec::new();
    let mut excluded = Vec::new();
    for area in admissions.areas() {
        if !census_areas.contains(&area) {
            excluded.push(area);
            continue;
        }
        let area_census = census.restrict_to_area(&area);
        let area_admissions = admissions.restrict_to_area(&area);
        let ratio = risk_ratio(&area_census, &area_admissions, &Event::all(), diagnoses, None)?;
        let excess = ratio.rr - 1.0;
        rows.push(RadarRow {
            area,
            rr: ratio.rr,
            excess_pct: excess * 100.0,
            category: RiskCategory::from_excess(excess),
        });
    }
    Ok(RadarTable { rows, excluded_areas: excluded })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(area: &str, year: i32, band: (f64, f64), group: PopGroup, count: f64) -> CensusRecord {
        CensusRecord {
            area: area.into(),
            year,
            age_lo: band.0,
            age_hi: band.1,
            group,
            count,
            provenance: Provenance::Anchor,
        }
    }

    fn adm(
        area: Option<&str>,
        year: i32,
        band: (f64, f64),
        group: Group,
        diagnosis: &str,
        n: f64,
    ) -> AdmissionRecord {
        AdmissionRecord {
            area: area.map(String::from),
            year,
            age_lo: band.0,
            age_hi: band.1,
            group,
            diagnosis: diagnosis.into(),
            n,
        }
    }

    const BAND: (f64, f64) = (18.0, 49.0);

    #[test]
    fn interpolation_linear_between_anchors() {
        let census = CensusTable {
            records: vec![
                rec("national", 2016, BAND, PopGroup::Minority, 100.0),
                rec("national", 2021, BAND, PopGroup::Minority, 200.0),
            ],
        };
        let out = interpolate_population(&census, &[2018]).unwrap();
        assert_eq!(out.records.len(), 1);
        assert!((out.records[0].count - 140.0).abs() < 1e-12);
        assert_eq!(out.records[0].provenance, Provenance::Interpolated);
    }

    #[test]
    fn interpolation_constant_when_anchors_equal() {
        let census = CensusTable {
            records: vec![
                rec("national", 2016, BAND, PopGroup::Total, 500.0),
                rec("national", 2021, BAND, PopGroup::Total, 500.0),
            ],
        };
        let out = interpolate_population(&census, &[2017, 2019, 2020]).unwrap();
        for r in &out.records {
            assert_eq!(r.count, 500.0);
        }
    }

    #[test]
    fn extrapolation_continues_segment_and_flags() {
        let census = CensusTable {
            records: vec![
                rec("national", 2016, BAND, PopGroup::Minority, 100.0),
                rec("national", 2021, BAND, PopGroup::Minority, 200.0),
            ],
        };
        let out = interpolate_population(&census, &[2024]).unwrap();
        assert!((out.records[0].count - 260.0).abs() < 1e-12);
        assert_eq!(out.records[0].provenance, Provenance::Extrapolated);
    }

    #[test]
    fn single_anchor_extends_constant_with_flag() {
        let census =
            CensusTable { records: vec![rec("national", 2016, BAND, PopGroup::Total, 42.0)] };
        let out = interpolate_population(&census, &[2020]).unwrap();
        assert_eq!(out.records[0].count, 42.0);
        assert_eq!(out.records[0].provenance, Provenance::ConstantExtension);
    }

    fn single_cell_fixture() -> (CensusTable, AdmissionCounts) {
        let census = CensusTable {
            records: vec![
                rec("national", 2020, BAND, PopGroup::Minority, 10_000.0),
                rec("national", 2020, BAND, PopGroup::Total, 40_000.0),
            ],
        };
        let admissions = AdmissionCounts {
            records: vec![adm(None, 2020, BAND, Group::Minority, "Medical", 30.0)],
        };
        (census, admissions)
    }

    #[test]
    fn single_cell_risk_is_exact_ratio() {
        let (census, admissions) = single_cell_fixture();
        let risk =
            admission_risk(&census, &admissions, &Event::all(), Group::Minority, None).unwrap();
        assert_eq!(risk, 30.0 / 10_000.0);
    }

    #[test]
    fn equal_population_cells_mix_evenly() {
        let band2 = (50.0, 100.0);
        let census = CensusTable {
            records: vec![
                rec("national", 2020, BAND, PopGroup::Minority, 10_000.0),
                rec("national", 2020, BAND, PopGroup::Total, 20_000.0),
                rec("national", 2020, band2, PopGroup::Minority, 10_000.0),
                rec("national", 2020, band2, PopGroup::Total, 20_000.0),
            ],
        };
        let admissions = AdmissionCounts {
            records: vec![
                adm(None, 2020, BAND, Group::Minority, "Medical", 20.0),
                adm(None, 2020, band2, Group::Minority, "Medical", 40.0),
            ],
        };
        let risk =
            admission_risk(&census, &admissions, &Event::all(), Group::Minority, None).unwrap();
        assert!((risk - 0.003).abs() < 1e-15);
    }

    #[test]
    fn unequal_population_cells_match_hand_weighted_sum() {
        let b2 = (50.0, 64.0);
        let b3 = (65.0, 100.0);
        let census = CensusTable {
            records: vec![
                rec("national", 2020, BAND, PopGroup::Minority, 1_000.0),
                rec("national", 2020, BAND, PopGroup::Total, 5_000.0),
                rec("national", 2020, b2, PopGroup::Minority, 2_000.0),
                rec("national", 2020, b2, PopGroup::Total, 3_000.0),
                rec("national", 2020, b3, PopGroup::Minority, 500.0),
                rec("national", 2020, b3, PopGroup::Total, 2_000.0),
            ],
        };
        let admissions = AdmissionCounts {
            records: vec![
                adm(None, 2020, BAND, Group::Minority, "Medical", 10.0),
                adm(None, 2020, b2, Group::Minority, "Medical", 30.0),
                adm(None, 2020, b3, Group::Minority, "Medical", 5.0),
            ],
        };
        let risk =
            admission_risk(&census, &admissions, &Event::all(), Group::Minority, None).unwrap();
        // Hand calc: weights 5000/10000, 3000/10000, 2000/10000 over risks
        // 10/1000, 30/2000, 5/500.
        let expect = 0.5 * 0.01 + 0.3 * 0.015 + 0.2 * 0.01;
        assert!((risk - expect).abs() < 1e-15);
    }

    #[test]
    fn risk_ratio_hand_fixture() {
        let census = CensusTable {
            records: vec![
                rec("national", 2020, BAND, PopGroup::Minority, 1_000.0),
                rec("national", 2020, BAND, PopGroup::Total, 3_000.0),
            ],
        };
        let admissions = AdmissionCounts {
            records: vec![
                adm(None, 2020, BAND, Group::Minority, "Medical", 20.0),
                adm(None, 2020, BAND, Group::Majority, "Medical", 10.0),
            ],
        };
        let r = risk_ratio(&census, &admissions, &Event::all(), None, None).unwrap();
        assert_eq!(r.rr, (20.0 / 1000.0) / (10.0 / 2000.0));
        assert_eq!(r.rr, 4.0);
    }

    #[test]
    fn equal_per_capita_rates_give_unit_ratio() {
        let census = CensusTable {
            records: vec![
                rec("national", 2020, BAND, PopGroup::Minority, 2_000.0),
                rec("national", 2020, BAND, PopGroup::Total, 10_000.0),
            ],
        };
        let admissions = AdmissionCounts {
            records: vec![
                adm(None, 2020, BAND, Group::Minority, "Medical", 20.0),
                adm(None, 2020, BAND, Group::Majority, "Medical", 80.0),
            ],
        };
        let r = risk_ratio(&census, &admissions, &Event::all(), None, None).unwrap();
        assert_eq!(r.rr, 1.0);
    }

    #[test]
    fn bootstrap_ci_brackets_the_ratio() {
        let (census, mut admissions) = single_cell_fixture();
        admissions.records.push(adm(None, 2020, BAND, Group::Majority, "Medical", 60.0));
        let r = risk_ratio(
            &census,
            &admissions,
            &Event::all(),
            None,
            Some(&BootstrapPlan { replicates: 400, seed: 11 }),
        )
        .unwrap();
        let (lo, hi) = r.ci.unwrap();
        assert!(lo < r.rr && r.rr < hi);
        assert!(lo > 0.0);
    }

    #[test]
    fn rr_heatmap_uniform_is_all_ones() {
        let bands = [(18.0, 49.0), (50.0, 100.0)];
        let mut census_records = Vec::new();
        let mut adm_records = Vec::new();
        for &band in &bands {
            census_records.push(rec("national", 2020, band, PopGroup::Minority, 1_000.0));
            census_records.push(rec("national", 2020, band, PopGroup::Total, 11_000.0));
            for diag in ["Medical", "Surgery-Elective"] {
                adm_records.push(adm(None, 2020, band, Group::Minority, diag, 5.0));
                adm_records.push(adm(None, 2020, band, Group::Majority, diag, 50.0));
            }
        }
        let grid = CellGrid::new(
            bands.to_vec(),
            vec!["Medical".into(), "Surgery-Elective".into()],
        )
        .unwrap();
        let heat = rr_heatmap(
            &CensusTable { records: census_records },
            &AdmissionCounts { records: adm_records },
            &grid,
            None,
        )
        .unwrap();
        for row in &heat.values {
            for v in row {
                assert_eq!(v.unwrap(), 1.0);
            }
        }
    }

    #[test]
    fn rr_heatmap_detects_medical_excess() {
        let bands = [(18.0, 49.0), (50.0, 100.0)];
        let mut census_records = Vec::new();
        let mut adm_records = Vec::new();
        for &band in &bands {
            census_records.push(rec("national", 2020, band, PopGroup::Minority, 1_000.0));
            census_records.push(rec("national", 2020, band, PopGroup::Total, 11_000.0));
            adm_records.push(adm(None, 2020, band, Group::Minority, "Medical", 15.0));
            adm_records.push(adm(None, 2020, band, Group::Majority, "Medical", 50.0));
            adm_records.push(adm(None, 2020, band, Group::Minority, "Surgery-Elective", 5.0));
            adm_records.push(adm(None, 2020, band, Group::Majority, "Surgery-Elective", 50.0));
        }
        let grid = CellGrid::new(
            bands.to_vec(),
            vec!["Medical".into(), "Surgery-Elective".into()],
        )
        .unwrap();
        let heat = rr_heatmap(
            &CensusTable { records: census_records },
            &AdmissionCounts { records: adm_records },
            &grid,
            None,
        )
        .unwrap();
        for row in &heat.values {
            assert!(row[0].unwrap() > 1.0, "medical cells show excess");
            assert_eq!(row[1].unwrap(), 1.0, "elective cells are at parity");
        }
    }

    #[test]
    fn rr_heatmap_default_grid_has_twelve_entries() {
        let bins = vec![(18.0, 49.0), (50.0, 64.0), (65.0, 74.0), (75.0, 100.0)];
        let mut census_records = Vec::new();
        let mut adm_records = Vec::new();
        for &band in &bins {
            census_records.push(rec("national", 2020, band, PopGroup::Minority, 1_000.0));
            census_records.push(rec("national", 2020, band, PopGroup::Total, 11_000.0));
            for diag in CellGrid::default_admission_types() {
                adm_records.push(adm(None, 2020, band, Group::Minority, &diag, 5.0));
                adm_records.push(adm(None, 2020, band, Group::Majority, &diag, 50.0));
            }
        }
        let grid = CellGrid::new(bins, CellGrid::default_admission_types()).unwrap();
        let heat = rr_heatmap(
            &CensusTable { records: census_records },
            &AdmissionCounts { records: adm_records },
            &grid,
            None,
        )
        .unwrap();
        let entries: usize = heat.values.iter().map(|r| r.len()).sum();
        assert_eq!(entries, 12);
    }

    #[test]
    fn radar_categories_and_exclusions() {
        let mut census_records = Vec::new();
        let mut adm_records = Vec::new();
        // Area A: RR 4 (extreme); area B: RR 1 (none); area C: RR 1.10
        // exactly (moderate); area D: RR 1.0999 (none).
        // Powers of two keep the per-capita risks exact dyadics, so each
        // ratio is the correctly rounded quotient of the admission counts.
        for (area, min_adm, maj_adm) in [
            ("A", 40.0, 10.0),
            ("B", 10.0, 10.0),
            ("C", 11.0, 10.0),
            ("D", 10.999, 10.0),
        ] {
            census_records.push(rec(area, 2020, BAND, PopGroup::Minority, 1_024.0));
            census_records.push(rec(area, 2020, BAND, PopGroup::Total, 2_048.0));
            adm_records.push(adm(Some(area), 2020, BAND, Group::Minority, "Medical", min_adm));
            adm_records.push(adm(Some(area), 2020, BAND, Group::Majority, "Medical", maj_adm));
        }
        adm_records.push(adm(Some("GHOST"), 2020, BAND, Group::Minority, "Medical", 5.0));
        let radar = build_radar(
            &CensusTable { records: census_records },
            &AdmissionCounts { records: adm_records },
            None,
        )
        .unwrap();
        assert_eq!(radar.excluded_areas, vec!["GHOST".to_string()]);
        let by_area: std::collections::BTreeMap<_, _> =
            radar.rows.iter().map(|r| (r.area.as_str(), r)).collect();
        assert_eq!(by_area["A"].category, RiskCategory::Extreme);
        assert!((by_area["A"].excess_pct - 300.0).abs() < 1e-9);
        assert_eq!(by_area["B"].category, RiskCategory::None);
        assert_eq!(by_area["C"].category, RiskCategory::Moderate);
        assert_eq!(by_area["D"].category, RiskCategory::None);
    }

    proptest::proptest! {
        /// The category assignment is the pure step function of excess
        /// risk defined by the interval boundaries.
        #[test]
        fn category_is_step_function(excess in -0.5f64..5.0) {
            let expect = if excess < 0.10 {
                RiskCategory::None
            } else if excess < 0.50 {
                RiskCategory::Moderate
            } else if excess < 1.0 {
                RiskCategory::Substantial
            } else if excess < 2.0 {
                RiskCategory::Severe
            } else {
                RiskCategory::Extreme
            };
            proptest::prop_assert_eq!(RiskCategory::from_excess(excess), expect);
        }
    }

    #[test]
    fn category_boundaries_exact() {
        let cases = [
            (0.0999, RiskCategory::None),
            (0.10, RiskCategory::Moderate),
            (0.4999, RiskCategory::Moderate),
            (0.50, RiskCategory::Substantial),
            (0.9999, RiskCategory::Substantial),
            (1.0, RiskCategory::Severe),
            (1.9999, RiskCategory::Severe),
            (2.0, RiskCategory::Extreme),
        ];
        for (excess, expect) in cases {
            assert_eq!(RiskCategory::from_excess(excess), expect, "excess {excess}");
        }
    }

    #[test]
    fn national_risk_pools_area_risks_by_population() {
        // Two areas with different populations and rates; the multi-area
        // table equals the population-weighted combination of area risks.
        let mut census_records = Vec::new();
        let mut adm_records = Vec::new();
        for (area, pop_min, pop_tot, adm_min) in
            [("A", 1_000.0, 4_000.0, 20.0), ("B", 3_000.0, 6_000.0, 30.0)]
        {
            census_records.push(rec(area, 2020, BAND, PopGroup::Minority, pop_min));
            census_records.push(rec(area, 2020, BAND, PopGroup::Total, pop_tot));
            adm_records.push(adm(Some(area), 2020, BAND, Group::Minority, "Medical", adm_min));
        }
        let census = CensusTable { records: census_records };
        let admissions = AdmissionCounts { records: adm_records };
        let national =
            admission_risk(&census, &admissions, &Event::all(), Group::Minority, None).unwrap();
        // Pooled minority population: 4000; pooled admissions: 50.
        assert!((national - 50.0 / 4_000.0).abs() < 1e-15);
        // Population-weighted combination of per-area risks.
        let risk_a = admission_risk(
            &census.restrict_to_area("A"),
            &admissions.restrict_to_area("A"),
            &Event::all(),
            Group::Minority,
            None,
        )
        .unwrap();
        let risk_b = admission_risk(
            &census.restrict_to_area("B"),
            &admissions.restrict_to_area("B"),
            &Event::all(),
            Group::Minority,
            None,
        )
        .unwrap();
        let combined = (1_000.0 * risk_a + 3_000.0 * risk_b) / 4_000.0;
        assert!((national - combined).abs() < 1e-15);
    }

    #[test]
    fn scale_invariance_of_ratios_and_categories() {
        let (census, mut admissions) = single_cell_fixture();
        admissions.records.push(adm(None, 2020, BAND, Group::Majority, "Medical", 45.0));
        let base = risk_ratio(&census, &admissions, &Event::all(), None, None).unwrap();
        let scaled_census = CensusTable {
            records: census
                .records
                .iter()
                .map(|r| CensusRecord { count: r.count * 7.0, ..r.clone() })
                .collect(),
        };
        let scaled_adm = AdmissionCounts {
            records: admissions
                .records
                .iter()
                .map(|r| AdmissionRecord { n: r.n * 7.0, ..r.clone() })
                .collect(),
        };
        let scaled = risk_ratio(&scaled_census, &scaled_adm, &Event::all(), None, None).unwrap();
        assert!((base.rr - scaled.rr).abs() < 1e-12);
        assert_eq!(
            RiskCategory::from_excess(base.rr - 1.0),
            RiskCategory::from_excess(scaled.rr - 1.0)
        );
    }

    #[test]
    fn zero_population_cell_is_an_error_naming_the_cell() {
        let census = CensusTable {
            records: vec![
                rec("national", 2020, BAND, PopGroup::Minority, 0.0),
                rec("national", 2020, BAND, PopGroup::Total, 100.0),
            ],
        };
        let admissions = AdmissionCounts {
            records: vec![adm(None, 2020, BAND, Group::Minority, "Medical", 1.0)],
        };
        let err = admission_risk(&census, &admissions, &Event::all(), Group::Minority, None)
            .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("18") && msg.contains("2020"), "cell named: {msg}");
    }
}
