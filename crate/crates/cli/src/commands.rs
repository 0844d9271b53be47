//! Subcommand implementations: each loads its inputs, delegates to the
//! core modules, and writes one machine-readable file plus one aligned
//! text table per report, along with the run manifest.

use std::path::{Path, PathBuf};

use serde::Serialize;

use disparity_core::crossfit::{fit_crossfit, NuisanceFits};
use disparity_core::data::{load_dataset, summarize_cohort, ColumnData, RoleSchema, SfmDataset};
use disparity_core::estimate::{decompose_tv, decompose_tv_reverse, TvDecomposition};
use disparity_core::heterogeneity::{
    conditional_direct_effect, conditional_indirect_effect, mechanism_profiles, BootstrapPlan,
    CellGrid, CellOptions,
};
use disparity_core::interaction::test_interactions;
use disparity_core::popn::{
    build_radar, interpolate_population, risk_ratio, rr_heatmap, AdmissionCounts, CensusTable,
    Event,
};
use disparity_core::scm::ScmSpec;
use disparity_core::sensitivity::{missingness_analysis, overlap_analysis, OverlapOptions};
use disparity_core::{Error, Result};

use crate::config::{FileConfig, Manifest, RunConfig};
use crate::report;

fn ensure_out_dir(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    Ok(())
}

fn write_text(path: PathBuf, text: &str) -> Result<()> {
    std::fs::write(path, text)?;
    Ok(())
}

fn write_json<T: Serialize>(path: PathBuf, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::internal(format!("serialize report: {e}")))?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn schema_from(file: &FileConfig) -> Result<RoleSchema> {
    let schema = file
        .schema
        .clone()
        .ok_or_else(|| Error::schema("config file needs a [schema] section"))?;
    schema.validate()?;
    Ok(schema)
}

fn load_data(data: &Path, file: &FileConfig, config: &RunConfig) -> Result<SfmDataset> {
    let schema = schema_from(file)?;
    load_dataset(data, &schema, &config.load_options())
}

fn fit(ds: &SfmDataset, config: &RunConfig) -> Result<NuisanceFits> {
    fit_crossfit(ds, &config.nuisance())
}

/// Admission types observed in the dataset's admission column, in first
/// appearance order.
fn observed_admission_types(ds: &SfmDataset) -> Result<Vec<String>> {
    let name = ds
        .schema
        .admission_type
        .as_deref()
        .ok_or_else(|| Error::schema("schema has no admission_type column"))?;
    let col = ds.column(name).expect("schema-validated column");
    match &col.data {
        ColumnData::Categorical { levels, .. } => Ok(levels.clone()),
        ColumnData::Numeric(_) => {
            Err(Error::validation("admission-type column must be categorical"))
        }
    }
}

#[derive(Serialize)]
struct DecompositionReport {
    forward: TvDecomposition,
    reverse: TvDecomposition,
}

pub fn cmd_decompose(
    data: &Path,
    file: &FileConfig,
    config: &RunConfig,
    out: &Path,
) -> Result<()> {
    ensure_out_dir(out)?;
    Manifest::new("decompose", config).with_input("data", data).write(out)?;
    let ds = load_data(data, file, config)?;
    let fits = fit(&ds, config)?;
    let forward = decompose_tv(&fits)?;
    let reverse = decompose_tv_reverse(&fits)?;
    let mut text = report::render_decomposition(&forward);
    text.push('\n');
    text.push_str(&report::render_decomposition(&reverse));
    write_text(out.join("decomposition.txt"), &text)?;
    write_json(out.join("decomposition.json"), &DecompositionReport { forward, reverse })?;
    Ok(())
}

pub fn cmd_interactions(
    data: &Path,
    file: &FileConfig,
    config: &RunConfig,
    out: &Path,
) -> Result<()> {
    ensure_out_dir(out)?;
    Manifest::new("interactions", config).with_input("data", data).write(out)?;
    let ds = load_data(data, file, config)?;
    let fits = fit(&ds, config)?;
    let report_data = test_interactions(&fits, config.alpha)?;
    write_text(out.join("interactions.txt"), &report::render_interactions(&report_data))?;
    write_json(out.join("interactions.json"), &report_data)?;
    Ok(())
}

pub fn cmd_heterogeneity(
    data: &Path,
    file: &FileConfig,
    config: &RunConfig,
    out: &Path,
) -> Result<()> {
    ensure_out_dir(out)?;
    Manifest::new("heterogeneity", config).with_input("data", data).write(out)?;
    let ds = load_data(data, file, config)?;
    let fits = fit(&ds, config)?;
    let grid = CellGrid::new(config.bins.clone(), observed_admission_types(&ds)?)?;
    let opts = CellOptions {
        bootstrap: BootstrapPlan { replicates: config.bootstrap, seed: config.seed },
        cell_floor: config.cell_floor,
    };
    let heat = conditional_direct_effect(&ds, &fits, &grid, &opts)?;
    write_text(out.join("heatmap_direct.txt"), &report::render_heatmap(&heat))?;
    write_text(out.join("heatmap_direct.csv"), &report::heatmap_csv(&heat))?;

    let ie = conditional_indirect_effect(&ds, &fits, &config.bins, &opts)?;
    let ie_rows: Vec<Vec<String>> = ie
        .bins
        .iter()
        .enumerate()
        .map(|(i, &(lo, hi))| {
            let fmt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
            vec![
                format!("{lo}-{hi}"),
                fmt(ie.estimates[i]),
                fmt(ie.ci_lo[i]),
                fmt(ie.ci_hi[i]),
                ie.n[i].to_string(),
            ]
        })
        .collect();
    let header = ["age_bin", "estimate", "ci_lo", "ci_hi", "n"];
    write_text(out.join("indirect_bins.txt"), &report::table(&header, &ie_rows))?;
    let mut csv_text = header.join(",");
    csv_text.push('\n');
    for row in &ie_rows {
        csv_text.push_str(&row.join(","));
        csv_text.push('\n');
    }
    write_text(out.join("indirect_bins.csv"), &csv_text)?;

    // Urgent = every non-elective admission type.
    let urgent: Vec<String> = grid
        .admission_types
        .iter()
        .filter(|t| !t.to_lowercase().contains("elective"))
        .cloned()
        .collect();
    let profiles = mechanism_profiles(&ds, &config.bins, &urgent)?;
    write_json(out.join("mechanism.json"), &profiles)?;
    let prof_rows: Vec<Vec<String>> = profiles
        .urgent_share
        .iter()
        .map(|c| ("urgent_share", c))
        .chain(profiles.mortality.iter().map(|c| ("outcome_rate", c)))
        .map(|(kind, c)| {
            let fmt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_default();
            vec![
                kind.to_string(),
                format!("{}-{}", c.bin.0, c.bin.1),
                c.stratum.clone(),
                fmt(c.proportion),
                fmt(c.ci_lo),
                fmt(c.ci_hi),
                c.n.to_string(),
            ]
        })
        .collect();
    write_text(
        out.join("mechanism.txt"),
        &report::table(&["profile", "age_bin", "stratum", "value", "ci_lo", "ci_hi", "n"], &prof_rows),
    )?;
    Ok(())
}

/// Census interpolated to the years observed in the admissions.
fn census_for(census_path: &Path, admissions: &AdmissionCounts) -> Result<CensusTable> {
    let census = CensusTable::load_csv(census_path)?;
    let mut years: Vec<i32> = admissions.records.iter().map(|r| r.year).collect();
    years.sort_unstable();
    years.dedup();
    if years.is_empty() {
        return Err(Error::degenerate("admissions are empty"));
    }
    interpolate_population(&census, &years)
}

/// Admissions from a pre-aggregated file, or counted from the dataset.
#[allow(clippy::too_many_arguments)]
fn admissions_from(
    admissions_path: Option<&Path>,
    data: Option<&Path>,
    file: &FileConfig,
    config: &RunConfig,
    bands: &[(f64, f64)],
    by_area: bool,
) -> Result<AdmissionCounts> {
    match (admissions_path, data) {
        (Some(path), _) => AdmissionCounts::load_csv(path),
        (None, Some(data)) => {
            let ds = load_data(data, file, config)?;
            AdmissionCounts::from_dataset(&ds, bands, by_area)
        }
        (None, None) => Err(Error::schema(
            "need --admissions or --data/--config to obtain admission counts",
        )),
    }
}

/// Default age bins for population risk ratios (census-style banding).
fn risk_bins(config: &RunConfig) -> Vec<(f64, f64)> {
    if config.bins_explicit {
        config.bins.clone()
    } else {
        vec![(18.0, 49.0), (50.0, 64.0), (65.0, 74.0), (75.0, 100.0)]
    }
}

#[derive(Serialize)]
struct RiskRatioReport {
    overall: Vec<(String, f64, Option<(f64, f64)>)>,
    heatmap: disparity_core::heterogeneity::Heatmap,
}

pub fn cmd_riskratio(
    census_path: &Path,
    admissions_path: Option<&Path>,
    data: Option<&Path>,
    file: &FileConfig,
    config: &RunConfig,
    out: &Path,
) -> Result<()> {
    ensure_out_dir(out)?;
    let mut manifest = Manifest::new("riskratio", config).with_input("census", census_path);
    if let Some(p) = admissions_path {
        manifest = manifest.with_input("admissions", p);
    }
    if let Some(p) = data {
        manifest = manifest.with_input("data", p);
    }
    manifest.write(out)?;

    let bins = risk_bins(config);
    let admissions = admissions_from(admissions_path, data, file, config, &bins, false)?;
    let census = census_for(census_path, &admissions)?;

    let mut diagnoses: Vec<String> = Vec::new();
    for r in &admissions.records {
        if !diagnoses.contains(&r.diagnosis) {
            diagnoses.push(r.diagnosis.clone());
        }
    }
    let plan = BootstrapPlan { replicates: config.bootstrap, seed: config.seed };
    let mut overall = Vec::new();
    for diag in &diagnoses {
        let rr = risk_ratio(
            &census,
            &admissions,
            &Event::all(),
            Some(std::slice::from_ref(diag)),
            Some(&plan),
        )?;
        overall.push((diag.clone(), rr.rr, rr.ci));
    }
    let grid = CellGrid::new(bins, diagnoses)?;
    let heatmap = rr_heatmap(&census, &admissions, &grid, Some(&plan))?;

    let mut text = String::from("overall risk ratios (minority vs majority)\n");
    let rows: Vec<Vec<String>> = overall
        .iter()
        .map(|(diag, rr, ci)| {
            vec![
                diag.clone(),
                format!("{rr:.4}"),
                ci.map(|(lo, hi)| format!("[{lo:.4}, {hi:.4}]")).unwrap_or_default(),
                format!("{:+.1}% vs majority", (rr - 1.0) * 100.0),
            ]
        })
        .collect();
    text.push_str(&report::table(&["diagnosis", "rr", "ci95", "excess"], &rows));
    text.push('\n');
    text.push_str(&report::render_heatmap(&heatmap));
    write_text(out.join("riskratio.txt"), &text)?;
    write_text(out.join("riskratio.csv"), &report::heatmap_csv(&heatmap))?;
    write_json(out.join("riskratio.json"), &RiskRatioReport { overall, heatmap })?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_radar(
    census_path: &Path,
    admissions_path: Option<&Path>,
    data: Option<&Path>,
    diagnoses: Option<&[String]>,
    file: &FileConfig,
    config: &RunConfig,
    out: &Path,
) -> Result<()> {
    ensure_out_dir(out)?;
    let mut manifest = Manifest::new("radar", config).with_input("census", census_path);
    if let Some(p) = admissions_path {
        manifest = manifest.with_input("admissions", p);
    }
    if let Some(p) = data {
        manifest = manifest.with_input("data", p);
    }
    manifest.write(out)?;

    let bins = risk_bins(config);
    let admissions = admissions_from(admissions_path, data, file, config, &bins, true)?;
    let census = census_for(census_path, &admissions)?;
    let radar = build_radar(&census, &admissions, diagnoses)?;
    radar.write_csv(&out.join("radar.csv"))?;
    let rows: Vec<Vec<String>> = radar
        .rows
        .iter()
        .map(|r| {
            vec![
                r.area.clone(),
                format!("{:.4}", r.rr),
                format!("{:+.1}%", r.excess_pct),
                r.category.to_string(),
            ]
        })
        .collect();
    let mut text = report::table(&["area", "rr", "excess", "category"], &rows);
    if !radar.excluded_areas.is_empty() {
        text.push_str(&format!(
            "excluded (no census coverage): {}\n",
            radar.excluded_areas.join(", ")
        ));
    }
    write_text(out.join("radar.txt"), &text)?;
    write_json(out.join("radar.json"), &radar)?;
    Ok(())
}

pub fn cmd_sensitivity_overlap(
    data: &Path,
    file: &FileConfig,
    config: &RunConfig,
    out: &Path,
) -> Result<()> {
    ensure_out_dir(out)?;
    Manifest::new("sensitivity-overlap", config).with_input("data", data).write(out)?;
    let ds = load_data(data, file, config)?;
    let fits = fit(&ds, config)?;
    let opts = OverlapOptions {
        quantiles: config.quantiles.clone(),
        alpha: config.alpha,
        nuisance: config.nuisance(),
    };
    let report_data = overlap_analysis(&ds, &fits, &opts)?;
    let rows: Vec<Vec<String>> = report_data
        .rows
        .iter()
        .map(|r| {
            vec![
                format!("{:.3}", r.q),
                format!("{:.6}", r.threshold),
                r.rows_removed.to_string(),
                format!("{:.6}", r.bound),
                if r.violation { "VIOLATION".into() } else { "ok".into() },
                report::fmt_est(r.decomposition.tv.value),
                report::fmt_est(r.decomposition.direct.value),
                report::fmt_est(r.decomposition.indirect_negated.value),
                report::fmt_est(r.decomposition.confounded_negated.value),
            ]
        })
        .collect();
    let mut text = report::table(
        &["q", "threshold", "removed", "bound", "overlap", "tv", "direct", "indirect", "confounded"],
        &rows,
    );
    text.push_str(&format!(
        "bound method = {} at confidence {:.2}\n",
        report_data.method, report_data.confidence
    ));
    write_text(out.join("overlap.txt"), &text)?;
    write_json(out.join("overlap.json"), &report_data)?;
    Ok(())
}

pub fn cmd_sensitivity_missing(
    data: &Path,
    file: &FileConfig,
    config: &RunConfig,
    out: &Path,
) -> Result<()> {
    ensure_out_dir(out)?;
    Manifest::new("sensitivity-missing", config).with_input("data", data).write(out)?;
    let ds = load_data(data, file, config)?;
    let report_data = missingness_analysis(&ds, &config.nuisance(), config.draws)?;
    let mut rows: Vec<Vec<String>> = report_data
        .draws
        .iter()
        .enumerate()
        .map(|(i, d)| {
            vec![
                format!("draw {}", i + 1),
                report::fmt_est(d.tv.value),
                report::fmt_est(d.direct.value),
                report::fmt_est(d.indirect_negated.value),
                report::fmt_est(d.confounded_negated.value),
            ]
        })
        .collect();
    rows.push(vec![
        "pooled".into(),
        report::fmt_est(report_data.pooled.tv.estimate),
        report::fmt_est(report_data.pooled.direct.estimate),
        report::fmt_est(report_data.pooled.indirect_negated.estimate),
        report::fmt_est(report_data.pooled.confounded_negated.estimate),
    ]);
    rows.push(vec![
        "pooled se".into(),
        format!("{:.6}", report_data.pooled.tv.se),
        format!("{:.6}", report_data.pooled.direct.se),
        format!("{:.6}", report_data.pooled.indirect_negated.se),
        format!("{:.6}", report_data.pooled.confounded_negated.se),
    ]);
    rows.push(vec![
        "complete case".into(),
        report::fmt_est(report_data.complete_case.tv.value),
        report::fmt_est(report_data.complete_case.direct.value),
        report::fmt_est(report_data.complete_case.indirect_negated.value),
        report::fmt_est(report_data.complete_case.confounded_negated.value),
    ]);
    let mut text =
        report::table(&["run", "tv", "direct", "indirect", "confounded"], &rows);
    text.push_str(&format!(
        "attribute-missing rows: {}\n",
        report_data.n_attribute_missing
    ));
    write_text(out.join("missingness.txt"), &text)?;
    write_json(out.join("missingness.json"), &report_data)?;
    Ok(())
}

#[derive(Serialize)]
struct SchemaDoc<'a> {
    schema: &'a RoleSchema,
}

pub fn cmd_simulate(
    scm_path: &Path,
    n: usize,
    config: &RunConfig,
    out: &Path,
) -> Result<()> {
    ensure_out_dir(out)?;
    Manifest::new("simulate", config).with_input("scm", scm_path).write(out)?;
    let spec = ScmSpec::load(scm_path)?;
    let ds = spec.sample_dataset(n, config.seed)?;
    ds.write_csv(&out.join("dataset.csv"))?;
    let schema = spec.role_schema();
    let schema_text = toml::to_string(&SchemaDoc { schema: &schema })
        .map_err(|e| Error::internal(format!("schema serialize: {e}")))?;
    write_text(out.join("schema.toml"), &schema_text)?;

    // Oracle effects; cell-level values when the spec carries age and
    // admission components matching the configured grid.
    let grid = observed_grid(&spec, config);
    let oracle = spec.oracle_effects(grid.as_ref())?;
    write_json(out.join("oracle.json"), &oracle)?;
    Ok(())
}

fn observed_grid(spec: &ScmSpec, config: &RunConfig) -> Option<CellGrid> {
    let types: Vec<String> = spec
        .w
        .iter()
        .find(|c| c.special == Some(disparity_core::scm::SpecialRole::AdmissionType))?
        .levels
        .iter()
        .map(|l| l.label.clone())
        .collect();
    let has_age = spec
        .z
        .iter()
        .any(|c| c.special == Some(disparity_core::scm::SpecialRole::Age));
    if !has_age {
        return None;
    }
    CellGrid::new(config.bins.clone(), types).ok()
}

pub fn cmd_summary(
    data: &Path,
    file: &FileConfig,
    config: &RunConfig,
    vars: Option<Vec<String>>,
    out: &Path,
) -> Result<()> {
    ensure_out_dir(out)?;
    Manifest::new("summary", config).with_input("data", data).write(out)?;
    let ds = load_data(data, file, config)?;
    let variables = vars.unwrap_or_else(|| {
        let mut v: Vec<String> = ds
            .schema
            .confounders
            .iter()
            .chain(ds.schema.mediators.iter())
            .cloned()
            .collect();
        v.push(ds.schema.outcome.clone());
        v
    });
    let summary = summarize_cohort(&ds, &variables)?;
    let mut rows: Vec<Vec<String>> = Vec::new();
    for var in &summary.variables {
        match &var.detail {
            disparity_core::data::VariableDetail::Numeric { per_group } => {
                rows.push(vec![
                    var.name.clone(),
                    "median (IQR)".into(),
                    format!(
                        "{:.2} ({:.2}-{:.2})",
                        per_group[0].median, per_group[0].q25, per_group[0].q75
                    ),
                    format!(
                        "{:.2} ({:.2}-{:.2})",
                        per_group[1].median, per_group[1].q25, per_group[1].q75
                    ),
                    var.p_value.map(|p| format!("{p:.4}")).unwrap_or_default(),
                ]);
            }
            disparity_core::data::VariableDetail::Categorical { levels, pct, .. } => {
                for (li, level) in levels.iter().enumerate() {
                    rows.push(vec![
                        format!("{} = {level}", var.name),
                        "%".into(),
                        format!("{:.1}", pct[0][li]),
                        format!("{:.1}", pct[1][li]),
                        if li == 0 {
                            var.p_value.map(|p| format!("{p:.4}")).unwrap_or_default()
                        } else {
                            String::new()
                        },
                    ]);
                }
            }
        }
    }
    let mut text = format!(
        "cohort: minority n={} ({:.1}%), majority n={} ({:.1}%), attribute-missing {}\n",
        summary.group_n[0],
        summary.group_pct[0],
        summary.group_n[1],
        summary.group_pct[1],
        summary.attribute_missing
    );
    text.push_str(&report::table(
        &["variable", "reported", "minority", "majority", "p"],
        &rows,
    ));
    write_text(out.join("summary.txt"), &text)?;
    write_json(out.join("summary.json"), &summary)?;
    Ok(())
}
