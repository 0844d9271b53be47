//! Report rendering: aligned text tables next to the machine-readable
//! files.

use disparity_core::estimate::TvDecomposition;
use disparity_core::heterogeneity::Heatmap;
use disparity_core::interaction::InteractionReport;

/// Pad columns to their widest cell; numeric-looking cells could be
/// right-aligned but a single left-aligned convention keeps diffs simple.
pub fn table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for row in rows {
        for (i, cell) in row.iter().enumerate() {
            widths[i] = widths[i].max(cell.len());
        }
    }
    let mut out = String::new();
    let line = |cells: Vec<String>, widths: &[usize]| -> String {
        cells
            .iter()
            .zip(widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    out.push_str(&line(headers.iter().map(|h| h.to_string()).collect(), &widths));
    out.push('\n');
    out.push_str(&line(widths.iter().map(|w| "-".repeat(*w)).collect(), &widths));
    out.push('\n');
    for row in rows {
        out.push_str(&line(row.clone(), &widths));
        out.push('\n');
    }
    out
}

pub fn fmt_est(v: f64) -> String {
    format!("{v:+.6}")
}

pub fn fmt_pct(v: f64) -> String {
    format!("{:+.2}%", 100.0 * v)
}

/// Human-readable decomposition table plus the one-line percentage
/// identity, e.g.
/// `tv = direct + indirect + confounded: -0.40% = 0.50% + (-2.70%) + 1.80%`.
pub fn render_decomposition(decomp: &TvDecomposition) -> String {
    let rows: Vec<Vec<String>> = [
        ("tv", &decomp.tv),
        ("direct", &decomp.direct),
        ("indirect", &decomp.indirect_negated),
        ("confounded", &decomp.confounded_negated),
    ]
    .iter()
    .map(|(name, est)| {
        vec![
            name.to_string(),
            fmt_est(est.value),
            format!("{:.6}", est.se),
            format!("[{:+.6}, {:+.6}]", est.ci95.0, est.ci95.1),
            fmt_pct(est.value),
        ]
    })
    .collect();
    let mut out = format!("direction: {:?}\n", decomp.direction).to_lowercase();
    out.push_str(&table(&["component", "estimate", "se", "ci95", "pct"], &rows));
    out.push_str(&format!(
        "tv = direct + indirect + confounded: {} = {} + ({}) + {}\n",
        fmt_pct(decomp.tv.value),
        fmt_pct(decomp.direct.value),
        fmt_pct(decomp.indirect_negated.value),
        fmt_pct(decomp.confounded_negated.value),
    ));
    out.push_str(&format!(
        "n = {} (minority {}, majority {}), folds = {}, truncated arms = {}\n",
        decomp.meta.n_used,
        decomp.meta.n_minority,
        decomp.meta.n_majority,
        decomp.meta.folds_used,
        decomp.meta.truncation_events,
    ));
    out
}

pub fn render_interactions(report: &InteractionReport) -> String {
    let rows: Vec<Vec<String>> = report
        .tests
        .iter()
        .map(|t| {
            let stars = if t.reject { "*" } else { "" };
            vec![
                t.kind.to_string(),
                fmt_est(t.statistic),
                format!("{:.6}", t.se),
                format!("{:+.3}", t.z),
                format!("{:.4}{stars}", t.p_value),
                if t.degenerate { "degenerate".into() } else { String::new() },
            ]
        })
        .collect();
    let mut out = table(&["test", "statistic", "se", "z", "p", "note"], &rows);
    out.push_str(&format!("alpha = {}; * marks p < alpha\n", report.alpha));
    out
}

/// Heatmap as tabular records: one row per (age bin, admission type).
pub fn heatmap_rows(heat: &Heatmap) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for (bi, &(lo, hi)) in heat.grid.age_bins.iter().enumerate() {
        for (ti, ty) in heat.grid.admission_types.iter().enumerate() {
            let fmt_opt =
                |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_else(|| "".into());
            rows.push(vec![
                format!("{lo}-{hi}"),
                ty.clone(),
                fmt_opt(heat.values[bi][ti]),
                fmt_opt(heat.ci_lo[bi][ti]),
                fmt_opt(heat.ci_hi[bi][ti]),
                heat.n[bi][ti].to_string(),
            ]);
        }
    }
    rows
}

pub const HEATMAP_HEADER: [&str; 6] = ["age_bin", "admission_type", "estimate", "ci_lo", "ci_hi", "n"];

pub fn render_heatmap(heat: &Heatmap) -> String {
    let mut out = table(&HEATMAP_HEADER, &heatmap_rows(heat));
    out.push_str(&format!("method = {}\n", heat.method));
    out
}

pub fn heatmap_csv(heat: &Heatmap) -> String {
    let mut out = HEATMAP_HEADER.join(",");
    out.push('\n');
    for row in heatmap_rows(heat) {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}
