//! Regenerates the committed fixture files under `fixtures/`: the twenty
//! randomized discrete SCM specs with their exact oracle effects, the demo
//! spec, and the demo census/admissions tables.
//!
//! Run from the workspace root:
//!
//! ```bash
//! cargo run -p disparity-core --example gen_fixtures
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use disparity_core::heterogeneity::CellGrid;
use disparity_core::popn::{
    AdmissionCounts, AdmissionRecord, CensusRecord, CensusTable, PopGroup, Provenance,
};
use disparity_core::scm::families;
use disparity_core::Group;

fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn main() {
    let root = fixtures_dir();
    let scm_dir = root.join("scm");
    fs::create_dir_all(&scm_dir).expect("create fixtures dir");

    let grid = CellGrid::new(
        CellGrid::default_age_bins(),
        CellGrid::default_admission_types(),
    )
    .unwrap();

    for (i, seed) in (100u64..120).enumerate() {
        let spec = families::random_overlapped(seed);
        let oracle = spec.oracle_effects(Some(&grid)).unwrap();
        spec.save(&scm_dir.join(format!("fixture_{i:02}.json"))).unwrap();
        fs::write(
            scm_dir.join(format!("fixture_{i:02}.oracle.json")),
            serde_json::to_string_pretty(&oracle).unwrap(),
        )
        .unwrap();
    }

    // Demo spec used by the README walkthrough and the CLI tests.
    let demo = families::random_overlapped(100);
    demo.save(&root.join("demo_scm.json")).unwrap();
    fs::write(
        root.join("demo_oracle.json"),
        serde_json::to_string_pretty(&demo.oracle_effects(Some(&grid)).unwrap()).unwrap(),
    )
    .unwrap();

    // Small census + admissions pair for the risk-ratio and radar demos.
    let bands = [(18.0, 49.0), (50.0, 64.0), (65.0, 74.0), (75.0, 100.0)];
    let mut census = Vec::new();
    let mut admissions = Vec::new();
    let areas: [(&str, f64, f64); 3] = [
        ("area-north", 12_000.0, 150_000.0),
        ("area-middle", 4_000.0, 220_000.0),
        ("area-south", 9_000.0, 90_000.0),
    ];
    // Deterministic hand-shaped counts: minority admission rates exceed
    // majority rates for medical admissions, widen with age, and differ by
    // area so the radar spans several categories.
    for (ai, (area, minority_pop, total_pop)) in areas.iter().enumerate() {
        for (bi, &(lo, hi)) in bands.iter().enumerate() {
            let share = 1.0 / (bi + 2) as f64;
            for year in [2019, 2022] {
                let growth = 1.0 + 0.02 * (year - 2019) as f64;
                census.push(CensusRecord {
                    area: (*area).into(),
                    year,
                    age_lo: lo,
                    age_hi: hi,
                    group: PopGroup::Minority,
                    count: (minority_pop * share * growth).round(),
                    provenance: Provenance::Anchor,
                });
                census.push(CensusRecord {
                    area: (*area).into(),
                    year,
                    age_lo: lo,
                    age_hi: hi,
                    group: PopGroup::Total,
                    count: (total_pop * share * growth).round(),
                    provenance: Provenance::Anchor,
                });
                for (di, diag) in
                    ["Medical", "Surgery-Emergency", "Surgery-Elective"].iter().enumerate()
                {
                    let base = 40.0 + 10.0 * bi as f64 + 5.0 * di as f64;
                    let minority_factor = match (ai, di) {
                        (0, 0) => 4.0,
                        (1, 0) => 1.05,
                        (2, 0) => 2.0,
                        (_, 1) => 1.6,
                        _ => 0.9,
                    };
                    let maj = (base * 10.0).round();
                    let min_rate_match =
                        maj / (total_pop * share - minority_pop * share) * minority_pop * share;
                    admissions.push(AdmissionRecord {
                        area: Some((*area).into()),
                        year,
                        age_lo: lo,
                        age_hi: hi,
                        group: Group::Minority,
                        diagnosis: (*diag).into(),
                        n: (min_rate_match * minority_factor).round(),
                    });
                    admissions.push(AdmissionRecord {
                        area: Some((*area).into()),
                        year,
                        age_lo: lo,
                        age_hi: hi,
                        group: Group::Majority,
                        diagnosis: (*diag).into(),
                        n: maj,
                    });
                }
            }
        }
    }
    let census = CensusTable { records: census };
    census.validate().unwrap();
    let admissions = AdmissionCounts { records: admissions };
    write_census_csv(&census, &root.join("demo_census.csv"));
    admissions.write_csv(&root.join("demo_admissions.csv")).unwrap();

    println!("fixtures written to {}", root.display());
}

fn write_census_csv(census: &CensusTable, path: &Path) {
    let mut wtr = csv::Writer::from_path(path).unwrap();
    wtr.write_record(["area", "year", "age_lo", "age_hi", "group", "count"]).unwrap();
    for r in &census.records {
        wtr.write_record([
            r.area.clone(),
            r.year.to_string(),
            format!("{}", r.age_lo),
            format!("{}", r.age_hi),
            r.group.to_string(),
            format!("{}", r.count),
        ])
        .unwrap();
    }
    wtr.flush().unwrap();
}
