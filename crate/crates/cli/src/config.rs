//! Run configuration: flag / environment / config-file resolution and the
//! manifest echoed into every output directory.
//!
//! Precedence is command line (or `DISPARITY_*` environment variables,
//! handled by the argument parser) over config file over built-in
//! defaults. Config keys mirror the flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use disparity_core::crossfit::NuisanceConfig;
use disparity_core::data::{LoadOptions, OutcomeVar, RoleSchema};
use disparity_core::learner::{LearnerKind, LearnerSpec};
use disparity_core::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// `[run]` section of the config file; every key can be overridden by the
/// matching flag.
#[derive(Debug, Clone, Default, Deserialize)]
pub struct RunSection {
    pub seed: Option<u64>,
    pub folds: Option<usize>,
    pub clip: Option<f64>,
    pub alpha: Option<f64>,
    pub bootstrap: Option<usize>,
    pub draws: Option<usize>,
    pub quantiles: Option<Vec<f64>>,
    pub bins: Option<Vec<String>>,
    pub cell_floor: Option<usize>,
    pub outcome: Option<String>,
    pub delimiter: Option<char>,
}

/// `[learner]` section of the config file.
#[derive(Debug, Clone, Default, Deserialize)]
pub struct LearnerSection {
    pub kind: Option<String>,
    pub rounds: Option<usize>,
    pub depth: Option<usize>,
    pub learning_rate: Option<f64>,
    pub min_leaf: Option<usize>,
    pub l2: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
pub struct FileConfig {
    pub schema: Option<RoleSchema>,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub learner: LearnerSection,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<FileConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::schema(format!("cannot read config file {}: {e}", path.display()))
        })?;
        toml::from_str(&text).map_err(|e| Error::schema(format!("config parse: {e}")))
    }
}

/// Flag values as parsed (None = not given).
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub folds: Option<usize>,
    pub clip: Option<f64>,
    pub alpha: Option<f64>,
    pub bootstrap: Option<usize>,
    pub draws: Option<usize>,
    pub quantiles: Option<Vec<f64>>,
    pub bins: Option<Vec<String>>,
    pub cell_floor: Option<usize>,
    pub outcome: Option<String>,
    pub learner: Option<String>,
    pub delimiter: Option<char>,
}

/// Fully resolved settings; serialized verbatim into the manifest.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub seed: u64,
    pub folds: usize,
    pub clip: f64,
    pub alpha: f64,
    pub bootstrap: usize,
    pub draws: usize,
    pub quantiles: Vec<f64>,
    pub bins: Vec<(f64, f64)>,
    /// Bins came from a flag or config file (population-risk commands use
    /// census-style default bins otherwise).
    pub bins_explicit: bool,
    pub cell_floor: usize,
    pub outcome: OutcomeVar,
    pub learner: LearnerSpec,
    pub delimiter: char,
}

fn parse_bin(text: &str) -> Result<(f64, f64)> {
    let (lo, hi) = text
        .split_once('-')
        .ok_or_else(|| Error::schema(format!("age bin '{text}' is not of the form LO-HI")))?;
    let lo: f64 = lo.trim().parse().map_err(|_| Error::schema(format!("bad bin bound '{lo}'")))?;
    let hi: f64 = hi.trim().parse().map_err(|_| Error::schema(format!("bad bin bound '{hi}'")))?;
    Ok((lo, hi))
}

fn parse_outcome(text: &str) -> Result<OutcomeVar> {
    match text {
        "y" | "outcome" | "primary" => Ok(OutcomeVar::Primary),
        "r" | "readmission" => Ok(OutcomeVar::Readmission),
        other => Err(Error::schema(format!(
            "outcome must be 'y' or 'readmission', got '{other}'"
        ))),
    }
}

fn parse_learner_kind(text: &str) -> Result<LearnerKind> {
    match text {
        "gbt" | "trees" | "gradient-boosted-trees" => Ok(LearnerKind::GradientBoostedTrees),
        "linear" | "logistic-linear" => Ok(LearnerKind::LogisticLinear),
        other => Err(Error::schema(format!(
            "learner must be 'gbt' or 'linear', got '{other}'"
        ))),
    }
}

impl RunConfig {
    /// Merge flags over the config file over defaults.
    pub fn resolve(file: &FileConfig, flags: &Overrides) -> Result<RunConfig> {
        let defaults = LearnerSpec::default();
        let kind = match flags.learner.as_deref().or(file.learner.kind.as_deref()) {
            Some(text) => parse_learner_kind(text)?,
            None => defaults.kind,
        };
        let learner = LearnerSpec {
            kind,
            rounds: file.learner.rounds.unwrap_or(defaults.rounds),
            max_depth: file.learner.depth.unwrap_or(defaults.max_depth),
            learning_rate: file.learner.learning_rate.unwrap_or(defaults.learning_rate),
            min_leaf: file.learner.min_leaf.unwrap_or(defaults.min_leaf),
            l2: file.learner.l2.unwrap_or(defaults.l2),
        };
        learner.validate()?;
        let explicit_bins = flags.bins.clone().or_else(|| file.run.bins.clone());
        let bins_explicit = explicit_bins.is_some();
        let bins_text = explicit_bins.unwrap_or_else(|| {
            vec!["18-54".into(), "55-64".into(), "65-74".into(), "75-100".into()]
        });
        let bins = bins_text.iter().map(|b| parse_bin(b)).collect::<Result<Vec<_>>>()?;
        let outcome = match flags.outcome.as_deref().or(file.run.outcome.as_deref()) {
            Some(text) => parse_outcome(text)?,
            None => OutcomeVar::Primary,
        };
        Ok(RunConfig {
            seed: flags.seed.or(file.run.seed).unwrap_or(0),
            folds: flags.folds.or(file.run.folds).unwrap_or(5),
            clip: flags.clip.or(file.run.clip).unwrap_or(0.01),
            alpha: flags.alpha.or(file.run.alpha).unwrap_or(0.05),
            bootstrap: flags.bootstrap.or(file.run.bootstrap).unwrap_or(200),
            draws: flags.draws.or(file.run.draws).unwrap_or(10),
            quantiles: flags
                .quantiles
                .clone()
                .or_else(|| file.run.quantiles.clone())
                .unwrap_or_else(|| vec![0.01, 0.02, 0.03, 0.04, 0.05]),
            bins,
            bins_explicit,
            cell_floor: flags.cell_floor.or(file.run.cell_floor).unwrap_or(50),
            outcome,
            learner,
            delimiter: flags.delimiter.or(file.run.delimiter).unwrap_or(','),
        })
    }

    pub fn nuisance(&self) -> NuisanceConfig {
        NuisanceConfig {
            learner: self.learner.clone(),
            folds: self.folds,
            seed: self.seed,
            clip: self.clip,
            outcome: self.outcome,
        }
    }

    pub fn load_options(&self) -> LoadOptions {
        LoadOptions { delimiter: self.delimiter as u8, ..Default::default() }
    }
}

/// Manifest written next to every report: the full resolved configuration
/// plus input paths, subcommand, and software version. Reruns from the
/// same manifest are byte-identical.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub inputs: Vec<(String, String)>,
    pub config: RunConfig,
}

impl Manifest {
    pub fn new(command: &str, config: &RunConfig) -> Manifest {
        Manifest {
            tool: "disparity".into(),
            version: VERSION.into(),
            command: command.into(),
            inputs: Vec::new(),
            config: config.clone(),
        }
    }

    pub fn with_input(mut self, key: &str, path: &Path) -> Manifest {
        self.inputs.push((key.into(), path.display().to_string()));
        self
    }

    pub fn write(&self, out_dir: &Path) -> Result<PathBuf> {
        let path = out_dir.join("manifest.json");
        std::fs::write(&path, serde_json::to_string_pretty(self).expect("manifest serializes"))?;
        Ok(path)
    }
}
