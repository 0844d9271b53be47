//! Command-line front end: reproducible disparity-decomposition runs over
//! delimited text data.
//!
//! Every flag can also come from a `DISPARITY_*` environment variable or
//! from the config file (flags win, then environment, then file). Each run
//! writes `manifest.json` with the fully resolved configuration; rerunning
//! a subcommand with the same inputs and manifest produces byte-identical
//! outputs.
//!
//! Exit codes: 0 ok, 2 configuration error, 3 data/validation error,
//! 4 statistical degeneracy, 5 internal assertion.

mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use disparity_core::Error;

use config::{FileConfig, Overrides, RunConfig};

#[derive(Parser)]
#[command(
    name = "disparity",
    version,
    about = "Causal decomposition of group disparities in binary outcomes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct CommonArgs {
    /// Master seed for fold assignment, bootstraps, and sampling.
    #[arg(long, env = "DISPARITY_SEED")]
    seed: Option<u64>,
    /// Cross-fitting folds.
    #[arg(long, env = "DISPARITY_FOLDS")]
    folds: Option<usize>,
    /// Propensity/probability clipping bound.
    #[arg(long, env = "DISPARITY_CLIP")]
    clip: Option<f64>,
    /// Test level for interaction testing and overlap bounds.
    #[arg(long, env = "DISPARITY_ALPHA")]
    alpha: Option<f64>,
    /// Bootstrap replicates for cell and correlation intervals.
    #[arg(long, env = "DISPARITY_BOOTSTRAP")]
    bootstrap: Option<usize>,
    /// Imputation draws for the missingness analysis.
    #[arg(long, env = "DISPARITY_DRAWS")]
    draws: Option<usize>,
    /// Trimming quantiles, comma separated (e.g. 0.01,0.02).
    #[arg(long, env = "DISPARITY_QUANTILES", value_delimiter = ',')]
    quantiles: Option<Vec<f64>>,
    /// Age bins, comma separated LO-HI ranges (e.g. 18-54,55-64).
    #[arg(long, env = "DISPARITY_BINS", value_delimiter = ',')]
    bins: Option<Vec<String>>,
    /// Minimum minority rows per heatmap cell before masking.
    #[arg(long, env = "DISPARITY_CELL_FLOOR")]
    cell_floor: Option<usize>,
    /// Outcome variable: y or readmission.
    #[arg(long, env = "DISPARITY_OUTCOME")]
    outcome: Option<String>,
    /// Learner family: gbt or linear.
    #[arg(long, env = "DISPARITY_LEARNER")]
    learner: Option<String>,
    /// Field delimiter of input data files.
    #[arg(long, env = "DISPARITY_DELIMITER")]
    delimiter: Option<char>,
}

impl CommonArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            folds: self.folds,
            clip: self.clip,
            alpha: self.alpha,
            bootstrap: self.bootstrap,
            draws: self.draws,
            quantiles: self.quantiles.clone(),
            bins: self.bins.clone(),
            cell_floor: self.cell_floor,
            outcome: self.outcome.clone(),
            learner: self.learner.clone(),
            delimiter: self.delimiter,
        }
    }
}

#[derive(Args, Debug, Clone)]
struct DataArgs {
    /// Delimited text data file with a header row.
    #[arg(long, env = "DISPARITY_DATA")]
    data: PathBuf,
    /// TOML config file with the [schema] section (and optional [run],
    /// [learner] sections).
    #[arg(long, env = "DISPARITY_CONFIG")]
    config: PathBuf,
}

#[derive(Args, Debug, Clone)]
struct OutArgs {
    /// Output directory (created if absent).
    #[arg(long, env = "DISPARITY_OUT")]
    out: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Decompose the outcome disparity into direct, indirect, and
    /// confounded components (forward and reverse).
    Decompose {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        out: OutArgs,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Test for interactions between the causal pathways.
    Interactions {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        out: OutArgs,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Cell-conditional direct effects, age-binned indirect effects, and
    /// mechanism profiles.
    Heterogeneity {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        out: OutArgs,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Census-anchored admission risk ratios and their heatmap.
    Riskratio {
        /// Census counts file: area,year,age_lo,age_hi,group,count.
        #[arg(long, env = "DISPARITY_CENSUS")]
        census: PathBuf,
        /// Pre-aggregated admission counts
        /// (area,year,age_lo,age_hi,group,diagnosis,n).
        #[arg(long)]
        admissions: Option<PathBuf>,
        /// Patient-level data to count admissions from (with --config).
        #[arg(long, env = "DISPARITY_DATA")]
        data: Option<PathBuf>,
        #[arg(long, env = "DISPARITY_CONFIG")]
        config: Option<PathBuf>,
        #[command(flatten)]
        out: OutArgs,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Per-area age-adjusted admission risk radar.
    Radar {
        #[arg(long, env = "DISPARITY_CENSUS")]
        census: PathBuf,
        #[arg(long)]
        admissions: Option<PathBuf>,
        #[arg(long, env = "DISPARITY_DATA")]
        data: Option<PathBuf>,
        #[arg(long, env = "DISPARITY_CONFIG")]
        config: Option<PathBuf>,
        /// Restrict the radar to these diagnosis groups (default: pooled).
        #[arg(long, value_delimiter = ',')]
        diagnosis: Option<Vec<String>>,
        #[command(flatten)]
        out: OutArgs,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Propensity-trimming overlap sensitivity analysis.
    SensitivityOverlap {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        out: OutArgs,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Multiple-imputation sensitivity analysis for missing attributes.
    SensitivityMissing {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        out: OutArgs,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Sample a dataset from a structural-model spec and write its exact
    /// oracle effects.
    Simulate {
        /// Structural-model spec (JSON).
        #[arg(long)]
        scm: PathBuf,
        /// Rows to sample.
        #[arg(long)]
        n: usize,
        #[command(flatten)]
        out: OutArgs,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Descriptive cohort comparison of the two groups.
    Summary {
        #[command(flatten)]
        data: DataArgs,
        /// Variables to summarize (default: confounders, mediators,
        /// outcome).
        #[arg(long, value_delimiter = ',')]
        vars: Option<Vec<String>>,
        #[command(flatten)]
        out: OutArgs,
        #[command(flatten)]
        common: CommonArgs,
    },
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Schema(_) => 2,
        Error::Validation(_) | Error::Io(_) => 3,
        Error::Degenerate(_) => 4,
        Error::Internal(_) => 5,
    }
}

fn load_file_config(path: Option<&PathBuf>) -> Result<FileConfig, Error> {
    match path {
        Some(p) => FileConfig::load(p),
        None => Ok(FileConfig::default()),
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Decompose { data, out, common } => {
            let file = FileConfig::load(&data.config)?;
            let config = RunConfig::resolve(&file, &common.overrides())?;
            commands::cmd_decompose(&data.data, &file, &config, &out.out)
        }
        Command::Interactions { data, out, common } => {
            let file = FileConfig::load(&data.config)?;
            let config = RunConfig::resolve(&file, &common.overrides())?;
            commands::cmd_interactions(&data.data, &file, &config, &out.out)
        }
        Command::Heterogeneity { data, out, common } => {
            let file = FileConfig::load(&data.config)?;
            let config = RunConfig::resolve(&file, &common.overrides())?;
            commands::cmd_heterogeneity(&data.data, &file, &config, &out.out)
        }
        Command::Riskratio { census, admissions, data, config, out, common } => {
            let file = load_file_config(config.as_ref())?;
            let run_config = RunConfig::resolve(&file, &common.overrides())?;
            commands::cmd_riskratio(
                &census,
                admissions.as_deref(),
                data.as_deref(),
                &file,
                &run_config,
                &out.out,
            )
        }
        Command::Radar { census, admissions, data, config, diagnosis, out, common } => {
            let file = load_file_config(config.as_ref())?;
            let run_config = RunConfig::resolve(&file, &common.overrides())?;
            commands::cmd_radar(
                &census,
                admissions.as_deref(),
                data.as_deref(),
                diagnosis.as_deref(),
                &file,
                &run_config,
                &out.out,
            )
        }
        Command::SensitivityOverlap { data, out, common } => {
            let file = FileConfig::load(&data.config)?;
            let config = RunConfig::resolve(&file, &common.overrides())?;
            commands::cmd_sensitivity_overlap(&data.data, &file, &config, &out.out)
        }
        Command::SensitivityMissing { data, out, common } => {
            let file = FileConfig::load(&data.config)?;
            let config = RunConfig::resolve(&file, &common.overrides())?;
            commands::cmd_sensitivity_missing(&data.data, &file, &config, &out.out)
        }
        Command::Simulate { scm, n, out, common } => {
            let config = RunConfig::resolve(&FileConfig::default(), &common.overrides())?;
            commands::cmd_simulate(&scm, n, &config, &out.out)
        }
        Command::Summary { data, vars, out, common } => {
            let file = FileConfig::load(&data.config)?;
            let config = RunConfig::resolve(&file, &common.overrides())?;
            commands::cmd_summary(&data.data, &file, &config, vars, &out.out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
