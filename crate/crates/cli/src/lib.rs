//! Command-line surface of prospectus: configuration, file formats and the
//! subcommands that bind the modelling library to files.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use crate::commands::{Dataset, Estimator, Experiment, Report};
use crate::config::RunConfig;
use crate::error::CliResult;
use crate::io::Output;

#[derive(Debug, Parser)]
#[command(name = "prospectus", version, about = "Utility theory and cumulative prospect theory models of mode choice")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// TOML run configuration; the built-in defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Directory for output files.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Overrides the estimation and simulation seeds of the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Logit probabilities of the options in a CSV file.
    ChoiceProb {
        #[arg(long)]
        options: PathBuf,
    },
    /// CPT subjective utility of a prospect given as JSON.
    CptUtility {
        #[arg(long)]
        prospect: PathBuf,
    },
    /// Runs an experiment and checks its properties.
    Experiment {
        #[arg(long, value_enum)]
        which: ExperimentArg,
    },
    /// Fits the mixed logit to choices or the CPT parameters to certainty equivalents.
    Estimate {
        #[arg(long, value_enum)]
        which: EstimatorArg,
        #[arg(long)]
        data: PathBuf,
    },
    /// Reflection, probability weighting and loss aversion rates of lottery answers.
    DetectEffects {
        #[arg(long)]
        data: PathBuf,
    },
    /// Writes synthetic data in one of the input schemas.
    Simulate {
        #[arg(long, value_enum)]
        which: DatasetArg,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ExperimentArg {
    Fourfold,
    Mixed,
    Selfref,
    Monotonicity,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum EstimatorArg {
    Logit,
    Cpt,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DatasetArg {
    Choice,
    Ce,
    Lottery,
}

pub fn run(cli: &Cli) -> CliResult<Report> {
    let config = RunConfig::load(cli.config.as_deref())?.with_seed(cli.seed);
    let out = Output::new(cli.out.clone());
    match &cli.command {
        Command::ChoiceProb { options } => commands::choice_prob(&config, options, &out),
        Command::CptUtility { prospect } => commands::cpt_utility(&config, prospect, &out),
        Command::Experiment { which } => {
            let which = match which {
                ExperimentArg::Fourfold => Experiment::Fourfold,
                ExperimentArg::Mixed => Experiment::Mixed,
                ExperimentArg::Selfref => Experiment::SelfReference,
                ExperimentArg::Monotonicity => Experiment::Monotonicity,
            };
            commands::experiment(&config, which, &out)
        }
        Command::Estimate { which, data } => {
            let which = match which {
                EstimatorArg::Logit => Estimator::Logit,
                EstimatorArg::Cpt => Estimator::Cpt,
            };
            commands::estimate(&config, which, data, &out)
        }
        Command::DetectEffects { data } => commands::detect_effects(&config, data, &out),
        Command::Simulate { which } => {
            let which = match which {
                DatasetArg::Choice => Dataset::Choice,
                DatasetArg::Ce => Dataset::Ce,
                DatasetArg::Lottery => Dataset::Lottery,
            };
            commands::simulate(&config, which, &out)
        }
    }
}
