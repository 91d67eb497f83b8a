//! `relpretrain` experiment runner.
//!
//! Exit codes: 0 on success, 2 for configuration or input errors, 3 for
//! runtime failures (including training divergence, which also leaves a
//! `diagnostic.json` in the run directory).

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use relpretrain::corpus::Split;

/// Error in the configuration or inputs; maps to exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "configuration error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Parser)]
#[command(
    name = "relpretrain",
    version,
    about = "Relational contrastive pre-training and playlist continuation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides `output_dir` from the config.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

/// Where the embeddings to score come from.
#[derive(Args)]
struct Tables {
    /// Embed the corpus with this checkpoint.
    #[arg(long, conflicts_with_all = ["embeddings", "train_embeddings"])]
    checkpoint: Option<PathBuf>,
    /// Test-split embedding table written by `embed`.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Train-split embedding table; needed by dropoutnet and clcrec.
    #[arg(long)]
    train_embeddings: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus or convert an interaction log.
    GenData {
        #[command(flatten)]
        common: Common,
    },
    /// Run training stages and write per-stage checkpoints.
    Train {
        #[command(flatten)]
        common: Common,
        /// Continue from this checkpoint instead of a fresh encoder.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Comma-separated stage list, overriding the config.
        #[arg(long, value_delimiter = ',')]
        stages: Option<Vec<u8>>,
    },
    /// Export the unified embeddings of one split.
    Embed {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "test")]
        split: Split,
    },
    /// Rank test tracks for a list of seed tracks.
    Recommend {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        tables: Tables,
        /// Comma-separated seed track ids.
        #[arg(long, value_delimiter = ',', required = true)]
        seeds: Vec<String>,
        /// Length of the ranked list.
        #[arg(short, long, default_value_t = 10)]
        k: usize,
        /// itemknn, dropoutnet or clcrec; overrides the config.
        #[arg(long)]
        recommender: Option<String>,
    },
    /// Score a recommender on the test continuation tasks.
    Eval {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        tables: Tables,
        /// itemknn, dropoutnet or clcrec; overrides the config.
        #[arg(long)]
        recommender: Option<String>,
    },
    /// Compare representations with ItemKNN.
    Ablate {
        #[command(flatten)]
        common: Common,
        /// Comma-separated variant names, overriding the config.
        #[arg(long, value_delimiter = ',')]
        variants: Option<Vec<String>>,
    },
    /// Retrain stage 3 for several context sizes J.
    SweepJ {
        #[command(flatten)]
        common: Common,
        /// Stage-2 checkpoint; stages 1 and 2 are trained when absent.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Comma-separated J values, overriding the config.
        #[arg(long, value_delimiter = ',')]
        js: Option<Vec<usize>>,
    },
    /// Project an embedding table onto its first two principal axes.
    Project {
        /// Embedding table to project.
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Comma-separated subset of ids; all rows when absent.
        #[arg(long, value_delimiter = ',')]
        ids: Option<Vec<String>>,
    },
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<ConfigError>() || cause.is::<toml::de::Error>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<relpretrain::Error>() {
            use relpretrain::Error as E;
            return match e {
                E::Config(_)
                | E::Validation { .. }
                | E::Version { .. }
                | E::MalformedInput(_)
                | E::UnknownId(_)
                | E::CaptionIncomplete(_)
                | E::Infeasible(_) => 2,
                _ => 3,
            };
        }
    }
    3
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData { common } => commands::gen_data(&common),
        Command::Train {
            common,
            resume,
            stages,
        } => commands::train(&common, resume.as_deref(), stages),
        Command::Embed {
            common,
            checkpoint,
            split,
        } => commands::embed(&common, &checkpoint, split),
        Command::Recommend {
            common,
            tables,
            seeds,
            k,
            recommender,
        } => commands::recommend(&common, &tables, &seeds, k, recommender.as_deref()),
        Command::Eval {
            common,
            tables,
            recommender,
        } => commands::eval(&common, &tables, recommender.as_deref()),
        Command::Ablate { common, variants } => commands::ablate(&common, variants),
        Command::SweepJ {
            common,
            checkpoint,
            js,
        } => commands::sweep_j(&common, checkpoint.as_deref(), js),
        Command::Project {
            embeddings,
            out_dir,
            ids,
        } => commands::project(&embeddings, &out_dir, ids),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
