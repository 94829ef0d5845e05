//! `dua`: train uncertainty-aware multi-view representations and run the
//! evaluation and analysis protocols on them.
//!
//! Exit codes: 0 success, 1 configuration or usage error, 2 data error,
//! 3 numerical divergence.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError {
            code: 1,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        CliError {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<dua_core::Error> for CliError {
    fn from(e: dua_core::Error) -> Self {
        use dua_core::Error as E;
        let code = match &e {
            E::Config(_) | E::Contract(_) => 1,
            E::Divergence { .. } => 3,
            E::Shape { .. }
            | E::Data(_)
            | E::Parse { .. }
            | E::Version { .. }
            | E::Checkpoint(_)
            | E::Io { .. } => 2,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "dua",
    version,
    about = "Uncertainty-aware multi-view representation learning"
)]
#[command(
    after_help = "Settings resolve as: flags, then the --config JSON file, then built-in defaults.\n\
    DUA_SEED supplies the seed when neither a flag nor the config file sets one."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic clustered multi-view dataset
    Synth(SynthArgs),
    /// Learn latent representations (and per-sample σ) for a dataset
    Train(TrainArgs),
    /// k-means clustering of learned representations: ACC, NMI, F-score, RI
    Cluster(ClusterArgs),
    /// KNN gallery/probe classification of learned representations
    Classify(ClassifyArgs),
    /// Pollute one view at several intensities; compare objectives and σ
    NoiseStudy(NoiseStudyArgs),
    /// Kernel density estimates of learned σ, split by clean/polluted rows
    Kde(KdeArgs),
    /// Clustering quality as a function of the latent dimension
    DimSweep(DimSweepArgs),
}

#[derive(Args)]
pub struct Common {
    /// Output directory; every artifact is written inside it
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// JSON config file; flags override its values
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
}

/// Training hyperparameters shared by `train` and the sweeps.
#[derive(Args)]
pub struct ModelFlags {
    /// Latent dimension d [default: 50]
    #[arg(long)]
    pub latent_dim: Option<usize>,
    /// Maximum training epochs [default: 2000]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Adam learning rate [default: 0.001]
    #[arg(long)]
    pub lr: Option<f64>,
    /// Adam learning rate of the latent table [default: same as --lr]
    #[arg(long)]
    pub latent_lr: Option<f64>,
    /// Epochs trained with σ frozen at 1 before the sigma heads start [default: 0]
    #[arg(long)]
    pub warm_up: Option<usize>,
    /// Early-stopping window in epochs [default: 20]
    #[arg(long)]
    pub window: Option<usize>,
    /// Early-stopping relative tolerance; 0 disables it [default: 1e-6]
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// Standard deviation of the initial latents [default: 1.0]
    #[arg(long)]
    pub init_scale: Option<f64>,
    /// ln σ penalty: per_observation (ln σ) or per_feature (D_v · ln σ) [default: per_observation]
    #[arg(long)]
    pub regularizer: Option<String>,
}

#[derive(Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub common: Common,
    /// Generator seed [default: DUA_SEED, else 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of samples [default: 400]
    #[arg(long)]
    pub n: Option<usize>,
    /// Number of clusters [default: 4]
    #[arg(long)]
    pub clusters: Option<usize>,
    /// True latent dimension [default: 8]
    #[arg(long)]
    pub latent_dim: Option<usize>,
    /// Comma-separated view widths [default: 20,20]
    #[arg(long, value_delimiter = ',')]
    pub widths: Option<Vec<usize>>,
    /// Scale of the cluster centers [default: 3.0]
    #[arg(long)]
    pub separation: Option<f64>,
    /// Weight of the ReLU term in each view map [default: 0.1]
    #[arg(long)]
    pub nonlinearity: Option<f64>,
    /// Standard deviation of noise added to every feature [default: 0]
    #[arg(long)]
    pub feature_noise: Option<f64>,
}

#[derive(Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    /// Dataset manifest (dataset.json)
    #[arg(long, value_name = "FILE")]
    pub data: PathBuf,
    /// Training seed [default: DUA_SEED, else 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Objective: dua (uncertainty-aware) or rnets (plain squared error) [default: dua]
    #[arg(long)]
    pub objective: Option<String>,
    #[command(flatten)]
    pub model: ModelFlags,
    /// Train on the features as given instead of z-scoring them
    #[arg(long)]
    pub no_normalize: bool,
    /// Pollute one view with η·ε noise before training [default: no noise]
    #[arg(long)]
    pub noise_eta: Option<f64>,
    /// View to pollute [default: 0]
    #[arg(long)]
    pub noise_view: Option<usize>,
    /// Fraction of rows to pollute [default: 0.5]
    #[arg(long)]
    pub noise_fraction: Option<f64>,
    /// Seed choosing polluted rows and noise [default: 0]
    #[arg(long)]
    pub noise_seed: Option<u64>,
}

#[derive(Args)]
pub struct EvalInputs {
    /// Checkpoint written by `train`
    #[arg(long, value_name = "FILE")]
    pub checkpoint: PathBuf,
    /// Labels CSV (one integer per line)
    #[arg(long, value_name = "FILE")]
    pub labels: Option<PathBuf>,
    /// Dataset manifest to take labels from when --labels is absent
    #[arg(long, value_name = "FILE")]
    pub data: Option<PathBuf>,
}

#[derive(Args)]
pub struct ClusterArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub inputs: EvalInputs,
    /// Evaluation seed; run r uses seed + r [default: DUA_SEED, else 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Repeated k-means runs [default: 30]
    #[arg(long)]
    pub runs: Option<usize>,
    /// k-means++ restarts per run [default: 10]
    #[arg(long)]
    pub restarts: Option<usize>,
}

#[derive(Args)]
pub struct ClassifyArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub inputs: EvalInputs,
    /// Evaluation seed; run r uses seed + r [default: DUA_SEED, else 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Gallery:probe ratios [default: 8:2,7:3,5:5,2:8]
    #[arg(long, value_delimiter = ',')]
    pub splits: Option<Vec<String>>,
    /// Random splits per ratio [default: 30]
    #[arg(long)]
    pub runs: Option<usize>,
    /// Neighbors voting [default: 1]
    #[arg(long)]
    pub k: Option<usize>,
}

/// Where sweeps get their data.
#[derive(Args)]
pub struct SweepData {
    /// Dataset manifest (dataset.json); must carry labels
    #[arg(long, value_name = "FILE", conflicts_with = "synthetic")]
    pub data: Option<PathBuf>,
    /// Use the synthetic family instead (settings under "synthetic" in --config)
    #[arg(long)]
    pub synthetic: bool,
    /// Use the features as given instead of z-scoring them
    #[arg(long)]
    pub no_normalize: bool,
    /// Comma-separated training seeds, one model per seed and cell [default: 0,1,2, or DUA_SEED and the next two]
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// k-means runs per trained model [default: 10]
    #[arg(long)]
    pub eval_runs: Option<usize>,
    /// k-means++ restarts per run [default: 10]
    #[arg(long)]
    pub restarts: Option<usize>,
}

#[derive(Args)]
pub struct NoiseStudyArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub source: SweepData,
    /// Noise intensities; 0 is always added as the baseline [default: 0.1,0.5,1,2]
    #[arg(long, value_delimiter = ',')]
    pub eta: Option<Vec<f64>>,
    /// Objectives to compare [default: dua,rnets]
    #[arg(long, value_delimiter = ',')]
    pub variants: Option<Vec<String>>,
    /// View to pollute [default: 0]
    #[arg(long)]
    pub noise_view: Option<usize>,
    /// Fraction of rows to pollute [default: 0.5]
    #[arg(long)]
    pub fraction: Option<f64>,
    #[command(flatten)]
    pub model: ModelFlags,
}

#[derive(Args)]
pub struct KdeArgs {
    #[command(flatten)]
    pub common: Common,
    /// Checkpoint written by `train`
    #[arg(long, value_name = "FILE")]
    pub checkpoint: PathBuf,
    /// Polluted row indices (polluted.csv from `train --noise-eta`); without it one curve covers all rows
    #[arg(long, value_name = "FILE")]
    pub polluted: Option<PathBuf>,
    /// View whose σ is estimated [default: 0]
    #[arg(long)]
    pub view: Option<usize>,
    /// Estimate the density of ln σ instead of σ [default: false]
    #[arg(long)]
    pub log_scale: bool,
}

#[derive(Args)]
pub struct DimSweepArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub source: SweepData,
    /// Latent dimensions [default: 10,20,50,100,200]
    #[arg(long, value_delimiter = ',')]
    pub dims: Option<Vec<usize>>,
    #[command(flatten)]
    pub model: ModelFlags,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Train(a) => commands::train(a),
        Command::Cluster(a) => commands::cluster(a),
        Command::Classify(a) => commands::classify(a),
        Command::NoiseStudy(a) => commands::noise_study(a),
        Command::Kde(a) => commands::kde(a),
        Command::DimSweep(a) => commands::dim_sweep(a),
    };
    match result {
        Ok(manifest) => {
            println!("{}", manifest.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
