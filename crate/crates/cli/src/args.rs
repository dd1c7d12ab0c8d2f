use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand};
use labelscope::data::SplitSpec;

#[derive(Debug, Parser)]
#[command(name = "labelscope", version, about = "Label-noise detection toolkit")]
pub struct Cli {
    /// Base seed for every random stage.
    #[arg(long, global = true, env = "LABELSCOPE_SEED")]
    pub seed: Option<u64>,

    /// Worker threads for fold training and experiment conditions.
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    pub jobs: Option<u16>,

    /// Repeat for more log output.
    #[arg(long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Stratified train/val/test split.
    Split(SplitArgs),
    /// Generate a synthetic corpus with per-class token pools.
    MakeSynthetic(SyntheticArgs),
    /// Flip labels uniformly at random and record the flips.
    InjectNoise(NoiseArgs),
    /// Confident learning: OOF probabilities, flagged issues, filtered set.
    Cl(ClArgs),
    /// Dataset cartography: training dynamics, data map, knee filter.
    Dm(DmArgs),
    /// Remove a uniformly random subset of a given size.
    RandomControl(RandomArgs),
    /// F1-macro and accuracy on a test set.
    Evaluate(EvaluateArgs),
    /// Full baseline / CL / DM / random-control comparison.
    Experiment(ExperimentArgs),
    /// Render a data map SVG from a cartography report.
    Datamap(DatamapArgs),
}

#[derive(Debug, Args)]
pub struct DatasetArgs {
    /// JSON-Lines dataset.
    #[arg(long)]
    pub input: PathBuf,

    /// Class manifest; defaults to `<stem>.classes.json` or `classes.json`.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// JSON file with training settings.
    #[arg(long)]
    pub train_config: Option<PathBuf>,

    #[arg(long)]
    pub train_epochs: Option<usize>,

    #[arg(long)]
    pub learning_rate: Option<f64>,

    #[arg(long)]
    pub batch_size: Option<usize>,

    #[arg(long)]
    pub feature_dims: Option<usize>,

    #[arg(long)]
    pub l2: Option<f64>,
}

fn parse_ratios(raw: &str) -> Result<[f64; 3], String> {
    let parts: Vec<f64> = raw
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    let ratios: [f64; 3] = parts
        .try_into()
        .map_err(|_| "expected three comma-separated ratios".to_string())?;
    SplitSpec::new(ratios, 0).map_err(|e| e.to_string())?;
    Ok(ratios)
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[command(flatten)]
    pub data: DatasetArgs,

    /// Train,val,test fractions.
    #[arg(long, default_value = "0.8,0.1,0.1", value_parser = parse_ratios)]
    pub ratios: [f64; 3],

    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct SyntheticArgs {
    #[arg(long)]
    pub n: usize,

    #[arg(long, default_value_t = 2)]
    pub classes: usize,

    /// Share of tokens drawn from the class's own pool.
    #[arg(long, default_value_t = 0.9)]
    pub separation: f64,

    /// Tokens per pool.
    #[arg(long, default_value_t = 500)]
    pub vocab: usize,

    /// Tokens per text.
    #[arg(long, default_value_t = labelscope::noise::SyntheticSpec::DEFAULT_LENGTH)]
    pub length: usize,

    /// Output dataset; the manifest is written next to it.
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct NoiseArgs {
    #[command(flatten)]
    pub data: DatasetArgs,

    #[arg(long)]
    pub rate: f64,

    #[arg(long)]
    pub output: PathBuf,

    /// Flip record; defaults to `<output stem>.flips.json`.
    #[arg(long)]
    pub flips: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ClArgs {
    #[command(flatten)]
    pub data: DatasetArgs,

    /// Cross-validation folds.
    #[arg(long, conflicts_with = "proba", value_parser = clap::value_parser!(u32).range(2..))]
    pub k: Option<u32>,

    /// Use precomputed out-of-fold probabilities instead of training.
    #[arg(long)]
    pub proba: Option<PathBuf>,

    #[command(flatten)]
    pub train: TrainArgs,

    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct DmArgs {
    #[command(flatten)]
    pub data: DatasetArgs,

    /// Epochs of recorded training dynamics.
    #[arg(long, conflicts_with = "dynamics", value_parser = clap::value_parser!(u32).range(2..))]
    pub epochs: Option<u32>,

    /// Use a precomputed dynamics file instead of training.
    #[arg(long)]
    pub dynamics: Option<PathBuf>,

    #[command(flatten)]
    pub train: TrainArgs,

    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct RandomArgs {
    #[command(flatten)]
    pub data: DatasetArgs,

    /// Number of examples to remove.
    #[arg(long)]
    pub count: usize,

    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("source").required(true).args(["train", "proba"])))]
pub struct EvaluateArgs {
    /// Train the reference model on this dataset.
    #[arg(long)]
    pub train: Option<PathBuf>,

    /// Or score precomputed probabilities for the test set.
    #[arg(long)]
    pub proba: Option<PathBuf>,

    #[arg(long)]
    pub test: PathBuf,

    #[command(flatten)]
    pub train_opts: TrainArgs,

    /// Write the report here instead of stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[arg(long)]
    pub config: PathBuf,

    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct DatamapArgs {
    /// cartography.json from the dm subcommand.
    #[arg(long)]
    pub cartography: PathBuf,

    #[arg(long)]
    pub output: PathBuf,

    #[arg(long, default_value = "Data map")]
    pub title: String,
}
