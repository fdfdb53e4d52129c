//! The `g2t` command-line tool and HTTP decode service.

pub mod commands;
pub mod config;
pub mod error;
pub mod serve;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "g2t", version, about = "Word-gesture keyboard decoding toolkit")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Seed for generation, initialization, shuffling and splits.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// JSON file with preprocess/model/train/synth/beam/shark2 sections.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Layout JSON file; defaults to the built-in QWERTY.
    #[arg(long, global = true)]
    pub layout: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
#[allow(clippy::large_enum_variant)]
pub enum Command {
    /// Generate a synthetic dataset.
    Synth(SynthArgs),
    /// Train the neural decoder.
    Train(TrainArgs),
    /// Evaluate a decoder on a dataset and write a JSON report.
    Eval(EvalArgs),
    /// Decode one trajectory and print the top-k words.
    Decode(DecodeArgs),
    /// Touch-point and curvature statistics for a dataset.
    Stats(StatsArgs),
    /// Run the HTTP decode service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Word list, one word per line.
    #[arg(long)]
    pub words: PathBuf,
    /// Samples per word.
    #[arg(long, default_value_t = 10)]
    pub count: usize,
    /// Waypoint jitter in key widths.
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub smoothing_window: Option<usize>,
    #[arg(long)]
    pub points_per_segment: Option<usize>,
    /// Output JSONL path; `-` for standard output.
    #[arg(long, default_value = "-")]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum EncodingArg {
    Onehot,
    Integer,
    Cartesian,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum RegionArg {
    Square,
    Ellipse,
}

#[derive(Debug, Default, Args)]
pub struct PreprocessArgs {
    #[arg(long, value_enum)]
    pub encoding: Option<EncodingArg>,
    #[arg(long, value_enum)]
    pub region: Option<RegionArg>,
    /// Region size relative to the key pitch.
    #[arg(long)]
    pub ratio: Option<f64>,
    /// Resampling step in key widths.
    #[arg(long)]
    pub step: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Validation set; defaults to a seeded 90/10 split of --data.
    #[arg(long)]
    pub val: Option<PathBuf>,
    /// Lexicon for validation decoding; defaults to the dataset's words.
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    /// Where to write the best-Top-4 checkpoint.
    #[arg(long)]
    pub out: PathBuf,
    /// Start from an existing model instead of a fresh initialization.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Per-epoch metrics CSV.
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[command(flatten)]
    pub preprocess: PreprocessArgs,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub dense: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub beam_width: Option<usize>,
    /// Suppress per-epoch progress on standard error.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DecoderArg {
    Neural,
    Conventional,
    Shark2,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    /// The whole file is the held-out test set.
    Holdout,
    /// One split per user; the spread is across users.
    Loso,
}

#[derive(Debug, Args)]
pub struct DecoderArgs {
    #[arg(long, value_enum, default_value = "neural")]
    pub decoder: DecoderArg,
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Word list constraining the output (required for shark2).
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    #[arg(long)]
    pub beam_width: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub decoder: DecoderArgs,
    #[arg(long, value_enum, default_value = "holdout")]
    pub split: SplitArg,
    /// Report path; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    /// JSON points file, `[[x,y],...]` or `{"points": [...]}`; `-` for stdin.
    #[arg(long)]
    pub points: PathBuf,
    #[command(flatten)]
    pub decoder: DecoderArgs,
    #[arg(short = 'k', long = "top", default_value_t = 4)]
    pub k: usize,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Report path; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write one sample's T x 26 one-hot matrix as CSV.
    #[arg(long)]
    pub dump_discretized: Option<PathBuf>,
    /// Sample used by --dump-discretized.
    #[arg(long, default_value_t = 0)]
    pub sample: usize,
    #[command(flatten)]
    pub preprocess: PreprocessArgs,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, default_value_t = 8790)]
    pub port: u16,
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Word list for beam constraint and the shark2 decoder.
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    #[arg(long)]
    pub beam_width: Option<usize>,
}

/// Runs one parsed invocation.
pub fn run(cli: Cli) -> CliResult<()> {
    let ctx = commands::Context::new(&cli.global)?;
    match cli.command {
        Command::Synth(a) => commands::synth(&ctx, a),
        Command::Train(a) => commands::train(&ctx, a),
        Command::Eval(a) => commands::eval(&ctx, a),
        Command::Decode(a) => commands::decode(&ctx, a),
        Command::Stats(a) => commands::stats(&ctx, a),
        Command::Serve(a) => serve::run(&ctx, a),
    }
}
