use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

/// Learned local feature aggregation: synthetic data, training, evaluation
/// and gradient checks.
#[derive(Debug, Parser)]
#[command(name = "featagg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic bag container.
    GenData(GenDataArgs),
    /// Train an aggregation function and classifier.
    Train(TrainArgs),
    /// Print the accuracy of a model on a bag container.
    Eval(EvalArgs),
    /// Compare analytic gradients against central finite differences.
    Gradcheck(GradcheckArgs),
    /// Export an SVG plot and its CSV twin.
    ExportPlot(ExportPlotArgs),
    /// Pick gamma by validation accuracy on a held-out part of the training set.
    SweepGamma(SweepGammaArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Dataset {
    Concentric,
    Xor,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Encoder {
    Bow,
    T1,
    T2,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum CheckedEncoder {
    T1,
    T2,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Init {
    Random,
    Kmeans,
    Gmm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Debug, Args)]
struct GenDataArgs {
    #[arg(long, value_enum)]
    dataset: Dataset,
    #[arg(long, default_value_t = 100, value_parser = positive_usize)]
    bags_per_class: usize,
    #[arg(long, default_value_t = 50, value_parser = positive_usize)]
    features_per_bag: usize,
    /// Gaussian noise scale.
    #[arg(long, default_value_t = 0.1, value_parser = non_negative, allow_negative_numbers = true)]
    noise: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output bag container.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ModelArgs {
    #[arg(long, value_enum, default_value_t = Encoder::T1)]
    encoder: Encoder,
    /// Number of codewords.
    #[arg(long, default_value_t = 2, value_parser = positive_usize)]
    k: usize,
    /// Kernel sharpness.
    #[arg(long, default_value_t = 1.0, value_parser = positive, allow_negative_numbers = true)]
    gamma: f64,
    /// Codebook initialization.
    #[arg(long, value_enum, default_value_t = Init::Kmeans)]
    init: Init,
    /// Core-loop epochs.
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    /// Classifier learning rate.
    #[arg(long, default_value_t = 1e-2, value_parser = positive, allow_negative_numbers = true)]
    lr_w: f64,
    /// Codebook learning rate; 0 freezes the codebook.
    #[arg(long, default_value_t = 1e-2, value_parser = non_negative, allow_negative_numbers = true)]
    lr_c: f64,
    /// Log-precision learning rate; 0 freezes the precisions.
    #[arg(long, default_value_t = 1e-3, value_parser = non_negative, allow_negative_numbers = true)]
    lr_sigma: f64,
    /// Bags per core-loop step.
    #[arg(long, default_value_t = 1, value_parser = positive_usize)]
    batch: usize,
    /// Descriptors sampled per bag and step [default: min(bag size, 1024)].
    #[arg(long, value_parser = positive_usize)]
    subsample: Option<usize>,
    /// Chi-squared feature map [default: on for bow and t1, off for t2].
    #[arg(long, value_enum)]
    chi2_map: Option<Switch>,
    /// Classifier epochs on the initial representation.
    #[arg(long, default_value_t = 100)]
    init_epochs: usize,
    /// Classifier fine-tuning epochs after the core loop.
    #[arg(long, default_value_t = 100)]
    finetune_epochs: usize,
    /// Seeds initialization, sampling and classifier shuffling.
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Training bags (.lfab, or .csv with bag_id,label,f1..fD).
    #[arg(long)]
    train: PathBuf,
    /// Test bags, evaluated after every epoch.
    #[arg(long)]
    test: Option<PathBuf>,
    #[command(flatten)]
    model: ModelArgs,
    /// Output model file.
    #[arg(long)]
    model_out: PathBuf,
    /// Per-epoch metrics CSV.
    #[arg(long)]
    metrics_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    #[arg(long, value_enum, default_value_t = CheckedEncoder::T1)]
    encoder: CheckedEncoder,
    /// Random instances to check.
    #[arg(long, default_value_t = 100, value_parser = positive_usize)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Chi-squared feature map [default: on for t1, off for t2].
    #[arg(long, value_enum)]
    chi2_map: Option<Switch>,
}

#[derive(Debug, Args)]
struct ExportPlotArgs {
    /// Model whose codebook is drawn over --data.
    #[arg(long, requires = "data", conflicts_with = "metrics")]
    model: Option<PathBuf>,
    /// 2-D bags to scatter.
    #[arg(long, requires = "model")]
    data: Option<PathBuf>,
    /// Metrics CSV written by `train`.
    #[arg(long, required_unless_present = "model")]
    metrics: Option<PathBuf>,
    /// SVG path; the CSV twin is written next to it with a .csv extension.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SweepGammaArgs {
    #[arg(long)]
    train: PathBuf,
    /// Comma-separated candidates.
    #[arg(long, value_delimiter = ',', default_value = "0.1,1,10,70", value_parser = positive)]
    gammas: Vec<f64>,
    /// Fraction of the training bags held out for validation.
    #[arg(long, default_value_t = 0.25)]
    val_fraction: f64,
    #[command(flatten)]
    model: ModelArgs,
}

fn positive(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        Ok(_) => Err("must be a positive number".into()),
        Err(e) => Err(e.to_string()),
    }
}

fn non_negative(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.is_finite() => Ok(v),
        Ok(_) => Err("must be a nonnegative number".into()),
        Err(e) => Err(e.to_string()),
    }
}

fn positive_usize(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(v) => Ok(v),
        Err(e) => Err(e.to_string()),
    }
}

/// Failure classes of the exit-code contract.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Runtime(String),
    Gradcheck(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Runtime(_) => 2,
            Failure::Gradcheck(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Runtime(m) | Failure::Gradcheck(m) => m,
        }
    }
}

impl From<featagg::Error> for Failure {
    fn from(e: featagg::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn main() -> ExitCode {
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
        Command::GenData(a) => commands::gen_data(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Gradcheck(a) => commands::gradcheck(a),
        Command::ExportPlot(a) => commands::export_plot(a),
        Command::SweepGamma(a) => commands::sweep_gamma(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
