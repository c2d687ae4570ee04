use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use fisens::classifier::{Activation, ImageShape};
use fisens::influence::{Measure, ObjectiveKind};
use fisens::manifold::PerturbationTarget;

#[derive(Debug, Parser, Serialize)]
#[command(name = "fisens", version, about = "Perturbation-manifold influence measures for softmax classifiers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Train a fully-connected classifier with mini-batch SGD.
    Train(TrainArgs),
    /// Score samples with FI and the baseline measures.
    FiSample(ScoreArgs),
    /// FI of each trainable layer next to the all-parameter FI.
    FiLayers(LayersArgs),
    /// FI distributions of a training and a test set, with percentiles.
    FiDataset(DatasetArgs),
    /// Multi-scale pixel-wise FI maps.
    FiPixels(PixelsArgs),
    /// Synthetic outlier simulation, scanning and evaluation.
    #[command(subcommand)]
    Outliers(OutliersCommand),
    /// Adversarial attacks guided by FI.
    #[command(subcommand)]
    Attack(AttackCommand),
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutliersCommand {
    /// Append overlapped two-digit images to a dataset.
    Simulate(SimulateArgs),
    /// Score a dataset with FI and the Jacobian norm under input perturbations.
    Scan(ScanArgs),
    /// ROC and precision-recall curves from a scan's records.
    Eval(EvalArgs),
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackCommand {
    /// Change the pixel with the largest scale-1 FI, plus random-pixel baselines.
    OnePixel(AttackArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct Common {
    /// Directory for results and the run summary.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    /// Worker threads (defaults to the number of CPUs).
    #[arg(long)]
    pub workers: Option<usize>,
}

/// A labelled image set: an IDX pair, or a headerless `label,v1,…,vn` CSV.
#[derive(Debug, Clone, Args, Serialize)]
pub struct DataSource {
    /// IDX image file (optionally gzip-compressed).
    #[arg(long, requires = "labels", conflicts_with = "csv")]
    pub images: Option<PathBuf>,
    /// IDX label file.
    #[arg(long, requires = "images")]
    pub labels: Option<PathBuf>,
    /// CSV dataset; values channel-major in [0, 1].
    #[arg(long, requires = "shape")]
    pub csv: Option<PathBuf>,
    /// Image shape for CSV input as HxWxC, e.g. 32x32x3.
    #[arg(long, value_parser = parse_shape)]
    pub shape: Option<ImageShape>,
    /// Use only the first N samples.
    #[arg(long)]
    pub limit: Option<usize>,
}

/// Same as [`DataSource`] for a second (test) set.
#[derive(Debug, Clone, Args, Serialize)]
pub struct TestSource {
    #[arg(long, requires = "test_labels", conflicts_with = "test_csv")]
    pub test_images: Option<PathBuf>,
    #[arg(long, requires = "test_images")]
    pub test_labels: Option<PathBuf>,
    #[arg(long, requires = "shape")]
    pub test_csv: Option<PathBuf>,
    #[arg(long)]
    pub test_limit: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataSource,
    /// Layer widths from input to classes; the input width must match the data.
    #[arg(long, value_delimiter = ',', default_value = "784,128,64,10")]
    pub arch: Vec<usize>,
    #[arg(long, value_parser = parse_activation, default_value = "sigmoid")]
    #[serde(serialize_with = "display")]
    pub activation: Activation,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.5)]
    pub learning_rate: f64,
    /// Seeds initialization and shuffling.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args, Serialize)]
pub struct ScoreArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataSource,
    /// input, all-params or layer:N (zero-based).
    #[arg(long, value_parser = parse_target, default_value = "input")]
    #[serde(serialize_with = "display")]
    pub target: PerturbationTarget,
    #[arg(long, value_parser = parse_objective, default_value = "true-label")]
    #[serde(serialize_with = "display")]
    pub objective: ObjectiveKind,
    /// Comma-separated subset of fi, jacobian, cook.
    #[arg(long, value_delimiter = ',', value_parser = parse_measure, default_value = "fi,jacobian")]
    pub measures: Vec<Measure>,
    /// Score only these sample ids.
    #[arg(long, value_delimiter = ',')]
    pub ids: Option<Vec<usize>>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args, Serialize)]
pub struct LayersArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataSource,
    #[arg(long, value_parser = parse_objective, default_value = "true-label")]
    #[serde(serialize_with = "display")]
    pub objective: ObjectiveKind,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args, Serialize)]
pub struct DatasetArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataSource,
    #[command(flatten)]
    pub test: TestSource,
    #[arg(long, value_parser = parse_target, default_value = "input")]
    #[serde(serialize_with = "display")]
    pub target: PerturbationTarget,
    #[arg(long, value_parser = parse_objective, default_value = "pred-label")]
    #[serde(serialize_with = "display")]
    pub objective: ObjectiveKind,
    /// Nearest-rank percentiles to report.
    #[arg(long, value_delimiter = ',', default_value = "75,80,85,90,95,98,99,100")]
    pub percentiles: Vec<f64>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChannelArg {
    PerChannel,
    Averaged,
}

#[derive(Debug, Args, Serialize)]
pub struct PixelsArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataSource,
    /// Sample ids to map (default: the first sample).
    #[arg(long, value_delimiter = ',')]
    pub ids: Option<Vec<usize>>,
    /// Patch sizes; each must be one of 1, 3, 5, 7.
    #[arg(long, value_delimiter = ',', default_value = "1,3,5,7")]
    pub scales: Vec<usize>,
    #[arg(long, value_enum, default_value = "averaged")]
    pub channel_mode: ChannelArg,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub data: DataSource,
    /// Number of outliers; defaults to 5% of the dataset.
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long, default_value_t = 4)]
    pub max_shift: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args, Serialize)]
pub struct ScanArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataSource,
    #[arg(long, value_delimiter = ',', value_parser = parse_measure, default_value = "fi,jacobian")]
    pub measures: Vec<Measure>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    /// Records written by `outliers scan`.
    #[arg(long)]
    pub records: PathBuf,
    /// Samples with an id at or above this value are the injected outliers.
    #[arg(long)]
    pub outliers_from: usize,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args, Serialize)]
pub struct AttackArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataSource,
    /// Sample ids to attack (default: every sample).
    #[arg(long, value_delimiter = ',')]
    pub ids: Option<Vec<usize>>,
    /// Random-pixel baseline attacks per image.
    #[arg(long, default_value_t = 20)]
    pub random_trials: usize,
    /// Seeds the random-pixel baseline (offset by the sample id).
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub common: Common,
}

fn display<T: std::fmt::Display, S: serde::Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(v)
}

fn parse_shape(s: &str) -> Result<ImageShape, String> {
    let dims: Vec<usize> = s
        .split('x')
        .map(|d| d.trim().parse::<usize>().map_err(|e| format!("`{d}`: {e}")))
        .collect::<Result<_, _>>()?;
    match dims.as_slice() {
        [h, w] => Ok(ImageShape::grayscale(*h, *w)),
        [h, w, c] => Ok(ImageShape::new(*h, *w, *c)),
        _ => Err("expected HxW or HxWxC".into()),
    }
}

fn parse_activation(s: &str) -> Result<Activation, String> {
    s.parse().map_err(|e: fisens::Error| e.to_string())
}

fn parse_target(s: &str) -> Result<PerturbationTarget, String> {
    s.parse().map_err(|e: fisens::Error| e.to_string())
}

fn parse_objective(s: &str) -> Result<ObjectiveKind, String> {
    s.parse().map_err(|e: fisens::Error| e.to_string())
}

fn parse_measure(s: &str) -> Result<Measure, String> {
    s.parse().map_err(|e: fisens::Error| e.to_string())
}
