use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dncm::benchkit::{Method, SweepVariable, TestMix};
use dncm::datakit::{SplitSpec, SyntheticSpec};
use dncm::ncm_head::DistanceMetric;
use dncm::seeding::derive_seed;
use dncm::trainer::TrainingConfig;

/// Stream indices passed to `derive_seed` with the global `--seed`.
pub mod stream {
    pub const DATA: u64 = 0;
    pub const SPLIT: u64 = 1;
    pub const INIT: u64 = 2;
    pub const SHUFFLE: u64 = 3;
    pub const TRIALS: u64 = 4;
}

#[derive(Debug, Parser)]
#[command(
    name = "dncm",
    version,
    about = "Deep nearest-class-mean incremental classifier",
    after_help = "All randomness derives from --seed: data, split, weight init, \
                  minibatch shuffle and sweep trials each use their own derived stream."
)]
pub struct Cli {
    /// Global seed.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic initial and incremental dataset CSVs.
    GenData(GenDataArgs),
    /// Train the extractor and class means on a dataset CSV.
    Train(TrainArgs),
    /// Fold new samples into a trained model's class means.
    Update(UpdateArgs),
    /// Score a model on a labelled CSV.
    Eval(EvalArgs),
    /// Run an accuracy/latency sweep against the KNN and raw NCM baselines.
    Bench(BenchArgs),
    /// Project a dataset onto its first two principal components.
    Project(ProjectArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SyntheticArgs {
    /// Number of initial classes.
    #[arg(long = "classes", default_value_t = 10)]
    pub num_classes: usize,
    /// Number of incremental classes written to the incremental CSV.
    #[arg(long = "new-classes", default_value_t = 25)]
    pub new_classes: usize,
    /// Samples per class.
    #[arg(long = "per-class", default_value_t = 500)]
    pub samples_per_class: usize,
    #[arg(long, default_value_t = 10)]
    pub feature_dim: usize,
    /// Class centers are uniform in [-scale, scale]^dim.
    #[arg(long, default_value_t = 1.0)]
    pub center_scale: f64,
    #[arg(long, default_value_t = 0.1)]
    pub noise_sigma: f64,
    /// Additive drift per sample index along a shared direction.
    #[arg(long, default_value_t = 0.01)]
    pub drift_slope: f64,
}

impl SyntheticArgs {
    /// Spec covering initial and incremental classes; labels of incremental
    /// classes follow the initial ones.
    pub fn spec(&self, seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            num_classes: self.num_classes + self.new_classes,
            samples_per_class: self.samples_per_class,
            feature_dim: self.feature_dim,
            center_scale: self.center_scale,
            noise_sigma: self.noise_sigma,
            drift_slope: self.drift_slope,
            first_label: 0,
            seed: derive_seed(seed, stream::DATA),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricArg {
    Euclidean,
    SquaredEuclidean,
}

impl From<MetricArg> for DistanceMetric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Euclidean => DistanceMetric::Euclidean,
            MetricArg::SquaredEuclidean => DistanceMetric::SquaredEuclidean,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct TrainingArgs {
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    #[arg(long, default_value_t = 0.001)]
    pub learning_rate: f64,
    /// Multiplier applied to the learning rate every decay period.
    #[arg(long, default_value_t = 0.5)]
    pub lr_decay_factor: f64,
    #[arg(long, default_value_t = 15)]
    pub lr_decay_every_epochs: usize,
    #[arg(long, default_value_t = 50)]
    pub max_epoch: usize,
    #[arg(long, value_enum, default_value_t = MetricArg::Euclidean)]
    pub metric: MetricArg,
    /// Layer widths of the extractor; the last is the feature dimension.
    #[arg(long, value_delimiter = ',', default_value = "64,32,20")]
    pub hidden_widths: Vec<usize>,
    /// Train without bias terms.
    #[arg(long)]
    pub no_bias: bool,
    #[arg(long, default_value_t = 0.7)]
    pub train_fraction: f64,
    #[arg(long, default_value_t = 0.1)]
    pub validation_fraction: f64,
    #[arg(long, default_value_t = 0.2)]
    pub test_fraction: f64,
}

impl TrainingArgs {
    pub fn config(&self, seed: u64) -> TrainingConfig {
        TrainingConfig {
            batch_size: self.batch_size,
            momentum: self.momentum,
            learning_rate: self.learning_rate,
            lr_decay_factor: self.lr_decay_factor,
            lr_decay_every_epochs: self.lr_decay_every_epochs,
            max_epoch: self.max_epoch,
            shuffle_seed: derive_seed(seed, stream::SHUFFLE),
            metric: self.metric.into(),
            hidden_widths: self.hidden_widths.clone(),
            bias_enabled: !self.no_bias,
        }
    }

    pub fn split(&self, seed: u64) -> SplitSpec {
        SplitSpec {
            train: self.train_fraction,
            validation: self.validation_fraction,
            test: self.test_fraction,
            seed: derive_seed(seed, stream::SPLIT),
        }
    }
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[command(flatten)]
    pub synthetic: SyntheticArgs,
    /// Directory receiving initial.csv and incremental.csv.
    #[arg(long, default_value = "data")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset CSV; it is split into train/validation/test.
    #[arg(long)]
    pub data: PathBuf,
    /// Model directory to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-epoch report CSV [default: <out>/train_report.csv].
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Also write train.csv, validation.csv and test.csv here.
    #[arg(long)]
    pub split_dir: Option<PathBuf>,
    #[command(flatten)]
    pub training: TrainingArgs,
}

#[derive(Debug, Args)]
pub struct UpdateArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// CSV of samples to fold in, in file order.
    #[arg(long)]
    pub data: PathBuf,
    /// Output model directory [default: overwrite --model].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Emit a per-class accuracy CSV.
    #[arg(long)]
    pub per_class: bool,
    /// Where to write the per-class CSV [default: stdout].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepArg {
    NewClasses,
    Samples,
    InitialClasses,
}

impl SweepArg {
    pub fn variable(self) -> SweepVariable {
        match self {
            SweepArg::NewClasses => SweepVariable::NewClassCount,
            SweepArg::Samples => SweepVariable::SamplesPerNewClass,
            SweepArg::InitialClasses => SweepVariable::InitialClassCount,
        }
    }

    pub fn default_values(self) -> Vec<usize> {
        match self {
            SweepArg::NewClasses => vec![5, 10, 15, 20, 25],
            SweepArg::Samples => (3..=10).collect(),
            SweepArg::InitialClasses => vec![2, 4, 8, 10],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Dncm,
    Knn,
    RawNcm,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Dncm => Method::Dncm,
            MethodArg::Knn => Method::Knn,
            MethodArg::RawNcm => Method::RawNcm,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TestMixArg {
    Joint,
    NewOnly,
}

impl From<TestMixArg> for TestMix {
    fn from(m: TestMixArg) -> Self {
        match m {
            TestMixArg::Joint => TestMix::Joint,
            TestMixArg::NewOnly => TestMix::NewOnly,
        }
    }
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_enum)]
    pub sweep: SweepArg,
    /// Sweep values [default: 5,10,15,20,25 | 3..10 | 2,4,8,10].
    #[arg(long, value_delimiter = ',')]
    pub values: Vec<usize>,
    #[arg(long, default_value_t = 30)]
    pub trials: usize,
    #[arg(long, default_value_t = 20)]
    pub train_samples_per_new_class: usize,
    /// New-class counts evaluated per initial-class count [default: whole pool].
    #[arg(long, value_delimiter = ',')]
    pub new_class_values: Vec<usize>,
    #[arg(
        long,
        value_enum,
        value_delimiter = ',',
        default_value = "dncm,knn,raw-ncm"
    )]
    pub methods: Vec<MethodArg>,
    /// Score the initial classes too (joint) or only integrated new ones.
    #[arg(long, value_enum, default_value_t = TestMixArg::Joint)]
    pub test_mix: TestMixArg,
    /// Fixed KNN k [default: chosen from 1,3,5,7,9 on the validation split].
    #[arg(long)]
    pub knn_k: Option<usize>,
    #[arg(long, default_value_t = dncm::benchkit::DEFAULT_MIN_TEST_PER_CLASS)]
    pub min_test_per_class: usize,
    #[arg(long, default_value_t = 200)]
    pub latency_queries: usize,
    #[arg(long, default_value_t = 3)]
    pub latency_repetitions: usize,
    /// Initial-class CSV [default: generated from the synthetic flags].
    #[arg(long, requires = "incremental")]
    pub initial: Option<PathBuf>,
    /// Incremental-class CSV.
    #[arg(long, requires = "initial")]
    pub incremental: Option<PathBuf>,
    /// Also write a per-class accuracy table over all new classes.
    #[arg(long)]
    pub class_table: bool,
    #[arg(long, default_value = "results")]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub synthetic: SyntheticArgs,
    #[command(flatten)]
    pub training: TrainingArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Space {
    /// Input features as stored in the CSV.
    Raw,
    /// Extractor output of a trained model.
    Feature,
}

#[derive(Debug, Args)]
pub struct ProjectArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = Space::Raw)]
    pub space: Space,
    /// Model directory; required for --space feature.
    #[arg(long, required_if_eq("space", "feature"))]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}
