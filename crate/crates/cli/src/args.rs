use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "slicetopo",
    version,
    about = "Slicing-based topological descriptors and occlusion-aware object recognition"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render training views, occluded probes and cluttered test sequences.
    GenData(GenDataArgs),
    /// Train a model library from generated data.
    Train(TrainArgs),
    /// Recognize every object of a depth scene.
    Recognize(RecognizeArgs),
    /// Cross-validate recognition on generated data.
    Evaluate(EvaluateArgs),
    /// Check union-find persistence against the brute-force oracle.
    Oracle(OracleArgs),
    /// Draw a descriptor or a persistence diagram as PNG.
    Plot(PlotArgs),
    /// Compute the descriptor of a point cloud file.
    Describe(DescribeArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// Override a setting (`key=value`) or read overrides from a file.
    #[arg(long = "config", value_name = "KEY=VALUE|FILE")]
    pub config: Vec<String>,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_parser = ["cuboidal", "curved", "mixed"])]
    pub suite: String,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Slice thickness.
    #[arg(long)]
    pub sigma1: Option<f64>,
    /// Column width.
    #[arg(long)]
    pub sigma2: Option<f64>,
    /// Rotation about y in degrees.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Persistence image grid, `N` or `RxC`.
    #[arg(long)]
    pub pi_grid: Option<String>,
    #[arg(long)]
    pub pi_bandwidth: Option<f64>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct RecognizeArgs {
    #[arg(long)]
    pub lib: PathBuf,
    /// A rendered `.depth` scene, or a `.scene` description to render.
    #[arg(long)]
    pub scene: PathBuf,
    /// JSON-lines output; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub lib: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Text report; the JSON form goes next to it with a `.json` extension.
    #[arg(long)]
    pub report: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long, default_value_t = 1000)]
    pub n_trials: u64,
    #[arg(long, default_value_t = 12)]
    pub max_points: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Swap in the broken elder rule to check that mismatches are caught.
    #[arg(long, hide = true)]
    pub mutate: bool,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("input").required(true).args(["descriptor", "diagram"])))]
pub struct PlotArgs {
    #[arg(long)]
    pub descriptor: Option<PathBuf>,
    #[arg(long)]
    pub diagram: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Persistence image grid of the descriptor, `N` or `RxC`; square by
    /// default.
    #[arg(long)]
    pub grid: Option<String>,
}

#[derive(Debug, Args)]
pub struct DescribeArgs {
    /// Camera-frame cloud, one `x y z` per line.
    #[arg(long)]
    pub cloud: PathBuf,
    /// Take slicing and image parameters from this library; otherwise the
    /// image ranges are fitted to the cloud itself.
    #[arg(long)]
    pub lib: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write each slice's persistence diagram into this directory.
    #[arg(long)]
    pub diagrams: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
}
