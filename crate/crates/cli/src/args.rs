//! Command-line argument definitions.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(
    name = "trackpipe",
    version,
    about = "Track-extraction pipeline over a synthetic scene simulator: \
             dataset generation, scorer training, greedy speed/accuracy \
             tuning, execution, evaluation and queries"
)]
pub struct Cli {
    /// Worker threads for clip-level parallelism (0 = all cores). Output
    /// is identical regardless of this setting.
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic dataset from a scene spec file.
    Generate(GenerateArgs),
    /// Search for the best-accuracy configuration on a validation set.
    SelectBest(SelectBestArgs),
    /// Train the match scorer on the best configuration's tracks.
    TrainScorer(TrainScorerArgs),
    /// Build window sizes, refinement references and tuning caches.
    Cache(CacheArgs),
    /// Run the greedy tuner and emit the speed/accuracy curve.
    Tune(TuneArgs),
    /// Execute one configuration over a dataset and extract tracks.
    Pipeline(PipelineArgs),
    /// Endpoint refinement utilities.
    #[command(subcommand)]
    Refine(RefineCommand),
    /// Window-plan inspection.
    #[command(subcommand)]
    Plan(PlanCommand),
    /// Evaluate count accuracy of extracted tracks against labels.
    Eval(EvalArgs),
    /// Post-track queries.
    #[command(subcommand)]
    Query(QueryCommand),
}

#[derive(Subcommand, Debug)]
pub enum RefineCommand {
    /// Refine the endpoints of previously extracted tracks.
    Run(RefineRunArgs),
    /// Dump the reference clusters and spatial index.
    Inspect(RefineInspectArgs),
}

#[derive(Subcommand, Debug)]
pub enum PlanCommand {
    /// Dump the window plan for one frame at a proxy setting.
    Dump(PlanDumpArgs),
}

#[derive(Subcommand, Debug)]
pub enum QueryCommand {
    /// Frames with at least N in-region detections, ranked by minimum
    /// track duration, spaced and limited.
    Limit(QueryLimitArgs),
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    /// Scene spec JSON.
    #[arg(long)]
    pub spec: PathBuf,
    /// Output dataset JSON.
    #[arg(long)]
    pub out: PathBuf,
    /// Override the spec's rng_seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write the per-clip pattern count labels.
    #[arg(long)]
    pub labels_out: Option<PathBuf>,
    /// Also write the spatial pattern polygons.
    #[arg(long)]
    pub patterns_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SelectBestArgs {
    /// Validation dataset JSON.
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub patterns: PathBuf,
    /// Simulator profile (cost model + noise); defaults to the built-in
    /// profile for the dataset's frame size.
    #[arg(long)]
    pub cost: Option<PathBuf>,
    /// Simulation noise seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Detector confidence threshold carried by every configuration.
    #[arg(long, default_value_t = 0.25)]
    pub confidence: f64,
    /// Largest sampling gap considered (power of two).
    #[arg(long, default_value_t = 16)]
    pub max_gap: u32,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainScorerArgs {
    /// Training dataset JSON.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Best-accuracy configuration file from `select-best`.
    #[arg(long)]
    pub theta: PathBuf,
    #[arg(long)]
    pub cost: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Training examples to sample.
    #[arg(long, default_value_t = 4000)]
    pub examples: usize,
    #[arg(long, default_value_t = 16)]
    pub max_gap: u32,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct CacheArgs {
    /// Training dataset JSON (window sizes + refinement references).
    #[arg(long)]
    pub train: PathBuf,
    /// Validation dataset JSON (detection grid + proxy ladder).
    #[arg(long)]
    pub val: PathBuf,
    #[arg(long)]
    pub theta: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub patterns: PathBuf,
    #[arg(long)]
    pub cost: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Cardinality of the fixed window-size set.
    #[arg(long, default_value_t = 3)]
    pub window_sizes: usize,
    /// Training frames sampled for window-size selection.
    #[arg(long, default_value_t = 400)]
    pub max_frames: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TuneArgs {
    /// Validation dataset JSON.
    #[arg(long)]
    pub val: PathBuf,
    /// Caches file from `cache`.
    #[arg(long)]
    pub caches: PathBuf,
    /// Scorer file from `train-scorer`.
    #[arg(long)]
    pub scorer: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub patterns: PathBuf,
    #[arg(long)]
    pub cost: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Per-step speedup target S.
    #[arg(long, default_value_t = 0.30)]
    pub speedup: f64,
    #[arg(long, default_value_t = 32)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 16)]
    pub max_gap: u32,
    /// Curve JSON output.
    #[arg(long)]
    pub out: PathBuf,
    /// Optional curve CSV output (runtime, accuracy, config_id).
    #[arg(long)]
    pub csv_out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct PipelineArgs {
    /// Dataset to execute over.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Curve file plus --config-id selecting the point to run.
    #[arg(long)]
    pub curve: Option<PathBuf>,
    #[arg(long)]
    pub config_id: Option<String>,
    /// Alternatively, run the best-accuracy configuration directly.
    #[arg(long)]
    pub theta: Option<PathBuf>,
    /// Caches file (window sizes + refinement references).
    #[arg(long)]
    pub caches: Option<PathBuf>,
    /// Scorer file; required for learned-tracker configurations.
    #[arg(long)]
    pub scorer: Option<PathBuf>,
    #[arg(long)]
    pub cost: Option<PathBuf>,
    /// Manifest supplying any of the above paths (flags win).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Skip endpoint refinement even when references are available.
    #[arg(long, default_value_t = false)]
    pub no_refine: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct RefineRunArgs {
    /// Tracks file from `pipeline`.
    #[arg(long)]
    pub tracks: PathBuf,
    /// Caches file with the reference clusters.
    #[arg(long)]
    pub caches: PathBuf,
    /// Cluster-center multiplicity kept per refinement.
    #[arg(long, default_value_t = 10)]
    pub k_neighbors: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct RefineInspectArgs {
    #[arg(long)]
    pub caches: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output path; prints to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PlanDumpArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub caches: PathBuf,
    #[arg(long)]
    pub cost: Option<PathBuf>,
    #[arg(long)]
    pub clip: u32,
    #[arg(long)]
    pub frame: u32,
    /// Proxy resolution level.
    #[arg(long)]
    pub level: u32,
    #[arg(long)]
    pub b_proxy: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub tracks: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub patterns: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct QueryLimitArgs {
    #[arg(long)]
    pub tracks: PathBuf,
    /// Region polygon JSON: [[x, y], ...].
    #[arg(long)]
    pub region: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub min_count: usize,
    /// Minimum spacing between returned frames, in frames.
    #[arg(long, default_value_t = 50)]
    pub spacing: u32,
    #[arg(long, default_value_t = 20)]
    pub limit: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}
