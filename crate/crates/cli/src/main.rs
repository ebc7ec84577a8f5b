mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sparsescene::ingest::{DEFAULT_ATTRIBUTE_IOU, DEFAULT_NMS_IOU, DEFAULT_SCORE_THRESHOLD};
use sparsescene::scene::DEFAULT_CONTAINMENT;

#[derive(Debug, Parser)]
#[command(name = "sparsescene", version, about = "Sparse scene ingestion, rasterization, style tools and verification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Detector output to scene JSON.
    Ingest(IngestArgs),
    /// Paint a scene into a label map.
    Raster(RasterArgs),
    /// Run the numerical checks and print a JSON report.
    Verify(VerifyArgs),
    /// Fit per-class attribute-set frequencies over scenes.
    FitDist(FitArgs),
    /// Resample instance attributes from a fitted distribution.
    Sample(SampleArgs),
    /// Preview frames slerped between two captions.
    Interpolate(InterpolateArgs),
    /// Render one toy-generator preview.
    Preview(PreviewArgs),
    /// Encode a caption with the deterministic stand-in encoder.
    EncodeTokens(EncodeArgs),
    /// Write a freshly initialized toy-generator checkpoint.
    InitWeights(InitArgs),
}

#[derive(Debug, Args)]
pub struct VocabArg {
    /// Vocabulary JSON: {"classes": [...], "attributes": [...]}.
    #[arg(long)]
    pub vocab: PathBuf,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Detection files.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[command(flatten)]
    pub vocab: VocabArg,
    /// Alias map JSON {"alias": "class"}.
    #[arg(long)]
    pub aliases: Option<PathBuf>,
    /// Attribute regions JSON (single input only).
    #[arg(long)]
    pub regions: Option<PathBuf>,
    /// Output file, or directory when several inputs are given
    /// (written as <stem>.scene.json).
    #[arg(long, short)]
    pub out: PathBuf,
    /// Detector score threshold, in [0, 1].
    #[arg(long, default_value_t = DEFAULT_SCORE_THRESHOLD)]
    pub score: f64,
    /// Mask IoU above which detections are duplicates, in (0, 1].
    #[arg(long, default_value_t = DEFAULT_NMS_IOU)]
    pub nms_iou: f64,
    /// Box IoU above which attribute regions link, in [0, 1).
    #[arg(long, default_value_t = DEFAULT_ATTRIBUTE_IOU)]
    pub attr_iou: f64,
    /// Pixel containment ratio for parent links, in (0, 1].
    #[arg(long, default_value_t = DEFAULT_CONTAINMENT)]
    pub containment: f64,
    /// Files processed in parallel.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct RasterArgs {
    pub scene: PathBuf,
    #[command(flatten)]
    pub vocab: VocabArg,
    #[arg(long, short)]
    pub out: PathBuf,
    /// class, instance, bg or fg.
    #[arg(long, default_value = "class")]
    pub kind: String,
    /// Longer output side in pixels (canvas size if omitted).
    #[arg(long)]
    pub res: Option<u32>,
    /// png or raw.
    #[arg(long, default_value = "png")]
    pub format: String,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// grads, attention, blend, raster or all.
    #[arg(long, default_value = "all")]
    pub suite: String,
    /// Checkpoint to include in the gradient suite.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Random instances per gradient check.
    #[arg(long, default_value_t = 5)]
    pub instances: usize,
    /// Also write the report here.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(required = true)]
    pub scenes: Vec<PathBuf>,
    #[command(flatten)]
    pub vocab: VocabArg,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    pub scene: PathBuf,
    #[command(flatten)]
    pub vocab: VocabArg,
    #[arg(long)]
    pub dist: PathBuf,
    /// coherent_bg_random_fg, all_random or all_coherent.
    #[arg(long, default_value = "coherent_bg_random_fg")]
    pub strategy: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct WeightsArg {
    /// Toy-generator checkpoint; initialized from --seed if omitted.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct InterpolateArgs {
    pub scene: PathBuf,
    #[command(flatten)]
    pub vocab: VocabArg,
    /// Token file of the first caption.
    #[arg(long)]
    pub from: PathBuf,
    /// Token file of the second caption.
    #[arg(long)]
    pub to: PathBuf,
    /// Number of frames, endpoints included (≥ 2).
    #[arg(long, default_value_t = 8)]
    pub steps: usize,
    #[command(flatten)]
    pub weights: WeightsArg,
    #[arg(long, default_value_t = 64)]
    pub res: u32,
    /// Directory for frame_NNN.png.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct PreviewArgs {
    pub scene: PathBuf,
    #[command(flatten)]
    pub vocab: VocabArg,
    /// plain, attributes or tokens.
    #[arg(long, default_value = "attributes")]
    pub style: String,
    /// Token file for --style tokens.
    #[arg(long)]
    pub tokens: Option<PathBuf>,
    #[command(flatten)]
    pub weights: WeightsArg,
    #[arg(long, default_value_t = 64)]
    pub res: u32,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    /// Caption text.
    pub text: String,
    #[arg(long, default_value_t = sparsescene::condkernel::tokens::DEFAULT_D_LM)]
    pub d_lm: usize,
    /// Write the JSON form instead of binary.
    #[arg(long)]
    pub json: bool,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct InitArgs {
    #[command(flatten)]
    pub vocab: VocabArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 8)]
    pub channels: usize,
    #[arg(long, default_value_t = sparsescene::condkernel::norm::DEFAULT_MID_CHANNELS)]
    pub mid: usize,
    /// 6 or 12.
    #[arg(long, default_value_t = 6)]
    pub heads: usize,
    #[arg(long, default_value_t = sparsescene::condkernel::tokens::DEFAULT_D_LM)]
    pub d_lm: usize,
    #[arg(long, short)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
