use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hct_core::dataset::active::DEFAULT_QUERY_BATCH;
use hct_core::eval::DEFAULT_IOU_THRESHOLD;
use hct_core::roi::DEFAULT_ROI_THRESHOLD;

#[derive(Debug, Parser)]
#[command(name = "hct", version, about = "Whole-slide bone marrow cytology: cell counting, evaluation and dataset tools")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Stream a slide through ROI gating and detection until the cell-type histogram converges.
    Process(ProcessArgs),
    /// Score ROI gate outputs against tile labels.
    EvalRoi(EvalRoiArgs),
    /// Score detections against ground-truth boxes.
    EvalDet(EvalDetArgs),
    /// Training-set preparation.
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Active-learning loop over a dataset manifest.
    #[command(subcommand)]
    Al(AlCommand),
    /// Serve a review package over HTTP.
    ServeReview(ServeReviewArgs),
    /// Render a synthetic slide to a tiled TIFF or a manifest directory.
    SynthSlide(SynthSlideArgs),
}

#[derive(Debug, Args)]
pub struct ProcessArgs {
    /// Slide path (manifest directory, manifest JSON, TIFF) or `synthetic://<seed>?...`.
    #[arg(long)]
    pub slide: String,
    /// Pipeline config JSON; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Report JSON.
    #[arg(long)]
    pub out: PathBuf,
    /// Report CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Run record JSON (config, backends, timings, status); written even for partial runs.
    #[arg(long)]
    pub record: Option<PathBuf>,
    /// ROI decision log, one JSON object per line.
    #[arg(long)]
    pub decisions: Option<PathBuf>,
    /// Write accepted tiles and their detections as a prediction pool.
    #[arg(long)]
    pub pool: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalRoiArgs {
    /// CSV with columns `p,label[,fold]`; label is 1 for suitable tiles.
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long, default_value_t = DEFAULT_ROI_THRESHOLD)]
    pub threshold: f64,
    /// FPR grid size for the fold-averaged ROC.
    #[arg(long, default_value_t = 101)]
    pub grid: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LabelFormat {
    Yolo,
    Voc,
}

impl LabelFormat {
    pub fn extension(self) -> &'static str {
        match self {
            LabelFormat::Yolo => "txt",
            LabelFormat::Voc => "xml",
        }
    }
}

#[derive(Debug, Args)]
pub struct EvalDetArgs {
    /// Directory of prediction files (with confidences).
    #[arg(long)]
    pub pred: PathBuf,
    /// Directory of ground-truth files, matched to predictions by file stem.
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long, default_value_t = DEFAULT_IOU_THRESHOLD)]
    pub iou: f64,
    #[arg(long, value_enum, default_value_t = LabelFormat::Yolo)]
    pub format: LabelFormat,
    /// Per-class table CSV; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Class-agnostic confusion matrix CSV.
    #[arg(long)]
    pub confusion: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DataDir {
    /// Directory with `images/<stem>.png` and `labels/<stem>.txt` (YOLO).
    #[arg(long)]
    pub data: PathBuf,
    /// Source id recorded in tile references.
    #[arg(long, default_value = "dataset")]
    pub id: String,
}

#[derive(Debug, Subcommand)]
pub enum DatasetCommand {
    /// Stratified k-fold split with validation/test partitions.
    Split {
        #[command(flatten)]
        data: DataDir,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        #[arg(long, default_value_t = 0.7)]
        validation_fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Fail instead of warning when a stratum is smaller than the fold count.
        #[arg(long)]
        strict: bool,
    },
    /// Geometric and photometric copies of one fold's training records.
    Augment {
        #[command(flatten)]
        data: DataDir,
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        fold: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        copies: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Replication schedule from a `name,current,target` table.
    Oversample {
        #[arg(long)]
        table: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum AlCommand {
    /// Create a manifest from an annotated directory.
    Init {
        #[command(flatten)]
        data: DataDir,
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Pick rare-class tiles from a prediction pool and export them for review.
    Query {
        /// Directory with `images/*.png` and `predictions/*.txt`.
        #[arg(long)]
        pool: PathBuf,
        #[arg(long, default_value = "pool")]
        pool_id: String,
        #[arg(long)]
        manifest: PathBuf,
        /// Review package directory to create.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_QUERY_BATCH)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write the manifest's labels in a training format.
    Export {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = LabelFormat::Yolo)]
        format: LabelFormat,
        /// Tile side in pixels, for formats with absolute coordinates.
        #[arg(long, default_value_t = 512)]
        tile_px: u32,
    },
    /// Merge confirmed corrections from a review package into the manifest.
    Merge {
        #[arg(long)]
        package: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        timestamp: Option<String>,
    },
}

#[derive(Debug, Args)]
pub struct ServeReviewArgs {
    #[arg(long)]
    pub package: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
}

#[derive(Debug, Args)]
pub struct SynthSlideArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// `.tif`/`.tiff` writes a tiled TIFF; anything else a manifest directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 10240)]
    pub width: u32,
    #[arg(long, default_value_t = 7680)]
    pub height: u32,
    /// Fraction of patches with a suitable background.
    #[arg(long)]
    pub roi: Option<f64>,
    #[arg(long)]
    pub occupancy: Option<f64>,
    #[arg(long, default_value_t = 512)]
    pub tile_px: u32,
}
