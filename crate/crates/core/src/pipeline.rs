//! End-to-end run over one slide: stream grid tiles, gate them, detect cells
//! on accepted tiles and fold each tile's histogram into the IHCT until it
//! converges or the tile cap is hit.
//!
//! Tiles are read, scored and detected a chunk at a time in parallel, but
//! committed strictly in stream order, so the report does not depend on the
//! chunk size or thread count.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::backend::synthetic::{ConstantClassifier, ObjectDensityClassifier, PaletteDetector, SamplingDetector};
use crate::backend::{BackendError, DetectorBackend, TileClassifier};
use crate::dataset::TileRef;
use crate::detection::{detect_raw, diou_nms, Detection, DEFAULT_CONF_THRESH, DEFAULT_NMS_IOU};
use crate::reference::{HistogramSampler, REFERENCE_CLASS_WEIGHTS};
use crate::roi::{gate, score_tile, RoiDecision, DEFAULT_ROI_THRESHOLD};
use crate::stats::{ndc_report, ConvergenceCriteria, Hct, Ihct, NdcReport, StatsError};
use crate::wsi::{make_grid, SlideHandle, Tile, TileGrid, TileOrder, TileStream, WsiError};

pub const DEFAULT_MAX_TILES: usize = 600;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub rows: u32,
    pub cols: u32,
    pub tile_px: u32,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { rows: TileGrid::DEFAULT_ROWS, cols: TileGrid::DEFAULT_COLS, tile_px: TileGrid::DEFAULT_TILE_PX }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    pub conf_thresh: f64,
    pub nms_iou: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig { conf_thresh: DEFAULT_CONF_THRESH, nms_iou: DEFAULT_NMS_IOU }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceConfig {
    pub threshold: f64,
    pub patience: usize,
    pub max_tiles: usize,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        ConvergenceConfig {
            threshold: ConvergenceCriteria::DEFAULT_THRESHOLD,
            patience: ConvergenceCriteria::DEFAULT_PATIENCE,
            max_tiles: DEFAULT_MAX_TILES,
        }
    }
}

/// Where a model lives. `Http` is resolved by the caller (the core crate has
/// no network client); the rest are in-tree synthetic backends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BackendSpec {
    Http {
        url: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        timeout_ms: Option<u64>,
    },
    Constant { p: f64 },
    Density { saturation: f64, min_area: u32 },
    Palette { min_area: u32, duplicates: bool },
    Sampling { seed: u64, objects_per_tile: f64, weights: Option<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendsConfig {
    pub roi: BackendSpec,
    pub detector: BackendSpec,
}

impl Default for BackendsConfig {
    fn default() -> Self {
        let d = ObjectDensityClassifier::default();
        let p = PaletteDetector::default();
        BackendsConfig {
            roi: BackendSpec::Density { saturation: d.saturation, min_area: d.min_area },
            detector: BackendSpec::Palette { min_area: p.min_area, duplicates: p.duplicates },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub grid: GridConfig,
    pub order: TileOrder,
    pub roi_threshold: f64,
    pub detector: DetectorConfig,
    pub convergence: ConvergenceConfig,
    pub backends: BackendsConfig,
    /// Tiles read and inferred concurrently per step.
    pub chunk: usize,
    /// Largest tolerated fraction of streamed tiles that fail to read or infer.
    pub failure_tolerance: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            grid: GridConfig::default(),
            order: TileOrder::RowMajor,
            roi_threshold: DEFAULT_ROI_THRESHOLD,
            detector: DetectorConfig::default(),
            convergence: ConvergenceConfig::default(),
            backends: BackendsConfig::default(),
            chunk: 16,
            failure_tolerance: 0.05,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("{stage} backend unavailable: {source}")]
    BackendUnavailable { stage: &'static str, source: BackendError },
    #[error("{failed} of {streamed} tiles failed, above the tolerated fraction {tolerance}")]
    PartialRun { failed: usize, streamed: usize, tolerance: f64, record: Box<RunRecord> },
    #[error(transparent)]
    Wsi(#[from] WsiError),
    #[error("no countable cells: {0}")]
    Stats(#[from] StatsError),
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        let cfg: PipelineConfig = serde_json::from_str(text).map_err(|e| PipelineError::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::InvalidConfig(m));
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if self.grid.rows == 0 || self.grid.cols == 0 || self.grid.tile_px == 0 {
            return bad(format!("grid {}x{} tiles of {} px", self.grid.rows, self.grid.cols, self.grid.tile_px));
        }
        if !unit(self.roi_threshold) {
            return bad(format!("roi_threshold {} outside [0, 1]", self.roi_threshold));
        }
        if !unit(self.detector.conf_thresh) || !unit(self.detector.nms_iou) {
            return bad(format!("detector thresholds {:?} outside [0, 1]", self.detector));
        }
        let c = &self.convergence;
        if !(c.threshold > 0.0 && c.threshold.is_finite()) || c.patience == 0 || c.max_tiles == 0 {
            return bad(format!("convergence {c:?}: need threshold > 0, patience ≥ 1, max_tiles ≥ 1"));
        }
        if self.chunk == 0 {
            return bad("chunk must be ≥ 1".into());
        }
        if !unit(self.failure_tolerance) {
            return bad(format!("failure_tolerance {} outside [0, 1]", self.failure_tolerance));
        }
        Ok(())
    }

    pub fn criteria(&self) -> ConvergenceCriteria {
        ConvergenceCriteria { threshold: self.convergence.threshold, patience: self.convergence.patience }
    }
}

/// Build an in-tree classifier; `Ok(None)` for specs the caller must resolve.
pub fn synthetic_classifier(spec: &BackendSpec) -> Result<Option<Box<dyn TileClassifier>>, PipelineError> {
    Ok(match spec {
        BackendSpec::Http { .. } => None,
        BackendSpec::Constant { p } if (0.0..=1.0).contains(p) => Some(Box::new(ConstantClassifier { p: *p })),
        BackendSpec::Density { saturation, min_area } if *saturation > 0.0 => {
            Some(Box::new(ObjectDensityClassifier { saturation: *saturation, min_area: *min_area }))
        }
        other => return Err(PipelineError::InvalidConfig(format!("{other:?} is not a usable tile classifier"))),
    })
}

/// Build an in-tree detector; `Ok(None)` for specs the caller must resolve.
pub fn synthetic_detector(spec: &BackendSpec) -> Result<Option<Box<dyn DetectorBackend>>, PipelineError> {
    Ok(match spec {
        BackendSpec::Http { .. } => None,
        BackendSpec::Palette { min_area, duplicates } => Some(Box::new(PaletteDetector { min_area: *min_area, duplicates: *duplicates })),
        BackendSpec::Sampling { seed, objects_per_tile, weights } => {
            let w = weights.clone().unwrap_or_else(|| REFERENCE_CLASS_WEIGHTS.to_vec());
            let sampler = HistogramSampler::new(&w, *objects_per_tile)
                .ok_or_else(|| PipelineError::InvalidConfig(format!("sampling detector: bad weights or rate {objects_per_tile}")))?;
            Some(Box::new(SamplingDetector::new(sampler, *seed)))
        }
        other => return Err(PipelineError::InvalidConfig(format!("{other:?} is not a usable detector"))),
    })
}

/// Wall-clock seconds per stage. Stages run one after another within each
/// chunk, so their sum never exceeds `wall_s`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StageTimings {
    pub check_s: f64,
    pub extract_s: f64,
    pub score_s: f64,
    pub detect_s: f64,
    pub commit_s: f64,
    pub wall_s: f64,
}

impl StageTimings {
    pub fn stage_sum(&self) -> f64 {
        self.check_s + self.extract_s + self.score_s + self.detect_s + self.commit_s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Converged,
    MaxTiles,
    /// The grid ran out before convergence.
    Exhausted,
    PartialRun,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: PipelineConfig,
    pub slide_id: String,
    pub roi_backend: String,
    pub detector_backend: String,
    pub timings: StageTimings,
    /// Tiles consumed from the stream, in order, up to the stopping point.
    pub tiles_streamed: usize,
    pub tiles_gated: usize,
    /// Tiles folded into the IHCT.
    pub tiles_processed: usize,
    pub tiles_failed: usize,
    pub status: RunStatus,
    /// Where the report was written; filled in by the caller.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<String>,
}

#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub record: RunRecord,
    pub report: NdcReport,
    pub decisions: Vec<RoiDecision>,
    /// Post-NMS detections of every processed tile, in commit order.
    pub detections: Vec<Detection>,
}

enum TileOutcome {
    Failed(String),
    Rejected(RoiDecision),
    Accepted(RoiDecision, Vec<Detection>),
}

pub fn run_pipeline(
    config: &PipelineConfig,
    slide: &SlideHandle,
    roi: &dyn TileClassifier,
    detector: &dyn DetectorBackend,
) -> Result<PipelineRun, PipelineError> {
    let wall = Instant::now();
    config.validate()?;
    let mut timings = StageTimings::default();

    let t = Instant::now();
    roi.check_available().map_err(|source| PipelineError::BackendUnavailable { stage: "roi", source })?;
    detector.check_available().map_err(|source| PipelineError::BackendUnavailable { stage: "detector", source })?;
    timings.check_s = t.elapsed().as_secs_f64();

    let grid = make_grid(slide, config.grid.rows, config.grid.cols, config.grid.tile_px)?;
    let mut stream = TileStream::new(slide, &grid, config.order, config.chunk);
    let mut ihct = Ihct::new(config.criteria());
    let mut decisions = Vec::new();
    let mut detections = Vec::new();
    let (mut streamed, mut gated, mut failed) = (0usize, 0usize, 0usize);
    let mut status = RunStatus::Exhausted;

    'stream: while let Some(batch) = {
        let t = Instant::now();
        let b = stream.next_batch();
        timings.extract_s += t.elapsed().as_secs_f64();
        b
    } {
        let t = Instant::now();
        let scored: Vec<Result<RoiDecision, String>> = crate::par::map(&batch, |(_, tile)| match tile {
            Ok(tile) => score_tile(roi, tile).map(|s| gate(&s, config.roi_threshold)).map_err(|e| e.to_string()),
            Err(e) => Err(e.to_string()),
        });
        timings.score_s += t.elapsed().as_secs_f64();

        let t = Instant::now();
        let work: Vec<(Option<&Tile>, &Result<RoiDecision, String>)> = batch
            .iter()
            .zip(&scored)
            .map(|((_, tile), d)| (tile.as_ref().ok().filter(|_| d.as_ref().is_ok_and(|d| d.accepted)), d))
            .collect();
        let outcomes: Vec<TileOutcome> = crate::par::map(&work, |(tile, d)| match (tile, d) {
            (_, Err(e)) => TileOutcome::Failed(e.clone()),
            (None, Ok(d)) => TileOutcome::Rejected(d.clone()),
            (Some(tile), Ok(d)) => match detect_raw(detector, tile) {
                Ok(raw) => TileOutcome::Accepted(d.clone(), diou_nms(&raw, config.detector.conf_thresh, config.detector.nms_iou)),
                Err(e) => TileOutcome::Failed(e.to_string()),
            },
        });
        timings.detect_s += t.elapsed().as_secs_f64();

        let t = Instant::now();
        for ((coord, _), outcome) in batch.iter().zip(outcomes) {
            streamed += 1;
            match outcome {
                TileOutcome::Failed(e) => {
                    log::warn!("tile {coord} of {} failed: {e}", slide.id);
                    failed += 1;
                }
                TileOutcome::Rejected(d) => decisions.push(d),
                TileOutcome::Accepted(d, dets) => {
                    decisions.push(d);
                    gated += 1;
                    let hct = hct_from_detections_at(&dets, TileRef::grid(slide.id.clone(), *coord));
                    ihct.accumulate_forced(&hct);
                    detections.extend(dets);
                    if ihct.converged {
                        status = RunStatus::Converged;
                    } else if ihct.tiles_seen >= config.convergence.max_tiles {
                        status = RunStatus::MaxTiles;
                    }
                    if status != RunStatus::Exhausted {
                        timings.commit_s += t.elapsed().as_secs_f64();
                        break 'stream;
                    }
                }
            }
        }
        timings.commit_s += t.elapsed().as_secs_f64();
    }

    let mut record = RunRecord {
        config: config.clone(),
        slide_id: slide.id.clone(),
        roi_backend: roi.info().id(),
        detector_backend: detector.info().id(),
        timings,
        tiles_streamed: streamed,
        tiles_gated: gated,
        tiles_processed: ihct.tiles_seen,
        tiles_failed: failed,
        status,
        report: None,
    };
    record.timings.wall_s = wall.elapsed().as_secs_f64();
    if streamed > 0 && failed as f64 > config.failure_tolerance * streamed as f64 {
        record.status = RunStatus::PartialRun;
        return Err(PipelineError::PartialRun { failed, streamed, tolerance: config.failure_tolerance, record: Box::new(record) });
    }

    let mut report = ndc_report(&ihct, &slide.id)?;
    report.config = Some(serde_json::to_value(config).expect("config serializes"));
    log::info!(
        "{}: {:?} after {} tiles ({} streamed, {} failed)",
        slide.id,
        record.status,
        record.tiles_processed,
        streamed,
        failed
    );
    Ok(PipelineRun { record, report, decisions, detections })
}

fn hct_from_detections_at(dets: &[Detection], tile: TileRef) -> Hct {
    let mut hct = crate::stats::hct_from_detections(dets);
    hct.tile = Some(tile);
    hct
}
