use std::path::Path;

use hct_core::dataset::yolo::write_yolo;
use hct_core::dataset::{AnnotatedBox, AnnotationRecord, BoxSource, TileRef};
use hct_core::pipeline::{run_pipeline, PipelineConfig, PipelineError, PipelineRun, RunRecord};
use hct_core::roi::write_decision_log;
use hct_core::wsi::{extract_tile, make_grid, open_slide, SlideHandle};
use serde_json::json;

use super::{print_summary, read_text, write_bytes};
use crate::args::ProcessArgs;
use crate::error::CliError;
use crate::http_backend::{apply_env_overrides, build_backends};

pub fn run(args: ProcessArgs) -> Result<(), CliError> {
    let mut config = match &args.config {
        Some(path) => PipelineConfig::from_json(&read_text(path)?)?,
        None => PipelineConfig::default(),
    };
    apply_env_overrides(&mut config, |k| std::env::var(k).ok());
    let slide = open_slide(&args.slide)?;
    let (roi, detector) = build_backends(&config)?;

    let run = match run_pipeline(&config, &slide, roi.as_ref(), detector.as_ref()) {
        Ok(run) => run,
        Err(PipelineError::PartialRun { failed, streamed, tolerance, record }) => {
            if let Some(path) = &args.record {
                write_record(path, &record)?;
            }
            return Err(PipelineError::PartialRun { failed, streamed, tolerance, record }.into());
        }
        Err(e) => return Err(e.into()),
    };

    write_bytes(&args.out, run.report.to_json())?;
    if let Some(path) = &args.csv {
        write_bytes(path, run.report.to_csv())?;
    }
    if let Some(path) = &args.decisions {
        let mut buf = Vec::new();
        write_decision_log(&mut buf, &run.decisions).map_err(CliError::io(path))?;
        write_bytes(path, buf)?;
    }
    if let Some(dir) = &args.pool {
        write_pool(dir, &config, &slide, &run)?;
    }
    let mut record = run.record.clone();
    record.report = Some(args.out.display().to_string());
    if let Some(path) = &args.record {
        write_record(path, &record)?;
    }
    print_summary(&json!({
        "slide_id": record.slide_id,
        "status": record.status,
        "tiles_streamed": record.tiles_streamed,
        "tiles_processed": record.tiles_processed,
        "cells_counted": run.report.cells_counted,
        "converged": run.report.converged,
        "report": args.out,
    }))
}

fn write_record(path: &Path, record: &RunRecord) -> Result<(), CliError> {
    write_bytes(path, serde_json::to_string_pretty(record)?)
}

/// Accepted tiles as `images/<key>.png` plus `predictions/<key>.txt`, the
/// layout `al query` reads.
fn write_pool(dir: &Path, config: &PipelineConfig, slide: &SlideHandle, run: &PipelineRun) -> Result<(), CliError> {
    let grid = make_grid(slide, config.grid.rows, config.grid.cols, config.grid.tile_px)?;
    for decision in run.decisions.iter().filter(|d| d.accepted) {
        let tile = TileRef::grid(slide.id.clone(), decision.coord);
        let boxes = run
            .detections
            .iter()
            .filter(|d| d.tile == tile)
            .map(|d| AnnotatedBox { bbox: d.bbox, cls: d.cls, source: BoxSource::Model, confidence: Some(d.confidence) })
            .collect();
        let key = tile.key();
        let pixels = extract_tile(slide, &grid, decision.coord)?.pixels;
        let image_path = dir.join("images").join(format!("{key}.png"));
        if let Some(parent) = image_path.parent() {
            std::fs::create_dir_all(parent).map_err(CliError::io(parent))?;
        }
        pixels.save(&image_path)?;
        let record = AnnotationRecord::new(tile, boxes);
        write_bytes(&dir.join("predictions").join(format!("{key}.txt")), write_yolo(&record))?;
    }
    Ok(())
}
