mod al;
mod dataset;
mod eval;
mod process;
mod synth;

use std::fs;
use std::path::{Path, PathBuf};

use hct_core::dataset::yolo::read_yolo_file;
use hct_core::dataset::{AnnotationRecord, TileRef};
use serde::Serialize;

use crate::args::{Cli, Command};
use crate::error::CliError;

/// Run one command. Commands report a JSON summary on stdout.
pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Process(a) => process::run(a),
        Command::EvalRoi(a) => eval::roi(a),
        Command::EvalDet(a) => eval::detections(a),
        Command::Dataset(c) => dataset::run(c),
        Command::Al(c) => al::run(c),
        Command::ServeReview(a) => al::serve(a),
        Command::SynthSlide(a) => synth::run(a),
    }
}

pub(crate) fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(CliError::io(path))
}

pub(crate) fn write_bytes(path: &Path, data: impl AsRef<[u8]>) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(CliError::io(parent))?;
    }
    fs::write(path, data).map_err(CliError::io(path))
}

pub(crate) fn print_summary(value: &impl Serialize) -> Result<(), CliError> {
    println!("{}", serde_json::to_string(value)?);
    Ok(())
}

/// Files in `dir` with extension `ext`, sorted by name.
pub(crate) fn files_with_ext(dir: &Path, ext: &str) -> Result<Vec<PathBuf>, CliError> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(CliError::io(dir))? {
        let path = entry.map_err(CliError::io(dir))?.path();
        if path.extension().is_some_and(|e| e == ext) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

pub(crate) fn stem(path: &Path) -> String {
    path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string()
}

/// Labelled records of a `images/` + `labels/` directory, one per label file.
pub(crate) fn read_labelled_dir(data: &Path, id: &str) -> Result<Vec<AnnotationRecord>, CliError> {
    files_with_ext(&data.join("labels"), "txt")?
        .iter()
        .map(|p| Ok(read_yolo_file(p, TileRef::file(id, format!("images/{}.png", stem(p))))?))
        .collect()
}
