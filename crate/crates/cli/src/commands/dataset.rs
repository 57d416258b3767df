use hct_core::dataset::augment::{augment_geometric, augment_photometric, GeometricParams, PhotometricParams};
use hct_core::dataset::oversample::oversample_plan;
use hct_core::dataset::split::{stratified_split, InsufficientPolicy, SplitConfig, SplitPlan};
use hct_core::dataset::yolo::write_yolo;
use hct_core::dataset::{AnnotationRecord, TileRef};
use serde::Serialize;
use serde_json::json;

use super::{print_summary, read_labelled_dir, read_text, write_bytes};
use crate::args::DatasetCommand;
use crate::error::CliError;

pub fn run(command: DatasetCommand) -> Result<(), CliError> {
    match command {
        DatasetCommand::Split { data, out, folds, validation_fraction, seed, strict } => {
            let records = read_labelled_dir(&data.data, &data.id)?;
            let insufficient = if strict { InsufficientPolicy::Error } else { InsufficientPolicy::Warn };
            let plan = stratified_split(&records, &SplitConfig { folds, validation_fraction, seed, insufficient })?;
            for w in &plan.warnings {
                log::warn!("{w}");
            }
            write_bytes(&out, serde_json::to_string_pretty(&plan)?)?;
            print_summary(&json!({
                "records": records.len(),
                "folds": plan.folds.iter().map(|f| json!({"validation": f.validation.len(), "test": f.test.len()})).collect::<Vec<_>>(),
                "warnings": plan.warnings,
            }))
        }
        DatasetCommand::Augment { data, plan, fold, out, copies, seed } => {
            let records = read_labelled_dir(&data.data, &data.id)?;
            let plan: SplitPlan = serde_json::from_str(&read_text(&plan)?)?;
            if fold >= plan.folds.len() {
                return Err(CliError::Usage(format!("fold {fold} out of range, plan has {}", plan.folds.len())));
            }
            let view = plan.training(fold, &records);
            let mut log = String::new();
            let mut written = 0usize;
            for (i, record) in view.records().iter().enumerate() {
                let file = record.tile.file.as_deref().ok_or_else(|| CliError::Input(format!("{} has no image file", record.tile)))?;
                let image_path = data.data.join(file);
                let image = image::open(&image_path)?.to_rgb8();
                let stem = super::stem(std::path::Path::new(file));
                for k in 0..copies {
                    let copy_seed = seed ^ ((i as u64) << 20 | u64::from(k)).wrapping_mul(0x9E37_79B9_7F4A_7C15);
                    let geo = augment_geometric(&image, &record.boxes, &GeometricParams::default(), copy_seed)?;
                    let photo = augment_photometric(&geo.image, &geo.boxes, &PhotometricParams::default(), copy_seed.rotate_left(17));
                    let name = format!("{stem}_aug{k}");
                    let out_image = out.join("images").join(format!("{name}.png"));
                    if let Some(parent) = out_image.parent() {
                        std::fs::create_dir_all(parent).map_err(CliError::io(parent))?;
                    }
                    photo.image.save(&out_image)?;
                    let out_record = AnnotationRecord::new(TileRef::file(&data.id, format!("images/{name}.png")), photo.boxes);
                    write_bytes(&out.join("labels").join(format!("{name}.txt")), write_yolo(&out_record))?;
                    let ops: Vec<&String> = geo.ops.iter().chain(&photo.ops).collect();
                    log.push_str(&serde_json::to_string(&AugmentLogLine { source: &record.tile, output: &name, ops })?);
                    log.push('\n');
                    written += 1;
                }
            }
            write_bytes(&out.join("augment_log.jsonl"), log)?;
            print_summary(&json!({"fold": fold, "training_records": view.len(), "written": written}))
        }
        DatasetCommand::Oversample { table, seed, out } => {
            let groups = parse_table(&read_text(&table)?)?;
            let plan = oversample_plan(&groups, seed)?;
            let text = serde_json::to_string_pretty(&plan)?;
            match &out {
                Some(path) => write_bytes(path, text)?,
                None => println!("{text}"),
            }
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct AugmentLogLine<'a> {
    source: &'a TileRef,
    output: &'a str,
    ops: Vec<&'a String>,
}

fn parse_table(text: &str) -> Result<Vec<(String, u64, u64)>, CliError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (i == 0 && line.starts_with("name")) {
            continue;
        }
        let bad = || CliError::Input(format!("table line {}: expected `name,current,target`", i + 1));
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let [name, current, target] = fields[..] else { return Err(bad()) };
        out.push((name.to_string(), current.parse().map_err(|_| bad())?, target.parse().map_err(|_| bad())?));
    }
    Ok(out)
}
