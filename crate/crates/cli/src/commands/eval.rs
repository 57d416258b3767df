use std::collections::BTreeMap;
use std::path::Path;

use hct_core::dataset::voc::parse_voc;
use hct_core::dataset::yolo::parse_yolo;
use hct_core::dataset::{AnnotationRecord, TileRef};
use hct_core::detection::annotations_to_detections;
use hct_core::eval::{
    binary_metrics, confusion_matrix, evaluate_detections, mean_roc, roc_auc, BinaryConfusion, BinaryMetrics, MeanRoc,
};
use hct_core::taxonomy::CellClass;
use serde::Serialize;

use super::{files_with_ext, print_summary, read_text, stem, write_bytes};
use crate::args::{EvalDetArgs, EvalRoiArgs, LabelFormat};
use crate::error::CliError;

#[derive(Debug, Serialize)]
struct FoldSummary {
    fold: String,
    tiles: usize,
    confusion: BinaryConfusion,
    metrics: BinaryMetrics,
    auc: Option<f64>,
}

#[derive(Debug, Serialize)]
struct RoiEvaluation {
    threshold: f64,
    pooled: FoldSummary,
    folds: Vec<FoldSummary>,
    mean_roc: Option<MeanRoc>,
}

struct ScoreRow {
    p: f64,
    label: bool,
    fold: Option<String>,
}

fn parse_scores(text: &str) -> Result<Vec<ScoreRow>, CliError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| CliError::Input("empty scores file".into()))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let col = |name: &str| cols.iter().position(|c| *c == name);
    let (p_col, label_col) = match (col("p"), col("label")) {
        (Some(p), Some(l)) => (p, l),
        _ => return Err(CliError::Input(format!("scores header needs `p` and `label`, found `{header}`"))),
    };
    let fold_col = col("fold");
    let mut rows = Vec::new();
    for (i, line) in lines {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let bad = |m: &str| CliError::Input(format!("scores line {}: {m}", i + 1));
        let get = |c: usize| fields.get(c).copied().ok_or_else(|| bad("missing column"));
        let p: f64 = get(p_col)?.parse().map_err(|_| bad("bad score"))?;
        if !(0.0..=1.0).contains(&p) {
            return Err(bad("score outside [0, 1]"));
        }
        let label = match get(label_col)? {
            "1" | "true" => true,
            "0" | "false" => false,
            _ => return Err(bad("label must be 0 or 1")),
        };
        let fold = fold_col.map(get).transpose()?.map(str::to_string);
        rows.push(ScoreRow { p, label, fold });
    }
    Ok(rows)
}

fn summarize(fold: &str, rows: &[&ScoreRow], threshold: f64) -> Result<(FoldSummary, Option<hct_core::eval::RocCurve>), CliError> {
    let mut c = BinaryConfusion::default();
    for r in rows {
        match (r.p >= threshold, r.label) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    let scored: Vec<(f64, bool)> = rows.iter().map(|r| (r.p, r.label)).collect();
    let curve = roc_auc(&scored).ok();
    let summary = FoldSummary {
        fold: fold.to_string(),
        tiles: rows.len(),
        confusion: c,
        metrics: binary_metrics(&c)?,
        auc: curve.as_ref().map(|c| c.auc),
    };
    Ok((summary, curve))
}

pub fn roi(args: EvalRoiArgs) -> Result<(), CliError> {
    let rows = parse_scores(&read_text(&args.scores)?)?;
    let all: Vec<&ScoreRow> = rows.iter().collect();
    let (pooled, _) = summarize("all", &all, args.threshold)?;

    let mut by_fold: BTreeMap<&str, Vec<&ScoreRow>> = BTreeMap::new();
    for r in &rows {
        if let Some(f) = &r.fold {
            by_fold.entry(f).or_default().push(r);
        }
    }
    let mut folds = Vec::new();
    let mut curves = Vec::new();
    for (name, fold_rows) in &by_fold {
        let (summary, curve) = summarize(name, fold_rows, args.threshold)?;
        folds.push(summary);
        curves.extend(curve);
    }
    let mean_roc = if curves.is_empty() { None } else { Some(mean_roc(&curves, args.grid)?) };
    let evaluation = RoiEvaluation { threshold: args.threshold, pooled, folds, mean_roc };
    let text = serde_json::to_string_pretty(&evaluation)?;
    match &args.out {
        Some(path) => write_bytes(path, text)?,
        None => println!("{text}"),
    }
    Ok(())
}

fn read_label_dir(dir: &Path, format: LabelFormat) -> Result<Vec<AnnotationRecord>, CliError> {
    files_with_ext(dir, format.extension())?
        .iter()
        .map(|path| {
            let tile = TileRef::file("eval", stem(path));
            let text = read_text(path)?;
            let record = match format {
                LabelFormat::Yolo => parse_yolo(&text, tile),
                LabelFormat::Voc => parse_voc(&text, tile),
            };
            record.map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
        })
        .collect()
}

pub fn detections(args: EvalDetArgs) -> Result<(), CliError> {
    let preds = annotations_to_detections(&read_label_dir(&args.pred, args.format)?);
    let gts = read_label_dir(&args.gt, args.format)?;
    let card = evaluate_detections(&preds, &gts, args.iou)?;
    match &args.out {
        Some(path) => write_bytes(path, card.to_csv())?,
        None => print!("{}", card.to_csv()),
    }
    if let Some(path) = &args.json {
        write_bytes(path, card.to_json())?;
    }
    if let Some(path) = &args.confusion {
        let matrix = confusion_matrix(&preds, &gts, args.iou, &CellClass::EVALUATED)?;
        write_bytes(path, matrix.to_csv())?;
    }
    if args.out.is_some() {
        print_summary(&serde_json::json!({
            "classes": card.classes.len(),
            "map": card.map,
            "mean_f1": card.mean_f1,
            "mean_lamr": card.mean_lamr,
        }))?;
    }
    Ok(())
}
