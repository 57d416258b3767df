use hct_core::dataset::active::{query_rare_tiles, DatasetManifest};
use hct_core::dataset::review::{export_review_package, read_prediction_pool, ReviewStore};
use hct_core::dataset::voc::write_voc;
use hct_core::dataset::yolo::write_yolo;
use serde_json::json;

use super::{print_summary, read_labelled_dir, write_bytes};
use crate::args::{AlCommand, LabelFormat, ServeReviewArgs};
use crate::error::CliError;
use crate::review_server::{serve as serve_review, ReviewState};

pub fn run(command: AlCommand) -> Result<(), CliError> {
    match command {
        AlCommand::Init { data, manifest } => {
            let m = DatasetManifest::new(read_labelled_dir(&data.data, &data.id)?)?;
            m.save(&manifest)?;
            print_summary(&json!({"version": m.version, "records": m.records.len(), "boxes": m.class_counts.total()}))
        }
        AlCommand::Query { pool, pool_id, manifest, out, n, seed } => {
            let mut m = DatasetManifest::load(&manifest)?;
            let candidates = read_prediction_pool(&pool, &pool_id)?;
            let records: Vec<_> = candidates.iter().map(|(r, _)| r.clone()).collect();
            let picked = query_rare_tiles(&m, &records, n, seed)?;
            let mut items = Vec::with_capacity(picked.len());
            for q in &picked {
                let (record, image_path) = candidates.iter().find(|(r, _)| r.tile == q.tile).expect("picked from candidates");
                items.push((q.tile.clone(), image::open(image_path)?.to_rgb8(), record.boxes.clone()));
            }
            let queue = export_review_package(&out, &items)?;
            write_bytes(&out.join("query.json"), serde_json::to_string_pretty(&picked)?)?;
            m.mark_pending(picked.iter().map(|q| q.tile.clone()));
            m.save(&manifest)?;
            print_summary(&json!({"candidates": records.len(), "queued": queue.items.len(), "package": out}))
        }
        AlCommand::Export { manifest, out, format, tile_px } => {
            let m = DatasetManifest::load(&manifest)?;
            for r in &m.records {
                let (text, ext) = match format {
                    LabelFormat::Yolo => (write_yolo(r), "txt"),
                    LabelFormat::Voc => (write_voc(r, tile_px, tile_px), "xml"),
                };
                write_bytes(&out.join(format!("{}.{ext}", r.tile.key())), text)?;
            }
            print_summary(&json!({"version": m.version, "records": m.records.len(), "out": out}))
        }
        AlCommand::Merge { package, manifest, timestamp } => {
            let m = DatasetManifest::load(&manifest)?;
            let mut store = ReviewStore::open(&package)?;
            let timestamp = timestamp.unwrap_or_else(|| format!("unix:{}", unix_now()));
            let (merged, event) = store.merge_into(&m, &timestamp)?;
            merged.save(&manifest)?;
            print_summary(&json!({"previous_version": m.version, "version": merged.version, "event": event}))
        }
    }
}

fn unix_now() -> u64 {
    std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

pub fn serve(args: ServeReviewArgs) -> Result<(), CliError> {
    // fail early on a bad manifest rather than at the first merge
    DatasetManifest::load(&args.manifest)?;
    let store = ReviewStore::open(&args.package)?;
    let state = ReviewState::new(store, args.manifest.clone());
    let runtime = tokio::runtime::Runtime::new().map_err(CliError::io("tokio runtime"))?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(args.addr).await.map_err(CliError::io(args.addr.to_string()))?;
        let addr = listener.local_addr().map_err(CliError::io(args.addr.to_string()))?;
        print_summary(&json!({"listening": addr.to_string()}))?;
        tokio::select! {
            r = serve_review(listener, state) => r.map_err(CliError::io(addr.to_string())),
            _ = tokio::signal::ctrl_c() => Ok(()),
        }
    })
}
