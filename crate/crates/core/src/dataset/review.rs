//! Review packages and the durable correction store behind the review
//! service.
//!
//! A package is a directory:
//!
//! ```text
//! queue.json                 item list, in review order
//! images/<id>.png            tile pixels
//! predictions/<id>.txt       model boxes, YOLO text with a confidence column
//! corrections/<id>.json      reviewer output, written atomically
//! archive/v<N>/              queue and corrections after merge into version N
//! ```
//!
//! Every stored correction carries a revision. A write must name the
//! revision it replaces; anything else is a conflict, never an overwrite.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use image::RgbImage;
use serde::{Deserialize, Serialize};

use super::active::{merge_confirmed, DatasetManifest, MergeError, MergeEvent};
use super::yolo::{parse_yolo, write_yolo};
use super::{AnnotatedBox, AnnotationError, AnnotationRecord, BoxSource, TileRef};

#[derive(Debug, thiserror::Error)]
pub enum ReviewError {
    #[error("no review item `{0}`")]
    UnknownItem(String),
    #[error("item `{id}` is at revision {current}, not {expected:?}")]
    Conflict { id: String, current: u64, expected: Option<u64> },
    #[error("invalid correction: {0}")]
    InvalidCorrection(String),
    #[error(transparent)]
    Merge(#[from] MergeError),
    #[error(transparent)]
    Annotation(#[from] AnnotationError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueueItem {
    pub id: String,
    pub tile: TileRef,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ReviewQueue {
    pub items: Vec<QueueItem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredCorrection {
    pub revision: u64,
    pub record: AnnotationRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueEntry {
    pub id: String,
    pub position: usize,
    pub tile: TileRef,
    pub completed: bool,
    pub revision: u64,
}

/// Write a package for `items` (tile, pixels, predicted boxes).
pub fn export_review_package(dir: &Path, items: &[(TileRef, RgbImage, Vec<AnnotatedBox>)]) -> Result<ReviewQueue, ReviewError> {
    fs::create_dir_all(dir.join("images"))?;
    fs::create_dir_all(dir.join("predictions"))?;
    let mut queue = ReviewQueue::default();
    for (tile, pixels, boxes) in items {
        let id = tile.key();
        if queue.items.iter().any(|q| q.id == id) {
            return Err(ReviewError::InvalidCorrection(format!("duplicate item id `{id}`")));
        }
        pixels.save(dir.join("images").join(format!("{id}.png")))?;
        let record = AnnotationRecord::new(tile.clone(), boxes.clone());
        fs::write(dir.join("predictions").join(format!("{id}.txt")), write_yolo(&record))?;
        queue.items.push(QueueItem { id, tile: tile.clone() });
    }
    fs::write(dir.join("queue.json"), serde_json::to_string_pretty(&queue)?)?;
    Ok(queue)
}

/// A candidate pool laid out like a package without a queue: `images/*.png`
/// with matching `predictions/*.txt`. Tiles are referenced by image path
/// under `pool_id`; images without predictions are skipped.
pub fn read_prediction_pool(dir: &Path, pool_id: &str) -> Result<Vec<(AnnotationRecord, PathBuf)>, ReviewError> {
    let mut out = Vec::new();
    let mut images: Vec<PathBuf> = fs::read_dir(dir.join("images"))?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()?;
    images.retain(|p| p.extension().is_some_and(|e| e == "png"));
    images.sort();
    for img in images {
        let stem = img.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        let pred = dir.join("predictions").join(format!("{stem}.txt"));
        if !pred.exists() {
            log::warn!("no predictions for {}", img.display());
            continue;
        }
        let tile = TileRef::file(pool_id, format!("images/{stem}.png"));
        out.push((super::yolo::read_yolo_file(&pred, tile)?, img));
    }
    Ok(out)
}

pub struct ReviewStore {
    dir: PathBuf,
    queue: ReviewQueue,
    corrections: BTreeMap<String, StoredCorrection>,
}

impl ReviewStore {
    /// Load a package, including corrections persisted by earlier sessions.
    pub fn open(dir: &Path) -> Result<Self, ReviewError> {
        let queue_path = dir.join("queue.json");
        let queue = if queue_path.exists() {
            serde_json::from_str(&fs::read_to_string(&queue_path)?)?
        } else if dir.is_dir() {
            ReviewQueue::default()
        } else {
            return Err(ReviewError::Io(std::io::Error::new(std::io::ErrorKind::NotFound, dir.display().to_string())));
        };
        let mut corrections = BTreeMap::new();
        let cdir = dir.join("corrections");
        if cdir.is_dir() {
            for entry in fs::read_dir(&cdir)? {
                let path = entry?.path();
                if path.extension().is_some_and(|e| e == "json") {
                    let stored: StoredCorrection = serde_json::from_str(&fs::read_to_string(&path)?)?;
                    let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
                    corrections.insert(id, stored);
                }
            }
        }
        Ok(ReviewStore { dir: dir.to_path_buf(), queue, corrections })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn item(&self, id: &str) -> Result<&QueueItem, ReviewError> {
        self.queue.items.iter().find(|q| q.id == id).ok_or_else(|| ReviewError::UnknownItem(id.to_string()))
    }

    pub fn queue(&self) -> Vec<QueueEntry> {
        self.queue
            .items
            .iter()
            .enumerate()
            .map(|(position, q)| {
                let c = self.corrections.get(&q.id);
                QueueEntry {
                    id: q.id.clone(),
                    position,
                    tile: q.tile.clone(),
                    completed: c.is_some(),
                    revision: c.map_or(0, |c| c.revision),
                }
            })
            .collect()
    }

    pub fn image_png(&self, id: &str) -> Result<Vec<u8>, ReviewError> {
        self.item(id)?;
        Ok(fs::read(self.dir.join("images").join(format!("{id}.png")))?)
    }

    pub fn predictions(&self, id: &str) -> Result<AnnotationRecord, ReviewError> {
        let item = self.item(id)?;
        let text = fs::read_to_string(self.dir.join("predictions").join(format!("{id}.txt")))?;
        Ok(parse_yolo(&text, item.tile.clone())?)
    }

    pub fn correction(&self, id: &str) -> Result<Option<&StoredCorrection>, ReviewError> {
        self.item(id)?;
        Ok(self.corrections.get(id))
    }

    /// Store a correction. `base_revision` must equal the current revision
    /// (`None` or 0 for an item without one). Returns the new revision.
    pub fn submit(&mut self, id: &str, boxes: Vec<AnnotatedBox>, base_revision: Option<u64>) -> Result<u64, ReviewError> {
        let tile = self.item(id)?.tile.clone();
        let current = self.corrections.get(id).map_or(0, |c| c.revision);
        if base_revision.unwrap_or(0) != current {
            return Err(ReviewError::Conflict { id: id.to_string(), current, expected: base_revision });
        }
        let record = AnnotationRecord::new(tile, boxes);
        if !record.is_valid() {
            return Err(ReviewError::InvalidCorrection("box outside the tile or empty".into()));
        }
        if record.boxes.iter().any(|b| b.source == BoxSource::Model) {
            return Err(ReviewError::InvalidCorrection("boxes must be human or model-confirmed".into()));
        }
        let stored = StoredCorrection { revision: current + 1, record };
        let cdir = self.dir.join("corrections");
        fs::create_dir_all(&cdir)?;
        let tmp = cdir.join(format!("{id}.json.tmp"));
        fs::write(&tmp, serde_json::to_string_pretty(&stored)?)?;
        fs::rename(&tmp, cdir.join(format!("{id}.json")))?;
        self.corrections.insert(id.to_string(), stored);
        Ok(current + 1)
    }

    pub fn corrections(&self) -> Vec<AnnotationRecord> {
        self.queue.items.iter().filter_map(|q| self.corrections.get(&q.id)).map(|c| c.record.clone()).collect()
    }

    /// Merge all stored corrections into `manifest`. When the manifest
    /// version moves, the queue and corrections are moved to
    /// `archive/v<version>/` and the store is left empty.
    pub fn merge_into(&mut self, manifest: &DatasetManifest, timestamp: &str) -> Result<(DatasetManifest, Option<MergeEvent>), ReviewError> {
        let outcome = merge_confirmed(manifest, &self.corrections(), timestamp)?;
        if outcome.manifest.version != manifest.version || !self.corrections.is_empty() {
            let archive = self.dir.join("archive").join(format!("v{}", outcome.manifest.version));
            fs::create_dir_all(&archive)?;
            if self.dir.join("queue.json").exists() {
                fs::rename(self.dir.join("queue.json"), archive.join("queue.json"))?;
            }
            if self.dir.join("corrections").exists() {
                fs::rename(self.dir.join("corrections"), archive.join("corrections"))?;
            }
            self.queue = ReviewQueue::default();
            self.corrections.clear();
        }
        Ok((outcome.manifest, outcome.event))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BBox;
    use crate::taxonomy::CellClass;
    use crate::wsi::GridCoord;

    fn package(dir: &Path, n: u32) -> Vec<TileRef> {
        let items: Vec<(TileRef, RgbImage, Vec<AnnotatedBox>)> = (0..n)
            .map(|i| {
                let tile = TileRef::grid("slide", GridCoord::new(i / 20, i % 20));
                let pred = AnnotatedBox {
                    bbox: BBox::new(0.5, 0.5, 0.2, 0.2),
                    cls: CellClass::Basophil,
                    source: BoxSource::Model,
                    confidence: Some(0.625),
                };
                (tile, RgbImage::new(8, 8), vec![pred])
            })
            .collect();
        export_review_package(dir, &items).unwrap();
        items.into_iter().map(|i| i.0).collect()
    }

    fn confirmed(cls: CellClass) -> Vec<AnnotatedBox> {
        vec![AnnotatedBox { bbox: BBox::new(0.5, 0.5, 0.2, 0.2), cls, source: BoxSource::ModelConfirmed, confidence: Some(0.625) }]
    }

    #[test]
    fn queue_lists_items_with_completion() {
        let dir = tempfile::tempdir().unwrap();
        package(dir.path(), 250);
        let mut store = ReviewStore::open(dir.path()).unwrap();
        let q = store.queue();
        assert_eq!(q.len(), 250);
        assert!(q.iter().all(|e| !e.completed));
        let id = q[3].id.clone();
        assert_eq!(store.predictions(&id).unwrap().boxes[0].confidence, Some(0.625));
        assert!(!store.image_png(&id).unwrap().is_empty());
        store.submit(&id, confirmed(CellClass::Basophil), None).unwrap();
        assert!(store.queue()[3].completed);
    }

    #[test]
    fn corrections_survive_reopen_and_conflicts_are_explicit() {
        let dir = tempfile::tempdir().unwrap();
        package(dir.path(), 3);
        let mut store = ReviewStore::open(dir.path()).unwrap();
        let id = store.queue()[0].id.clone();
        assert_eq!(store.submit(&id, confirmed(CellClass::Basophil), None).unwrap(), 1);
        assert!(matches!(
            store.submit(&id, confirmed(CellClass::Monocyte), None),
            Err(ReviewError::Conflict { current: 1, .. })
        ));
        assert_eq!(store.submit(&id, confirmed(CellClass::Monocyte), Some(1)).unwrap(), 2);

        let reopened = ReviewStore::open(dir.path()).unwrap();
        let c = reopened.correction(&id).unwrap().unwrap();
        assert_eq!(c.revision, 2);
        assert_eq!(c.record.boxes, confirmed(CellClass::Monocyte));
        assert!(matches!(reopened.correction("nope"), Err(ReviewError::UnknownItem(_))));
    }

    #[test]
    fn unconfirmed_model_boxes_rejected() {
        let dir = tempfile::tempdir().unwrap();
        package(dir.path(), 1);
        let mut store = ReviewStore::open(dir.path()).unwrap();
        let id = store.queue()[0].id.clone();
        let preds = store.predictions(&id).unwrap().boxes;
        assert!(matches!(store.submit(&id, preds, None), Err(ReviewError::InvalidCorrection(_))));
    }

    #[test]
    fn pool_reads_predictions() {
        let dir = tempfile::tempdir().unwrap();
        package(dir.path(), 3);
        fs::write(dir.path().join("images/orphan.png"), b"").unwrap();
        let pool = read_prediction_pool(dir.path(), "pool").unwrap();
        assert_eq!(pool.len(), 3);
        assert_eq!(pool[0].0.tile, TileRef::file("pool", "images/slide_r0c0.png"));
        assert_eq!(pool[0].0.boxes[0].source, BoxSource::Model);
    }

    #[test]
    fn merge_archives_queue() {
        let dir = tempfile::tempdir().unwrap();
        let tiles = package(dir.path(), 4);
        let mut manifest = DatasetManifest::new(vec![]).unwrap();
        manifest.mark_pending(tiles);
        let mut store = ReviewStore::open(dir.path()).unwrap();
        for e in store.queue().iter().take(2) {
            store.submit(&e.id, confirmed(CellClass::Basophil), None).unwrap();
        }
        let (m2, event) = store.merge_into(&manifest, "2021-01-01T00:00:00Z").unwrap();
        assert_eq!(m2.version, manifest.version + 1);
        assert_eq!(m2.class_counts.get(CellClass::Basophil), 2);
        assert_eq!(m2.pending.len(), 2);
        assert!(event.is_some());
        assert!(store.queue().is_empty());
        assert!(dir.path().join("archive/v2/queue.json").exists());
        assert!(dir.path().join("archive/v2/corrections").is_dir());
        assert!(ReviewStore::open(dir.path()).unwrap().queue().is_empty());
    }
}
