//! Dataset state for the active-learning loop: pick rare-class tiles from a
//! prediction pool, send them for review, merge confirmed corrections back.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AnnotationRecord, BoxSource, TileRef};
use crate::taxonomy::{CellClass, ClassCounts};

pub const DEFAULT_QUERY_BATCH: usize = 250;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeEvent {
    pub version: u64,
    /// Caller-supplied wall-clock stamp (RFC 3339 by convention).
    pub timestamp: String,
    pub tiles: usize,
    pub added_tiles: usize,
    pub replaced_tiles: usize,
    /// Per-class change in box counts; zero entries omitted.
    pub class_deltas: BTreeMap<CellClass, i64>,
    /// Evaluation results attached after retraining on this version.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metrics: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u64,
    pub records: Vec<AnnotationRecord>,
    pub class_counts: ClassCounts,
    /// Tiles sent out for review and not merged yet.
    #[serde(default)]
    pub pending: BTreeSet<TileRef>,
    #[serde(default)]
    pub provenance: Vec<MergeEvent>,
}

#[derive(Debug, thiserror::Error)]
pub enum ManifestError {
    #[error("duplicate tile {0} in manifest")]
    DuplicateTile(TileRef),
    #[error("stored class counts disagree with the records")]
    InconsistentCounts,
    #[error("invalid box in record {0}")]
    InvalidRecord(TileRef),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MergeError {
    #[error("correction for unknown tile {0}")]
    UnknownTileRef(TileRef),
    #[error("conflicting corrections for tile {0}")]
    ConflictingDuplicate(TileRef),
    #[error("box {index} of tile {tile} is unconfirmed model output")]
    UnconfirmedBox { tile: TileRef, index: usize },
    #[error("invalid box in correction for tile {0}")]
    InvalidBox(TileRef),
}

fn recount(records: &[AnnotationRecord]) -> ClassCounts {
    records.iter().fold(ClassCounts::default(), |acc, r| acc.merged(&r.class_counts()))
}

impl DatasetManifest {
    pub fn new(mut records: Vec<AnnotationRecord>) -> Result<Self, ManifestError> {
        records.sort_by(|a, b| a.tile.cmp(&b.tile));
        if let Some(w) = records.windows(2).find(|w| w[0].tile == w[1].tile) {
            return Err(ManifestError::DuplicateTile(w[0].tile.clone()));
        }
        if let Some(r) = records.iter().find(|r| !r.is_valid()) {
            return Err(ManifestError::InvalidRecord(r.tile.clone()));
        }
        let class_counts = recount(&records);
        Ok(DatasetManifest { version: 1, records, class_counts, pending: BTreeSet::new(), provenance: Vec::new() })
    }

    pub fn record(&self, tile: &TileRef) -> Option<&AnnotationRecord> {
        self.records.binary_search_by(|r| r.tile.cmp(tile)).ok().map(|i| &self.records[i])
    }

    pub fn contains(&self, tile: &TileRef) -> bool {
        self.record(tile).is_some()
    }

    pub fn is_consistent(&self) -> bool {
        self.class_counts == recount(&self.records) && self.records.windows(2).all(|w| w[0].tile < w[1].tile)
    }

    pub fn mark_pending(&mut self, tiles: impl IntoIterator<Item = TileRef>) {
        self.pending.extend(tiles);
    }

    /// Attach an evaluation result (e.g. mAP) to the merge that produced `version`.
    pub fn record_metric(&mut self, version: u64, name: &str, value: f64) -> bool {
        match self.provenance.iter_mut().find(|e| e.version == version) {
            Some(e) => {
                e.metrics.insert(name.to_string(), value);
                true
            }
            None => false,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ManifestError> {
        let mut m: DatasetManifest = serde_json::from_str(text)?;
        m.records.sort_by(|a, b| a.tile.cmp(&b.tile));
        if let Some(w) = m.records.windows(2).find(|w| w[0].tile == w[1].tile) {
            return Err(ManifestError::DuplicateTile(w[0].tile.clone()));
        }
        if !m.is_consistent() {
            return Err(ManifestError::InconsistentCounts);
        }
        Ok(m)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn load(path: &Path) -> Result<Self, ManifestError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Write via a temporary file and rename, so readers never see a torn file.
    pub fn save(&self, path: &Path) -> Result<(), ManifestError> {
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, self.to_json())?;
        std::fs::rename(tmp, path)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MergeOutcome {
    pub manifest: DatasetManifest,
    /// `None` when the merge changed nothing.
    pub event: Option<MergeEvent>,
}

/// Merge reviewed records. A correction replaces the stored record of its
/// tile (box deletions are explicit this way) or adds a pending tile.
/// Re-merging identical corrections is a no-op: same version, no event.
pub fn merge_confirmed(
    manifest: &DatasetManifest,
    corrections: &[AnnotationRecord],
    timestamp: &str,
) -> Result<MergeOutcome, MergeError> {
    let mut by_tile: BTreeMap<&TileRef, &AnnotationRecord> = BTreeMap::new();
    for c in corrections {
        if !manifest.contains(&c.tile) && !manifest.pending.contains(&c.tile) {
            return Err(MergeError::UnknownTileRef(c.tile.clone()));
        }
        if !c.is_valid() {
            return Err(MergeError::InvalidBox(c.tile.clone()));
        }
        if let Some(index) = c.boxes.iter().position(|b| b.source == BoxSource::Model) {
            return Err(MergeError::UnconfirmedBox { tile: c.tile.clone(), index });
        }
        if let Some(prev) = by_tile.insert(&c.tile, c) {
            if prev != c {
                return Err(MergeError::ConflictingDuplicate(c.tile.clone()));
            }
        }
    }

    let changed: Vec<&AnnotationRecord> =
        by_tile.values().copied().filter(|c| manifest.record(&c.tile) != Some(*c)).collect();
    if changed.is_empty() {
        let mut m = manifest.clone();
        for t in by_tile.keys() {
            m.pending.remove(*t);
        }
        return Ok(MergeOutcome { manifest: m, event: None });
    }

    let mut records: BTreeMap<TileRef, AnnotationRecord> =
        manifest.records.iter().map(|r| (r.tile.clone(), r.clone())).collect();
    let (mut added, mut replaced) = (0, 0);
    for c in &changed {
        match records.insert(c.tile.clone(), (*c).clone()) {
            Some(_) => replaced += 1,
            None => added += 1,
        }
    }
    let records: Vec<AnnotationRecord> = records.into_values().collect();
    let class_counts = recount(&records);
    let class_deltas = CellClass::ALL
        .iter()
        .map(|&c| (c, class_counts.get(c) as i64 - manifest.class_counts.get(c) as i64))
        .filter(|&(_, d)| d != 0)
        .collect();
    let version = manifest.version + 1;
    let event = MergeEvent {
        version,
        timestamp: timestamp.to_string(),
        tiles: changed.len(),
        added_tiles: added,
        replaced_tiles: replaced,
        class_deltas,
        metrics: BTreeMap::new(),
    };
    let mut pending = manifest.pending.clone();
    for t in by_tile.keys() {
        pending.remove(*t);
    }
    let mut provenance = manifest.provenance.clone();
    provenance.push(event.clone());
    log::info!("merged {} tiles into dataset version {version}", changed.len());
    Ok(MergeOutcome {
        manifest: DatasetManifest { version, records, class_counts, pending, provenance },
        event: Some(event),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("candidate pool is empty")]
pub struct EmptyPool;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryItem {
    pub tile: TileRef,
    /// Rarest predicted class, by dataset count.
    pub rarest: Option<CellClass>,
    /// Dataset count of that class; lower is reviewed first.
    pub priority: u64,
}

/// Rank pool tiles by the dataset count of their rarest predicted class and
/// return up to `batch` of them. Tiles already in the dataset or pending are
/// skipped; equal priorities are ordered by a seeded shuffle.
pub fn query_rare_tiles(
    manifest: &DatasetManifest,
    candidates: &[AnnotationRecord],
    batch: usize,
    seed: u64,
) -> Result<Vec<QueryItem>, EmptyPool> {
    let mut pool: Vec<QueryItem> = candidates
        .iter()
        .filter(|c| !manifest.contains(&c.tile) && !manifest.pending.contains(&c.tile))
        .map(|c| {
            let rarest = c.boxes.iter().map(|b| b.cls).min_by_key(|&k| (manifest.class_counts.get(k), k.id()));
            let priority = rarest.map_or(u64::MAX, |k| manifest.class_counts.get(k));
            QueryItem { tile: c.tile.clone(), rarest, priority }
        })
        .collect();
    if pool.is_empty() {
        return Err(EmptyPool);
    }
    pool.sort_by(|a, b| a.tile.cmp(&b.tile));
    pool.dedup_by(|a, b| a.tile == b.tile);
    pool.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    pool.sort_by_key(|q| q.priority);
    pool.truncate(batch);
    Ok(pool)
}
