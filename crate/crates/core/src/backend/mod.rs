//! Inference backend interfaces.
//!
//! The ROI classifier and the cell detector are both opaque: anything that
//! maps a tile raster to a probability (resp. a list of raw boxes) can be
//! plugged in. In-tree implementations are deterministic synthetic backends;
//! remote models are reached through the JSON wire types in [`wire`].

pub mod synthetic;
pub mod wire;

use std::sync::{Condvar, Mutex};

use serde::{Deserialize, Serialize};

use crate::wsi::Tile;
pub use wire::RawDetection;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("inference failed: {0}")]
    Inference(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendInfo {
    pub name: String,
    pub version: String,
}

impl BackendInfo {
    pub fn new(name: impl Into<String>, version: impl Into<String>) -> Self {
        BackendInfo { name: name.into(), version: version.into() }
    }

    pub fn id(&self) -> String {
        format!("{}@{}", self.name, self.version)
    }
}

/// Binary suitability classifier for tiles.
pub trait TileClassifier: Send + Sync {
    fn info(&self) -> BackendInfo;

    /// Cheap reachability probe, run once before any tile work.
    fn check_available(&self) -> Result<(), BackendError> {
        Ok(())
    }

    /// Probability that the tile is suitable for cytology.
    fn score(&self, tile: &Tile) -> Result<f64, BackendError>;

    /// Maximum concurrent `score` calls; `None` means unbounded.
    fn capacity(&self) -> Option<usize> {
        None
    }
}

/// Cell detector producing raw (pre-NMS) boxes.
pub trait DetectorBackend: Send + Sync {
    fn info(&self) -> BackendInfo;

    fn check_available(&self) -> Result<(), BackendError> {
        Ok(())
    }

    fn detect(&self, tile: &Tile) -> Result<Vec<RawDetection>, BackendError>;

    fn capacity(&self) -> Option<usize> {
        None
    }
}

/// Counting semaphore bounding concurrent calls into a backend.
pub struct CapacityLimiter {
    limit: Option<usize>,
    in_flight: Mutex<usize>,
    freed: Condvar,
}

impl CapacityLimiter {
    pub fn new(limit: Option<usize>) -> Self {
        CapacityLimiter { limit: limit.map(|l| l.max(1)), in_flight: Mutex::new(0), freed: Condvar::new() }
    }

    pub fn run<R>(&self, f: impl FnOnce() -> R) -> R {
        let Some(limit) = self.limit else { return f() };
        {
            let mut n = self.in_flight.lock().unwrap_or_else(|e| e.into_inner());
            while *n >= limit {
                n = self.freed.wait(n).unwrap_or_else(|e| e.into_inner());
            }
            *n += 1;
        }
        let out = f();
        *self.in_flight.lock().unwrap_or_else(|e| e.into_inner()) -= 1;
        self.freed.notify_one();
        out
    }
}
