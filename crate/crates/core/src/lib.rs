//! Whole-slide bone marrow cytology engine.
//!
//! Slides are tiled on a fixed grid, tiles are gated by a suitability
//! classifier, accepted tiles go through a cell detector, and the per-tile
//! class histograms are accumulated until their proportions stop moving.

pub mod backend;
pub mod dataset;
pub mod detection;
pub mod eval;
pub mod geometry;
mod par;
pub mod pipeline;
pub mod reference;
pub mod roi;
pub mod stats;
pub mod taxonomy;
pub mod wsi;
