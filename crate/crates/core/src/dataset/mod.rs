//! Annotation formats, splits, augmentation and active learning.

pub mod active;
mod annotation;
pub mod augment;
pub mod mix;
pub mod oversample;
pub mod review;
pub mod split;
pub mod voc;
pub mod yolo;

pub use annotation::{AnnotatedBox, AnnotationError, AnnotationRecord, BoxSource, TileRef};
