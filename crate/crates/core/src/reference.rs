//! Reference class mix used by synthetic slides, the sampling detector and
//! convergence calibration.
//!
//! Weights are the per-class annotated-object counts of the training corpus
//! (before augmentation), in [`CellClass`] id order.

use rand::Rng;
use rand::distr::weighted::WeightedIndex;
use rand_distr::{Distribution, Poisson};

use crate::taxonomy::{CellClass, ClassCounts};

pub const REFERENCE_CLASS_WEIGHTS: [f64; CellClass::COUNT] = [
    2714.0, // neutrophil
    1017.0, // metamyelocyte
    1199.0, // myelocyte
    409.0,  // promyelocyte
    3950.0, // blast
    2668.0, // erythroblast
    23.0,   // megakaryocyte nucleus
    1305.0, // lymphocyte
    569.0,  // monocyte
    176.0,  // plasma cell
    249.0,  // eosinophil
    7.0,    // basophil
    106.0,  // megakaryocyte
    5603.0, // debris
    191.0,  // histiocyte
    33.0,   // mast cell
    3971.0, // platelet
    585.0,  // platelet clump
    2007.0, // other cell
];

/// Per-class object counts of the training set after augmentation, in id order.
pub const REFERENCE_AUGMENTED_COUNTS: [u64; CellClass::COUNT] = [
    119416, 44748, 52756, 17996, 173800, 117392, 1012, 57420, 25036, 7744, 10956, 308, 4664, 246532, 8404, 1452,
    174724, 25740, 88308,
];

/// Suitable (ROI) tiles before and after oversampling.
pub const REFERENCE_ROI_TILES: (u64, u64) = (4750, 28500);

/// Mean detected objects per ROI tile (~250k objects over ~26.4k tiles).
pub const REFERENCE_OBJECTS_PER_TILE: f64 = 9.5;

/// Draws per-tile class histograms: a Poisson object count, each object's
/// class i.i.d. from fixed weights.
#[derive(Debug, Clone)]
pub struct HistogramSampler {
    classes: WeightedIndex<f64>,
    count: Poisson<f64>,
}

impl HistogramSampler {
    pub fn new(weights: &[f64], objects_per_tile: f64) -> Option<Self> {
        if weights.len() != CellClass::COUNT {
            return None;
        }
        Some(HistogramSampler {
            classes: WeightedIndex::new(weights).ok()?,
            count: Poisson::new(objects_per_tile).ok()?,
        })
    }

    pub fn reference() -> Self {
        Self::new(&REFERENCE_CLASS_WEIGHTS, REFERENCE_OBJECTS_PER_TILE).expect("reference weights are valid")
    }

    pub fn sample_classes<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<CellClass> {
        let n = self.count.sample(rng) as usize;
        (0..n).map(|_| CellClass::ALL[self.classes.sample(rng)]).collect()
    }

    pub fn sample_counts<R: Rng + ?Sized>(&self, rng: &mut R) -> ClassCounts {
        let mut counts = ClassCounts::default();
        for c in self.sample_classes(rng) {
            counts.add(c, 1);
        }
        counts
    }
}
