//! Histograms of cell types, their running accumulation, and the
//! chi-square convergence test that decides when enough tiles were counted.
//!
//! The convergence signal compares successive *proportion* vectors of the
//! accumulated histogram (twelve differential-count classes plus the
//! myeloid-to-erythroid ratio). Raw cumulative counts grow without bound, so
//! their distance would never settle; proportions make the trace scale-free.

use serde::{Deserialize, Serialize};

use crate::dataset::TileRef;
use crate::detection::Detection;
use crate::taxonomy::{CellClass, ClassCounts};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StatsError {
    #[error("histogram has no counted differential-count cells")]
    EmptyHistogram,
    #[error("vector lengths differ ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error("histogram already converged; use forced accumulation to continue")]
    AlreadyConverged,
}

/// Per-tile histogram of detected objects.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Hct {
    pub counts: ClassCounts,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tile: Option<TileRef>,
}

pub fn hct_from_detections(dets: &[Detection]) -> Hct {
    let mut counts = ClassCounts::default();
    for d in dets {
        counts.add(d.cls, 1);
    }
    Hct { counts, tile: dets.first().map(|d| d.tile.clone()) }
}

/// Myeloid-to-erythroid ratio; `None` when there are no erythroblasts.
pub fn bm_me_ratio(counts: &ClassCounts) -> Option<f64> {
    let erythroid = counts.get(CellClass::Erythroblast);
    if erythroid == 0 {
        return None;
    }
    Some(counts.subtotal(&CellClass::MYELOID) as f64 / erythroid as f64)
}

/// Twelve class proportions (normalized over the twelve-class subtotal)
/// followed by the M:E ratio, with 0 substituted when it is undefined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceVector {
    pub components: [f64; 13],
    pub bm_me_defined: bool,
}

impl ConvergenceVector {
    pub const LEN: usize = 13;

    pub fn zero() -> Self {
        ConvergenceVector { components: [0.0; 13], bm_me_defined: false }
    }

    pub fn bm_me(&self) -> f64 {
        self.components[12]
    }
}

pub fn convergence_vector(counts: &ClassCounts) -> Result<ConvergenceVector, StatsError> {
    let subtotal = counts.subtotal(&CellClass::NDC);
    if subtotal == 0 {
        return Err(StatsError::EmptyHistogram);
    }
    let mut components = [0.0; 13];
    for (slot, class) in components.iter_mut().zip(CellClass::NDC) {
        *slot = counts.get(class) as f64 / subtotal as f64;
    }
    let ratio = bm_me_ratio(counts);
    components[12] = ratio.unwrap_or(0.0);
    Ok(ConvergenceVector { components, bm_me_defined: ratio.is_some() })
}

/// `½ Σ (xᵢ − yᵢ)² / (xᵢ + yᵢ)`; terms with a zero denominator contribute 0.
pub fn chi_square_distance(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::DimensionMismatch(x.len(), y.len()));
    }
    let sum: f64 = x
        .iter()
        .zip(y)
        .map(|(&a, &b)| {
            let denom = a + b;
            if denom == 0.0 {
                0.0
            } else {
                (a - b) * (a - b) / denom
            }
        })
        .sum();
    Ok(0.5 * sum)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    /// 1-based number of tiles accumulated when this distance was taken.
    pub tile_index: usize,
    pub distance: f64,
}

/// True iff the last `patience` distances are all strictly below `threshold`.
pub fn check_convergence(trace: &[TracePoint], threshold: f64, patience: usize) -> bool {
    patience >= 1 && trace.len() >= patience && trace[trace.len() - patience..].iter().all(|p| p.distance < threshold)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceCriteria {
    pub threshold: f64,
    pub patience: usize,
}

impl ConvergenceCriteria {
    /// Calibrated on i.i.d. synthetic streams at ~9.5 objects per tile so
    /// that convergence typically lands after 400-500 tiles.
    pub const DEFAULT_THRESHOLD: f64 = 5e-6;
    pub const DEFAULT_PATIENCE: usize = 5;
}

impl Default for ConvergenceCriteria {
    fn default() -> Self {
        ConvergenceCriteria { threshold: Self::DEFAULT_THRESHOLD, patience: Self::DEFAULT_PATIENCE }
    }
}

/// Integrated histogram: the running sum of per-tile histograms and the
/// chi-square distance trace between successive states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ihct {
    pub counts: ClassCounts,
    pub tiles_seen: usize,
    pub trace: Vec<TracePoint>,
    pub converged: bool,
    pub criteria: ConvergenceCriteria,
    #[serde(skip)]
    current: Option<ConvergenceVector>,
}

impl Ihct {
    pub fn new(criteria: ConvergenceCriteria) -> Self {
        Ihct { counts: ClassCounts::default(), tiles_seen: 0, trace: Vec::new(), converged: false, criteria, current: None }
    }

    /// Fold one tile in. Fails once converged; see [`Ihct::accumulate_forced`].
    pub fn accumulate(&mut self, hct: &Hct) -> Result<(), StatsError> {
        if self.converged {
            return Err(StatsError::AlreadyConverged);
        }
        self.accumulate_forced(hct);
        Ok(())
    }

    /// Fold one tile in regardless of convergence state.
    pub fn accumulate_forced(&mut self, hct: &Hct) {
        // an empty histogram is the zero vector
        let before = self.vector_or_zero();
        self.counts = self.counts.merged(&hct.counts);
        self.tiles_seen += 1;
        let after = convergence_vector(&self.counts).ok();
        self.current = after;
        if self.tiles_seen > 1 {
            let after = after.unwrap_or_else(ConvergenceVector::zero);
            let distance = chi_square_distance(&before.components, &after.components).expect("equal lengths");
            self.trace.push(TracePoint { tile_index: self.tiles_seen, distance });
        }
        self.converged = check_convergence(&self.trace, self.criteria.threshold, self.criteria.patience);
    }

    fn vector_or_zero(&self) -> ConvergenceVector {
        match self.current {
            Some(v) => v,
            None => convergence_vector(&self.counts).unwrap_or_else(|_| ConvergenceVector::zero()),
        }
    }

    pub fn last_distance(&self) -> Option<f64> {
        self.trace.last().map(|p| p.distance)
    }
}

/// Differential-count summary of an integrated histogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NdcReport {
    pub slide_id: String,
    pub counts: ClassCounts,
    /// Fractions over the twelve differential-count classes.
    pub percentages: std::collections::BTreeMap<CellClass, f64>,
    pub bm_me: Option<f64>,
    pub bm_me_defined: bool,
    pub chi_square_final: Option<f64>,
    pub tiles_seen: usize,
    pub cells_counted: u64,
    pub converged: bool,
    pub trace: Vec<TracePoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

pub fn ndc_report(ihct: &Ihct, slide_id: &str) -> Result<NdcReport, StatsError> {
    let cells = ihct.counts.subtotal(&CellClass::NDC);
    if cells == 0 {
        return Err(StatsError::EmptyHistogram);
    }
    let percentages = CellClass::NDC
        .iter()
        .map(|&c| (c, ihct.counts.get(c) as f64 / cells as f64))
        .collect();
    let bm_me = bm_me_ratio(&ihct.counts);
    Ok(NdcReport {
        slide_id: slide_id.to_string(),
        counts: ihct.counts,
        percentages,
        bm_me,
        bm_me_defined: bm_me.is_some(),
        chi_square_final: ihct.last_distance(),
        tiles_seen: ihct.tiles_seen,
        cells_counted: cells,
        converged: ihct.converged,
        trace: ihct.trace.clone(),
        config: None,
    })
}

impl NdcReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// `class,count,percentage`; auxiliary classes carry counts only.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("class,count,percentage\n");
        for (class, n) in self.counts.iter() {
            match self.percentages.get(&class) {
                Some(p) => out.push_str(&format!("{class},{n},{p}\n")),
                None => out.push_str(&format!("{class},{n},\n")),
            }
        }
        out
    }
}
