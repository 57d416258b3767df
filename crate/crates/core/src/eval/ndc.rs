use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::stats::NdcReport;
use crate::taxonomy::CellClass;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NdcMse {
    pub per_class: BTreeMap<CellClass, f64>,
    pub mean: f64,
}

/// Per class, the mean over patients of the squared difference in
/// proportion; classes absent from a map count as 0.
pub fn ndc_mse(model: &[BTreeMap<CellClass, f64>], manual: &[BTreeMap<CellClass, f64>]) -> Result<NdcMse, EvalError> {
    if model.len() != manual.len() {
        return Err(EvalError::DimensionMismatch(format!("{} model NDCs, {} manual", model.len(), manual.len())));
    }
    if model.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    for (i, (a, b)) in model.iter().zip(manual).enumerate() {
        let stray = a.keys().chain(b.keys()).find(|c| !CellClass::MANUAL_NDC.contains(c));
        if let Some(c) = stray {
            return Err(EvalError::DimensionMismatch(format!("patient {i}: {c} is not a manual NDC class")));
        }
    }
    let n = model.len() as f64;
    let per_class: BTreeMap<CellClass, f64> = CellClass::MANUAL_NDC
        .iter()
        .map(|&c| {
            let sq: f64 = model
                .iter()
                .zip(manual)
                .map(|(a, b)| (a.get(&c).copied().unwrap_or(0.0) - b.get(&c).copied().unwrap_or(0.0)).powi(2))
                .sum();
            (c, sq / n)
        })
        .collect();
    let mean = per_class.values().sum::<f64>() / per_class.len() as f64;
    Ok(NdcMse { per_class, mean })
}

/// Model counts renormalized over the ten manually counted classes, so they
/// compare like-for-like with a manual differential.
pub fn manual_ndc_proportions(report: &NdcReport) -> BTreeMap<CellClass, f64> {
    let total = report.counts.subtotal(&CellClass::MANUAL_NDC);
    CellClass::MANUAL_NDC
        .iter()
        .map(|&c| (c, if total == 0 { 0.0 } else { report.counts.get(c) as f64 / total as f64 }))
        .collect()
}
