//! Evaluation: binary metrics and ROC for the tile gate; matching, AP,
//! miss rate, confusion and scorecards for detection; NDC agreement.

mod binary;
mod confusion;
mod exact;
mod matching;
mod ndc;
mod scorecard;

pub use binary::{binary_metrics, mean_roc, roc_auc, BinaryConfusion, BinaryMetrics, MeanRoc, RocCurve};
pub use confusion::{confusion_matrix, ConfusionMatrix};
pub use matching::{
    average_precision_11pt, class_counts_at_operating_point, lamr_reference_points, log_average_miss_rate, log_average_miss_rate_at,
    match_detections, pr_curve, GtStatus, MatchResult, PredMatch, DEFAULT_IOU_THRESHOLD, LAMR_FLOOR,
};
pub use ndc::{manual_ndc_proportions, ndc_mse, NdcMse};
pub use scorecard::{evaluate_class, evaluate_detections, map_and_f1, ClassScore, DetectionScorecard, TABLE_HEADER};

use crate::taxonomy::CellClass;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("confusion matrix is empty")]
    EmptyConfusion,
    #[error("ROC needs both positive and negative labels")]
    SingleClassInput,
    #[error("no ground truth for class {0}")]
    NoGroundTruth(CellClass),
    #[error("nothing to evaluate")]
    EmptyInput,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("malformed scorecard: {0}")]
    Malformed(String),
}
