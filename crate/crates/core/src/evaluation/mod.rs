//! Pixel-level F1 and image-level ROC/AUC protocols, and a dataset harness.

mod dataset;
mod metrics;

pub use dataset::{
    evaluate_dataset, find_mask, list_images, EvalReport, ImageKind, ImageRecord, Outcome,
    MASK_SUFFIX,
};
pub use metrics::{
    detection_statistic, f1_at_threshold, f1_score, max_f1, roc_auc, uniform_thresholds,
    GroundTruthMask, MaxF1, Orientation, RocCurve, UNIFORM_LEVELS,
};
