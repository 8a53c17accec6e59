//! Decision thresholds, temperature scaling, evaluation metrics and
//! cross-validation splits.

pub mod metrics;
pub mod split;
pub mod temperature;
pub mod thresholds;

pub use metrics::{
    compute_calibration, compute_classification, compute_classification_over, cooccurrence, CalibrationReport,
    ClassificationReport, CooccurrenceMatrix, MetricsReport, DEFAULT_BINS,
};
pub use split::{kfold_split, Fold};
pub use temperature::{scale_temperatures, TemperatureSet};
pub use thresholds::{threshold_grid, tune_thresholds, tune_thresholds_on, ThresholdSet, ThresholdTuning};
