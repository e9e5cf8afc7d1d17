//! Segmentation and classification scores, significance testing, latency
//! measurement and report rendering.

pub mod latency;
pub mod report;
pub mod segmentation;
pub mod significance;

pub use latency::{benchmark_latency, LatencyReport};
pub use report::{render_json, render_table, render_table_for, Contexts, ReportRow, REPORT_COLUMNS};
pub use segmentation::{
    accuracy_from_probabilities, adaptive_threshold, binarize, classification_accuracy, confusion, evaluate_dataset, evaluate_sample,
    f_beta, iou, mae, precision_recall, BinaryMap, Confusion, MetricsReport, SampleScores, ThresholdContext, BETA2, FIXED_THRESHOLD,
};
pub use significance::{paired_t_test, SignificanceResult, DEFAULT_ALPHA};
