//! Leave-one-subject-out protocols and classification metrics.

mod metrics;
mod protocol;
mod run;

pub use metrics::{ConfusionMatrix, MetricSummary};
pub use protocol::{
    build_report, cde_label_map, loso_splits, run_loso, sde_classes, EvalItem, Fold, FoldAverage, FoldReport,
    Prediction, ProtocolKind, ProtocolSpec, Report, CDE_CLASSES,
};
pub use run::{fold_seed, run_protocol};
