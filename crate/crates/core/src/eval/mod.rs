//! Cohort splitting, example construction, training orchestration and
//! evaluation metrics.

mod examples;
pub mod metrics;
mod report;
mod split;
mod train;

pub use examples::{
    bmi_series, build_examples, horizon_labels, label_at, strata, wfl_category, LabeledExample, Strata, HORIZONS,
    LABEL_TOLERANCE_DAYS,
};
pub use metrics::{auroc, bootstrap_ci, conformal_interval, mae, net_benefit, net_benefit_counts, MetricError};
pub use report::{
    build_report, evaluate, predict_all, Cell, EvalOptions, EvalReport, NetBenefitPoint, Prediction, ReportMeta, Slice,
    SubgroupMetric, NET_BENEFIT_THRESHOLDS,
};
pub use split::{split_patients, undersample, Role, Split, SplitError, MIN_COHORT};
pub use train::{train, EpochRecord, TrainConfig, TrainError, TrainEvent, TrainOutcome};
