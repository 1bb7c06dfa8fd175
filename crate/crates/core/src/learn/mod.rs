//! Prediction: feature extraction, per-student trajectories, grouped
//! cross-validation, cost-sensitive L2 logistic regression and the
//! agreement metrics used to score it.

pub mod cv;
pub mod features;
pub mod logistic;
pub mod metrics;
pub mod trajectory;

pub use cv::{cross_validate, fold_sizes, grouped_kfold, CvReport};
pub use features::{extract_features, FeatureConfig, FeatureVector, RowContext};
pub use logistic::{train_logistic, CostScheme, Dataset, LogisticConfig, LogisticModel};
pub use metrics::{evaluate_metrics, ConfusionSummary};
pub use trajectory::{build_trajectories, dropout_week_labels, Trajectory, VideoObservation};
