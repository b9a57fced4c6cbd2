//! Load features, nearest-neighbor configuration prediction and evaluation.

mod eval;
mod features;
mod knn;
mod logistic;

pub use eval::{
    evaluate, fit_and_evaluate, logistic_baseline_accuracy, EvalReport, GapSummary, KAccuracy, LOGISTIC_EPOCHS, LOGISTIC_RATE,
    SENSITIVITY_KS,
};
pub use features::{
    design_matrix, featurize, train_size, train_test_split, FeatureMode, FeatureSpec, Split,
    TRAIN_FRACTION,
};
pub use knn::{train_knn, KnnModel, DEFAULT_K};
pub use logistic::{train_logistic_baseline, LogisticModel};
