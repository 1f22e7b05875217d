//! Metrics, stratified cross-validation, grid search and recursive feature
//! elimination.

pub mod cv;
pub mod folds;
pub mod metrics;
pub mod report;
pub mod rfe;

pub use cv::{
    cross_validate, default_grid, grid_search, grid_search_on_folds, nested_cv, CvResult,
    GridSearch, MeanStd, NestedCv, Scores, Summary,
};
pub use folds::{fold_split, stratified_kfold};
pub use metrics::{auc, average_precision, combined_score, rmse};
pub use report::{EvalReport, ReportRow};
pub use rfe::{default_sizes, eliminate, rfe, RfeResult, RfeSubset};
