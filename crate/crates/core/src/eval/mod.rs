//! Evaluation: subject-grouped nested cross-validation, hyperparameter
//! grid search, sequential forward selection, and all scoring (subject
//! indices, ROC/AUC, equal-error-rate thresholds).

pub mod cv;
pub mod roc;
mod run;
pub mod scoring;
mod search;

pub use cv::{make_cv_plan, CVPlan, InnerFold, OuterFold, INNER_FOLDS, OUTER_FOLDS};
pub use roc::{auc, confusion_rates, eer_threshold, roc, RocCurve, RocPoint};
pub use run::{
    evaluate, evaluate_fixed, grid_search, population_std, EvalClip, EvalContext, EvalDataset, EvalSettings,
    EvaluationReport, FoldReport, GridSearchResult, ModelSpec, ShallowInput, TrialConfig,
};
pub use scoring::{ci1, ci2, indicator, p_hat, ScoreMode, SubjectScore};
pub use search::{sfs, FeatureGroup, SfsFold, SfsStep};
