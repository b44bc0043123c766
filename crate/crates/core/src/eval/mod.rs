//! Leave-one-subject-out evaluation, metrics, training and the modality
//! ablation.

pub mod folds;
pub mod loso;
pub mod metrics;
pub mod train;

pub use folds::{loso_splits, Fold, FoldPlan};
pub use loso::{
    fold_seed, run_ablation, run_loso, Ablation, AblationRow, AblationSummary, EvalReport,
    Execution, ExperimentConfig, FoldResult, Prediction,
};
pub use metrics::{accuracy, uf1, ClassMetrics, ConfusionMatrix};
pub use train::{train_model, TrainConfig, Trained};
