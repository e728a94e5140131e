//! Accuracy and macro-F1, attention-map export and run comparison.

mod metrics;
mod report;

pub use metrics::{evaluate_examples, macro_f1, pairwise_accuracy, ClassMetrics, ConfusionMatrix, EvalReport};
pub use report::{
    compare_runs, config_hash, dump_attention, evaluate, mean_std, AttentionRow, Comparison, ComparisonRow,
};
