//! Ranking metrics, continuation tasks, embedding diagnostics, and the
//! ablation and context-size experiments.

mod experiments;
mod homogeneity;
mod metrics;
mod projection;
mod tasks;

pub use experiments::{
    evaluate_test, fit_recommender, run_ablation, sensitivity_sweep, test_table, AblationReport,
    AblationRun, EvalParams, RecommenderKind, RecommenderParams, SweepReport, Variant,
};
pub use homogeneity::{homogeneity, shuffled_playlists, HomogeneityReport};
pub use metrics::{ndcg_at_k, recall_at_k};
pub use projection::{project_2d, Projection};
pub use tasks::{build_tasks, evaluate, EvalTask, MetricReport, TaskMetrics, TaskSet};
