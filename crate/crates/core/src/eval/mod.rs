//! Metrics, scoreboards and the ablation sweeps.

mod metrics;
mod roc;
mod sweep;

pub use metrics::{
    ground_truth, head_rocs, precision_recall_f1, score_against, score_attribution, HeadMetrics, MetricsReport,
};
pub use roc::{average_roc, roc, write_points, RocCurve};
pub use sweep::{
    default_ood_family, median, run_cell, sweep_finetune, sweep_pretrain_size, sweep_prompt_count, AblationGrid, Axis,
    Cell, CellSpec, FinetuneAxis, SweepSettings,
};
