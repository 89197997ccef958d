//! Dataset ingestion, training, evaluation and attention export.

pub mod dataset;
pub mod evaluate;
pub mod optim;
pub mod overlay;
pub mod prepare;
pub mod stats;
pub mod synthetic;
pub mod train;

pub use dataset::{load_dataset, split_dataset, split_sizes, ComparisonRecord, Dataset, DatasetSplit, LoadReport, RowIssue};
pub use evaluate::{
    benchmark_attention, evaluate, BenchmarkOptions, EvalResolution, EvalResult, Evaluation, PairPrediction,
    SourceSelection,
};
pub use optim::{AdamW, AdamWConfig, ScheduleConfig, WarmupCosine};
pub use overlay::{export_overlays, OverlayExport};
pub use prepare::{PairGaze, PrepareOptions, PreparedData, PreparedPair, SideGaze};
pub use stats::{t_interval, MeanCi};
pub use synthetic::{SyntheticPair, SyntheticTask};
pub use train::{train, EpochRecord, RunDir, TrainConfig, TrainOutcome};
