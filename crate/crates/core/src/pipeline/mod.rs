//! End-to-end operations behind the command-line tool: data preparation,
//! training with checkpoints, prediction, evaluation and attention export.

mod checkpoint;
mod config;
mod data;
mod infer;
mod train;

pub use checkpoint::{Checkpoint, CheckpointMeta};
pub use config::{stream_rng, DataConfig, RunConfig, Stream};
pub use data::{
    batches_for_epoch, epoch_batches, eval_batches, normalize_all, prepare_scenes, PreparedData,
};
pub use infer::{
    align, attention_records, evaluate_predictions, predict_scenes, read_jsonl, write_jsonl,
    MlrBaseline, PredictionRow,
};
pub use train::{
    mean_nll, train_epoch, train_model, EpochLog, TrainSummary, BEST_CKPT, LAST_CKPT, TRAIN_LOG,
};
