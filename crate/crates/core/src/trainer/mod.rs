//! Source pretraining, the dual-branch adaptation loop, checkpoints and
//! end-to-end experiment runs.

mod batch;
mod config;
mod dada;
mod experiment;
mod state;
mod supervised;

pub use batch::{iteration_rng, sample_lr, sample_pairs, DadaBatch, PairedBatch, STREAM_DADA, STREAM_SOURCE, STREAM_TARGET};
pub use config::{Toggles, TrainConfig};
pub use dada::{make_pseudo_labels, DadaTrainer, DiscLosses, GeneratorPass, PseudoLabel, SrOutputs};
pub use experiment::{
    load_or_pretrain, load_source_train, load_target_train, load_test, run_experiment, ExperimentOutcome, LogRecord,
    RunOptions, CHECKPOINT_FILE, CONFIG_FILE, EVAL_LOG, MODEL_FILE, PRETRAINED_FILE, PRETRAIN_LOG, PRETRAIN_STATE_FILE,
    REPORT_CSV, REPORT_JSON, TRAIN_LOG,
};
pub use state::{load_model, save_model};
pub use supervised::{
    pretrain_source, source_baselines, target_only, train_supervised, SupervisedRecord, SupervisedTrainer,
};
