//! Experiment configuration and the commands behind the `dada` binary.

mod commands;
mod config;

pub use commands::{
    discover_models, estimate_kernels, estimate_pair, eval, load_target_pairs, plot, prepare_data, pretrain,
    test_domains, train_dada, true_kernel, KernelRecord, KernelReport, LabManifest, PlotFiles, Pretrained, EVAL_DIR,
    KERNEL_DIR, KERNEL_FILE, KERNEL_REPORT, LAB_FILE, MATRIX_JSON, PLOT_DIR, RUNS_FILE, SOURCE_ONLY_FILE,
    TARGET_ONLY_FILE,
};
pub use config::{
    AblationConfig, DataConfig, ExperimentConfig, KernelOptions, MetricsConfig, Overrides, SyntheticConfig,
};
