//! Command implementations behind the `fraud-rl` binary.
//!
//! Every command takes a [`RunConfig`] and writes its artifacts under the
//! config's output directory with fixed file names. Given the same config,
//! input files and seed, outputs are byte-identical across runs.

mod commands;
mod config;

pub use commands::{
    cmd_compare, cmd_eval, cmd_sweep_beta, cmd_synth, cmd_train, train_and_eval, CompareRow, EvalOutcome, RunContext,
    SweepRow, TrainOutcome, TrainReport, ACTIONS_FILE, CHECKPOINT_FILE, COMPARE_FILE, DATASET_FILE, METRICS_FILE,
    RESOLVED_CONFIG_FILE, SWEEP_FILE, TRACE_FILE, TRAIN_LOG_FILE,
};
pub use config::{MetricsConfig, ModelKind, RewardSelection, RunConfig};

/// Machine-readable category of an error chain: the library's own kind when
/// one is present, otherwise `"other"`.
pub fn error_kind(err: &anyhow::Error) -> &'static str {
    err.chain()
        .find_map(|e| e.downcast_ref::<fraud_rl::Error>())
        .map_or("other", fraud_rl::Error::kind)
}

/// Single-line JSON rendering of an error, for the failure exit path.
pub fn error_line(err: &anyhow::Error) -> String {
    serde_json::json!({
        "error": error_kind(err),
        "message": format!("{err:#}"),
    })
    .to_string()
}
