//! Experiment orchestration: single runs, comparisons and MPLight training.

mod config;
mod report;
mod runner;
mod train;

pub use config::{
    build_controller, derive_seed, ControllerKind, HarnessError, LlmBackendKind, LlmSettings,
    RunConfig,
};
pub use report::{atomic_write, fmt_opt, markdown_table, mean, std_dev};
pub use runner::{
    compare, results_csv_row, run, write_compare_outputs, write_run_outputs, ComparePlan,
    CompareResult, CompareRow, RunResult, RESULTS_CSV_HEADER,
};
pub use train::{train, write_train_outputs, TrainConfig, TrainOutcome};
