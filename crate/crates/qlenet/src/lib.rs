//! Command-line driver for hybrid quantum–classical LeNet dataset
//! distillation: config resolution, data staging, the five commands, and
//! the gradient-check harness. Exposed as a library so integration tests
//! can call commands directly.

pub mod commands;
pub mod config;
pub mod data;
pub mod gradcheck;

pub use commands::{
    cmd_distill, cmd_eval, cmd_export_images, cmd_train_baseline, test_accuracy, DistillOutcome,
};
pub use config::{
    echo_field, parse_optimizer, CliError, Dataset, FileConfig, Result, RunConfig, VariantName,
};
pub use data::{load_dataset, norm_from_echo, truncate};
pub use gradcheck::{run_gradcheck, CheckResult};
