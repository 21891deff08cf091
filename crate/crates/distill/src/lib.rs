//! Bilevel performance-matching dataset distillation: trainable
//! synthetic images and learning rate optimized through T unrolled inner
//! gradient steps, with post-distillation evaluation and the QDD1
//! distilled-dataset format.

mod config;
mod engine;
mod error;
mod qdd;
mod synthetic;

pub use config::{DistillConfig, OuterOptimizer};
pub use engine::{
    distill, evaluate_distilled, inner_step, outer_step, DistillModel, DistilledResult,
    OuterState, StepRecord,
};
pub use error::{DistillError, Result};
pub use qdd::{read_qdd1, write_qdd1};
pub use synthetic::{init_synthetic, SyntheticDataset};
