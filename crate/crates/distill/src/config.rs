use crate::error::{DistillError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OuterOptimizer {
    PlainGd,
    Adam,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistillConfig {
    /// N, the synthetic set size.
    pub n_synthetic: usize,
    /// T, unrolled inner gradient steps.
    pub inner_steps: usize,
    /// Outer passes over the real training data.
    pub epochs: usize,
    /// α, the fixed outer step size (Adam learning rate when selected).
    pub alpha: f64,
    /// Real-data minibatch size for the outer loss.
    pub batch_size: usize,
    pub seed: u64,
    /// η̃ starting value.
    pub eta_init: f64,
    pub outer_optimizer: OuterOptimizer,
}

impl DistillConfig {
    pub fn validate(&self, n_classes: usize) -> Result<()> {
        if self.inner_steps < 1 {
            return Err(DistillError::InvalidConfig("inner_steps (T) must be >= 1".into()));
        }
        if self.epochs < 1 {
            return Err(DistillError::InvalidConfig("epochs must be >= 1".into()));
        }
        if !(self.alpha > 0.0) {
            return Err(DistillError::InvalidConfig("alpha must be positive".into()));
        }
        if self.batch_size < 1 {
            return Err(DistillError::InvalidConfig("batch_size must be >= 1".into()));
        }
        if n_classes == 0 || self.n_synthetic % n_classes != 0 {
            return Err(DistillError::InvalidConfig(format!(
                "n_synthetic {} must be divisible by the class count {n_classes}",
                self.n_synthetic
            )));
        }
        Ok(())
    }
}

impl Default for DistillConfig {
    /// MNIST defaults: 10 images, 1 inner step, 3 epochs.
    fn default() -> Self {
        DistillConfig {
            n_synthetic: 10,
            inner_steps: 1,
            epochs: 3,
            alpha: 0.1,
            batch_size: 256,
            seed: 0,
            eta_init: 0.01,
            outer_optimizer: OuterOptimizer::PlainGd,
        }
    }
}
