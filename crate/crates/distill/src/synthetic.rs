use autodiff::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::config::DistillConfig;
use crate::error::{DistillError, Result};

/// The trainable synthetic set: x̃ (Gaussian-initialized), fixed balanced
/// one-hot labels, and the trainable scalar learning rate η̃.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    /// Shape [N, ...sample shape].
    pub images: Tensor,
    /// Shape [N, n_classes], immutable.
    pub labels: Tensor,
    /// η̃, unconstrained scalar.
    pub eta: f64,
}

impl SyntheticDataset {
    pub fn n(&self) -> usize {
        self.images.shape()[0]
    }

    pub fn n_classes(&self) -> usize {
        self.labels.shape()[1]
    }

    /// Class index of each synthetic sample.
    pub fn class_ids(&self) -> Vec<usize> {
        let k = self.n_classes();
        (0..self.n())
            .map(|i| {
                self.labels.data()[i * k..(i + 1) * k]
                    .iter()
                    .position(|&v| v == 1.0)
                    .expect("one-hot row")
            })
            .collect()
    }
}

/// Seeded Gaussian x̃ with balanced one-hot labels in class order
/// (samples [c·N/k, (c+1)·N/k) carry class c) and η̃ = eta_init.
pub fn init_synthetic(
    config: &DistillConfig,
    sample_shape: &[usize],
    n_classes: usize,
) -> Result<SyntheticDataset> {
    config.validate(n_classes)?;
    let n = config.n_synthetic;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let numel: usize = n * sample_shape.iter().product::<usize>();
    let data: Vec<f64> = (0..numel).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut shape = vec![n];
    shape.extend_from_slice(sample_shape);
    let images = Tensor::new(shape, data).map_err(|e| DistillError::Model(e.to_string()))?;

    let per_class = n / n_classes;
    let mut labels = vec![0.0; n * n_classes];
    for i in 0..n {
        labels[i * n_classes + i / per_class] = 1.0;
    }
    let labels =
        Tensor::new(vec![n, n_classes], labels).map_err(|e| DistillError::Model(e.to_string()))?;
    Ok(SyntheticDataset { images, labels, eta: config.eta_init })
}
