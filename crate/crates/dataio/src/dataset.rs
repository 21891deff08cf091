use autodiff::Tensor;

use crate::error::{DataError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// Per-channel standardization record: normalized = (raw − shift) / scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalization {
    pub shift: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Normalization {
    pub fn normalize(&self, raw: f64, channel: usize) -> f64 {
        (raw - self.shift[channel]) / self.scale[channel]
    }

    pub fn denormalize(&self, v: f64, channel: usize) -> f64 {
        v * self.scale[channel] + self.shift[channel]
    }
}

/// Reference MNIST statistics (community standard); recomputed values are
/// used at load time, these bound the sanity check.
pub const MNIST_REF: (f64, f64) = (0.1307, 0.3081);
/// Reference CIFAR-10 per-channel statistics.
pub const CIFAR_REF: ([f64; 3], [f64; 3]) =
    ([0.4914, 0.4822, 0.4465], [0.2470, 0.2435, 0.2616]);

/// A normalized dataset of 32×32 images with integer class labels.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    /// Shape [M, c, 32, 32], standardized pixels.
    pub images: Tensor,
    pub labels: Vec<usize>,
    pub split: Split,
    pub normalization: Normalization,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.images.shape()[1]
    }

    /// Copy of samples `indices` as ([k,c,32,32] images, one-hot [k,n_classes]).
    pub fn batch(&self, indices: &[usize], n_classes: usize) -> Result<(Tensor, Tensor)> {
        let c = self.channels();
        let px = c * 32 * 32;
        let mut images = Vec::with_capacity(indices.len() * px);
        let mut labels = vec![0.0; indices.len() * n_classes];
        for (row, &i) in indices.iter().enumerate() {
            if i >= self.len() {
                return Err(DataError::Invalid(format!("sample index {i} out of range")));
            }
            images.extend_from_slice(&self.images.data()[i * px..(i + 1) * px]);
            labels[row * n_classes + self.labels[i]] = 1.0;
        }
        Ok((
            Tensor::new(vec![indices.len(), c, 32, 32], images)
                .map_err(|e| DataError::Invalid(e.to_string()))?,
            Tensor::new(vec![indices.len(), n_classes], labels)
                .map_err(|e| DataError::Invalid(e.to_string()))?,
        ))
    }
}

/// Mean/std over a raw pixel buffer grouped by channel; pixels are laid
/// out [M, c, h*w].
pub fn channel_stats(raw: &[f64], channels: usize, plane: usize) -> Normalization {
    let mut sum = vec![0.0; channels];
    let mut sum_sq = vec![0.0; channels];
    let mut count = vec![0usize; channels];
    let sample = channels * plane;
    for (i, &v) in raw.iter().enumerate() {
        let ch = (i % sample) / plane;
        sum[ch] += v;
        sum_sq[ch] += v * v;
        count[ch] += 1;
    }
    let shift: Vec<f64> = (0..channels).map(|c| sum[c] / count[c] as f64).collect();
    let scale: Vec<f64> = (0..channels)
        .map(|c| {
            let var = sum_sq[c] / count[c] as f64 - shift[c] * shift[c];
            var.max(0.0).sqrt().max(1e-12)
        })
        .collect();
    Normalization { shift, scale }
}

pub(crate) fn sanity_check(norm: &Normalization, refs: &[(f64, f64)]) -> Result<()> {
    for (c, &(mean_ref, std_ref)) in refs.iter().enumerate() {
        if (norm.shift[c] - mean_ref).abs() > 1e-2 {
            return Err(DataError::StatisticsSanity {
                name: format!("channel {c} mean"),
                got: norm.shift[c],
                reference: mean_ref,
            });
        }
        if (norm.scale[c] - std_ref).abs() > 1e-2 {
            return Err(DataError::StatisticsSanity {
                name: format!("channel {c} std"),
                got: norm.scale[c],
                reference: std_ref,
            });
        }
    }
    Ok(())
}
