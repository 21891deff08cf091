//! CIFAR-10 binary-format loader and fixture writer: 3073-byte records,
//! one label byte then 3×1024 channel-planar pixels.

use std::io::Read;
use std::path::Path;

use autodiff::Tensor;

use crate::dataset::{channel_stats, sanity_check, LabeledDataset, Normalization, Split, CIFAR_REF};
use crate::error::{DataError, Result};

pub const CIFAR_RECORD: usize = 3073;

/// Load one or more CIFAR-10 binary batch files as a single dataset.
/// Statistics are recomputed per channel unless `norm` is given.
pub fn load_cifar10(
    batch_paths: &[impl AsRef<Path>],
    split: Split,
    norm: Option<Normalization>,
) -> Result<LabeledDataset> {
    let mut labels = Vec::new();
    let mut raw = Vec::new();
    for p in batch_paths {
        let path = p.as_ref();
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        if bytes.is_empty() || bytes.len() % CIFAR_RECORD != 0 {
            return Err(DataError::BadCifarLength {
                path: path.display().to_string(),
                len: bytes.len(),
            });
        }
        for (i, rec) in bytes.chunks_exact(CIFAR_RECORD).enumerate() {
            if rec[0] >= 10 {
                return Err(DataError::BadLabel {
                    path: path.display().to_string(),
                    record: i,
                    label: rec[0],
                });
            }
            labels.push(rec[0] as usize);
            raw.extend(rec[1..].iter().map(|&b| b as f64 / 255.0));
        }
    }
    let count = labels.len();
    let norm = match norm {
        Some(n) => n,
        None => {
            let n = channel_stats(&raw, 3, 1024);
            if count >= 10_000 {
                let refs: Vec<(f64, f64)> =
                    CIFAR_REF.0.iter().zip(CIFAR_REF.1.iter()).map(|(&m, &s)| (m, s)).collect();
                sanity_check(&n, &refs)?;
            }
            n
        }
    };
    let data: Vec<f64> = raw
        .iter()
        .enumerate()
        .map(|(i, &v)| norm.normalize(v, (i % 3072) / 1024))
        .collect();
    Ok(LabeledDataset {
        images: Tensor::new(vec![count, 3, 32, 32], data)
            .map_err(|e| DataError::Invalid(e.to_string()))?,
        labels,
        split,
        normalization: norm,
    })
}

/// Write a CIFAR-10 binary batch file from (label, 3072 pixel bytes) records.
pub fn write_cifar10(path: &Path, records: &[(u8, Vec<u8>)]) -> Result<()> {
    let mut out = Vec::with_capacity(records.len() * CIFAR_RECORD);
    for (label, pixels) in records {
        if pixels.len() != 3072 {
            return Err(DataError::Invalid(format!(
                "record pixel buffer has {} bytes, need 3072",
                pixels.len()
            )));
        }
        out.push(*label);
        out.extend_from_slice(pixels);
    }
    std::fs::write(path, out)?;
    Ok(())
}
