//! IDX-format MNIST loader and fixture writer.

use std::io::Read;
use std::path::Path;

use autodiff::Tensor;

use crate::dataset::{channel_stats, sanity_check, LabeledDataset, Normalization, Split, MNIST_REF};
use crate::error::{DataError, Result};

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

/// Load an MNIST split. Pixels are scaled to [0,1], zero-padded from
/// 28×28 to 32×32, then standardized. When `norm` is None the statistics
/// are recomputed from this file's (pre-padding) pixels; pass the train
/// split's record to normalize the test split consistently. Real-sized
/// splits are sanity-checked against the reference constants.
pub fn load_mnist(
    images_path: &Path,
    labels_path: &Path,
    split: Split,
    norm: Option<Normalization>,
) -> Result<LabeledDataset> {
    let (count, rows, cols, pixels) = read_idx_images(images_path)?;
    let labels = read_idx_labels(labels_path)?;
    if count != labels.len() {
        return Err(DataError::CountMismatch { images: count, labels: labels.len() });
    }
    if rows != 28 || cols != 28 {
        return Err(DataError::Truncated {
            path: images_path.display().to_string(),
            msg: format!("expected 28x28 images, got {rows}x{cols}"),
        });
    }
    for (i, &l) in labels.iter().enumerate() {
        if l >= 10 {
            return Err(DataError::BadLabel {
                path: labels_path.display().to_string(),
                record: i,
                label: l as u8,
            });
        }
    }

    let raw: Vec<f64> = pixels.iter().map(|&b| b as f64 / 255.0).collect();
    let norm = match norm {
        Some(n) => n,
        None => {
            let n = channel_stats(&raw, 1, 28 * 28);
            if count >= 10_000 {
                sanity_check(&n, &[MNIST_REF])?;
            }
            n
        }
    };

    // zero-pad 28 -> 32 (2 px border), then standardize everything
    let border = norm.normalize(0.0, 0);
    let mut data = vec![border; count * 32 * 32];
    for m in 0..count {
        for r in 0..28 {
            for c in 0..28 {
                data[m * 1024 + (r + 2) * 32 + (c + 2)] =
                    norm.normalize(raw[m * 784 + r * 28 + c], 0);
            }
        }
    }
    Ok(LabeledDataset {
        images: Tensor::new(vec![count, 1, 32, 32], data)
            .map_err(|e| DataError::Invalid(e.to_string()))?,
        labels,
        split,
        normalization: norm,
    })
}

fn read_all(path: &Path) -> Result<Vec<u8>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    Ok(bytes)
}

fn be_u32(bytes: &[u8], pos: usize, path: &Path) -> Result<u32> {
    bytes
        .get(pos..pos + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| DataError::Truncated {
            path: path.display().to_string(),
            msg: format!("header field at offset {pos}"),
        })
}

/// Raw IDX image file: (count, rows, cols, pixel bytes).
pub fn read_idx_images(path: &Path) -> Result<(usize, usize, usize, Vec<u8>)> {
    let bytes = read_all(path)?;
    let magic = be_u32(&bytes, 0, path)?;
    if magic != IMAGES_MAGIC {
        return Err(DataError::BadIdxMagic {
            path: path.display().to_string(),
            got: magic,
            expected: IMAGES_MAGIC,
        });
    }
    let count = be_u32(&bytes, 4, path)? as usize;
    let rows = be_u32(&bytes, 8, path)? as usize;
    let cols = be_u32(&bytes, 12, path)? as usize;
    let need = 16 + count * rows * cols;
    if bytes.len() < need {
        return Err(DataError::Truncated {
            path: path.display().to_string(),
            msg: format!("{} bytes, need {need}", bytes.len()),
        });
    }
    Ok((count, rows, cols, bytes[16..need].to_vec()))
}

/// Raw IDX label file: class bytes.
pub fn read_idx_labels(path: &Path) -> Result<Vec<usize>> {
    let bytes = read_all(path)?;
    let magic = be_u32(&bytes, 0, path)?;
    if magic != LABELS_MAGIC {
        return Err(DataError::BadIdxMagic {
            path: path.display().to_string(),
            got: magic,
            expected: LABELS_MAGIC,
        });
    }
    let count = be_u32(&bytes, 4, path)? as usize;
    let need = 8 + count;
    if bytes.len() < need {
        return Err(DataError::Truncated {
            path: path.display().to_string(),
            msg: format!("{} bytes, need {need}", bytes.len()),
        });
    }
    Ok(bytes[8..need].iter().map(|&b| b as usize).collect())
}

/// Write an IDX image file (test fixtures and round-trip checks).
pub fn write_idx_images(path: &Path, rows: usize, cols: usize, images: &[u8]) -> Result<()> {
    if images.len() % (rows * cols) != 0 {
        return Err(DataError::Invalid("pixel buffer not a multiple of rows*cols".into()));
    }
    let count = images.len() / (rows * cols);
    let mut out = Vec::with_capacity(16 + images.len());
    out.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    out.extend_from_slice(&(count as u32).to_be_bytes());
    out.extend_from_slice(&(rows as u32).to_be_bytes());
    out.extend_from_slice(&(cols as u32).to_be_bytes());
    out.extend_from_slice(images);
    std::fs::write(path, out)?;
    Ok(())
}

/// Write an IDX label file.
pub fn write_idx_labels(path: &Path, labels: &[u8]) -> Result<()> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    std::fs::write(path, out)?;
    Ok(())
}
