use std::path::Path;

use autodiff::Tensor;
use dataio::{load_cifar10, load_mnist, LabeledDataset, Normalization, Split};

use crate::config::{CliError, Dataset, Result, RunConfig};

/// Load the train and test splits for a run, normalizing the test split
/// with the train statistics and applying --train-limit/--test-limit.
pub fn load_dataset(config: &RunConfig) -> Result<(LabeledDataset, LabeledDataset)> {
    let (mut train, mut test) = match config.dataset {
        Dataset::Mnist => {
            let dir = config.data_dir.join("mnist");
            let train = load_mnist(
                &existing(&dir.join("train-images-idx3-ubyte"))?,
                &existing(&dir.join("train-labels-idx1-ubyte"))?,
                Split::Train,
                None,
            )?;
            let test = load_mnist(
                &existing(&dir.join("t10k-images-idx3-ubyte"))?,
                &existing(&dir.join("t10k-labels-idx1-ubyte"))?,
                Split::Test,
                Some(train.normalization.clone()),
            )?;
            (train, test)
        }
        Dataset::Cifar10 => {
            let dir = config.data_dir.join("cifar10");
            let batches: Vec<_> = (1..=5)
                .map(|i| existing(&dir.join(format!("data_batch_{i}.bin"))))
                .collect::<Result<_>>()?;
            let train = load_cifar10(&batches, Split::Train, None)?;
            let test = load_cifar10(
                &[existing(&dir.join("test_batch.bin"))?],
                Split::Test,
                Some(train.normalization.clone()),
            )?;
            (train, test)
        }
    };
    if let Some(limit) = config.train_limit {
        truncate(&mut train, limit)?;
    }
    if let Some(limit) = config.test_limit {
        truncate(&mut test, limit)?;
    }
    Ok((train, test))
}

fn existing(path: &Path) -> Result<std::path::PathBuf> {
    if !path.exists() {
        return Err(CliError::Config(format!("data file not found: {}", path.display())));
    }
    Ok(path.to_path_buf())
}

/// Keep the first `limit` samples (deterministic subset).
pub fn truncate(ds: &mut LabeledDataset, limit: usize) -> Result<()> {
    if limit == 0 {
        return Err(CliError::Config("sample limit must be positive".into()));
    }
    if limit >= ds.len() {
        return Ok(());
    }
    let sample: usize = ds.images.shape()[1..].iter().product();
    let mut shape = ds.images.shape().to_vec();
    shape[0] = limit;
    ds.images = Tensor::new(shape, ds.images.data()[..limit * sample].to_vec())
        .map_err(|e| CliError::Config(e.to_string()))?;
    ds.labels.truncate(limit);
    Ok(())
}

/// Parse a normalization record back out of a config echo.
pub fn norm_from_echo(echo: &str) -> Option<Normalization> {
    let parse = |key: &str| -> Option<Vec<f64>> {
        crate::config::echo_field(echo, key)?
            .split(',')
            .map(|v| v.parse().ok())
            .collect()
    };
    Some(Normalization { shift: parse("norm_shift")?, scale: parse("norm_scale")? })
}
