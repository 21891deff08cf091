//! MNIST/CIFAR-10 binary parsing, normalization, PGM/PPM export, and the
//! metrics log.

mod cifar;
mod dataset;
mod error;
mod images;
mod metrics;
mod mnist;

pub use cifar::{load_cifar10, write_cifar10, CIFAR_RECORD};
pub use dataset::{channel_stats, LabeledDataset, Normalization, Split, CIFAR_REF, MNIST_REF};
pub use error::{DataError, Result};
pub use images::{export_images, read_netpbm};
pub use metrics::{parse_metrics, MetricsWriter};
pub use mnist::{load_mnist, read_idx_images, read_idx_labels, write_idx_images, write_idx_labels};
