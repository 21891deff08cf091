use std::path::{Path, PathBuf};

use serde::Deserialize;

use distill::{DistillConfig, OuterOptimizer};
use qnn::{ModelConfig, Observable, Variant};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Data(#[from] dataio::DataError),
    #[error(transparent)]
    Qnn(#[from] qnn::QnnError),
    #[error(transparent)]
    Distill(#[from] distill::DistillError),
    #[error(transparent)]
    Ad(#[from] autodiff::AdError),
}

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dataset {
    Mnist,
    Cifar10,
}

impl Dataset {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "mnist" => Ok(Dataset::Mnist),
            "cifar10" => Ok(Dataset::Cifar10),
            other => Err(CliError::Config(format!("unknown dataset {other:?}"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Dataset::Mnist => "mnist",
            Dataset::Cifar10 => "cifar10",
        }
    }

    pub fn channels(&self) -> usize {
        match self {
            Dataset::Mnist => 1,
            Dataset::Cifar10 => 3,
        }
    }
}

/// The five model variants exposed on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VariantName {
    Classical,
    QNrNh,
    QNrH,
    QRH,
    QRHFrozen,
}

impl VariantName {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "classical" => Ok(VariantName::Classical),
            "q-nr-nh" => Ok(VariantName::QNrNh),
            "q-nr-h" => Ok(VariantName::QNrH),
            "q-r-h" => Ok(VariantName::QRH),
            "q-r-h-frozen" => Ok(VariantName::QRHFrozen),
            other => Err(CliError::Config(format!(
                "unknown variant {other:?} (expected classical|q-nr-nh|q-nr-h|q-r-h|q-r-h-frozen)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            VariantName::Classical => "classical",
            VariantName::QNrNh => "q-nr-nh",
            VariantName::QNrH => "q-nr-h",
            VariantName::QRH => "q-r-h",
            VariantName::QRHFrozen => "q-r-h-frozen",
        }
    }

    pub fn to_model_fields(self) -> (Variant, bool, Observable) {
        match self {
            VariantName::Classical => (Variant::Classical, false, Observable::PauliZ),
            VariantName::QNrNh => (Variant::Quantum, false, Observable::PauliZ),
            VariantName::QNrH => (Variant::Quantum, false, Observable::HermitianTrainable),
            VariantName::QRH => (Variant::Quantum, true, Observable::HermitianTrainable),
            VariantName::QRHFrozen => (Variant::Quantum, true, Observable::HermitianFrozen),
        }
    }
}

/// Optional values read from a TOML config file; command-line flags win.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub dataset: Option<String>,
    pub variant: Option<String>,
    pub n_synthetic: Option<usize>,
    pub inner_steps: Option<usize>,
    pub epochs: Option<usize>,
    pub alpha: Option<f64>,
    pub eta_init: Option<f64>,
    pub batch_size: Option<usize>,
    pub seed: Option<u64>,
    pub layers: Option<usize>,
    pub optimizer: Option<String>,
    pub train_limit: Option<usize>,
    pub test_limit: Option<usize>,
    pub data_dir: Option<String>,
    pub out_dir: Option<String>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

/// Fully resolved run configuration; every run is determined by this
/// plus nothing else.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub dataset: Dataset,
    pub variant: VariantName,
    pub layers: usize,
    pub distill: DistillConfig,
    pub train_limit: Option<usize>,
    pub test_limit: Option<usize>,
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
}

impl RunConfig {
    pub fn model_config(&self) -> ModelConfig {
        let (variant, residual, observable) = self.variant.to_model_fields();
        ModelConfig {
            variant,
            residual,
            observable,
            input_spec: (self.dataset.channels(), 32, 32),
            n_classes: 10,
            l_layers: self.layers,
        }
    }

    /// Per-dataset paper defaults: MNIST N=10/T=1, CIFAR-10 N=100/T=10,
    /// both 3 epochs.
    pub fn default_distill(dataset: Dataset) -> DistillConfig {
        match dataset {
            Dataset::Mnist => DistillConfig {
                n_synthetic: 10,
                inner_steps: 1,
                ..DistillConfig::default()
            },
            Dataset::Cifar10 => DistillConfig {
                n_synthetic: 100,
                inner_steps: 10,
                ..DistillConfig::default()
            },
        }
    }

    /// Single-line key=value echo embedded in every artifact.
    pub fn echo(&self, command: &str, norm: Option<&dataio::Normalization>) -> String {
        let d = &self.distill;
        let opt = match d.outer_optimizer {
            OuterOptimizer::PlainGd => "plain-gd",
            OuterOptimizer::Adam => "adam",
        };
        let mut s = format!(
            "command={command} dataset={} variant={} layers={} n_synthetic={} inner_steps={} \
             epochs={} alpha={} batch_size={} seed={} eta_init={} optimizer={opt} \
             train_limit={} test_limit={}",
            self.dataset.name(),
            self.variant.name(),
            self.layers,
            d.n_synthetic,
            d.inner_steps,
            d.epochs,
            d.alpha,
            d.batch_size,
            d.seed,
            d.eta_init,
            self.train_limit.map_or("none".to_string(), |v| v.to_string()),
            self.test_limit.map_or("none".to_string(), |v| v.to_string()),
        );
        if let Some(n) = norm {
            let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
            s.push_str(&format!(" norm_shift={} norm_scale={}", join(&n.shift), join(&n.scale)));
        }
        s
    }
}

/// Parse one value back out of an echo string.
pub fn echo_field<'a>(echo: &'a str, key: &str) -> Option<&'a str> {
    echo.split_whitespace()
        .find_map(|pair| pair.strip_prefix(key).and_then(|rest| rest.strip_prefix('=')))
}

pub fn parse_optimizer(s: &str) -> Result<OuterOptimizer> {
    match s {
        "plain-gd" => Ok(OuterOptimizer::PlainGd),
        "adam" => Ok(OuterOptimizer::Adam),
        other => Err(CliError::Config(format!("unknown optimizer {other:?}"))),
    }
}
