use autodiff::{Tape, Tensor, Var};
use qsim::{HermitianObservable, PQCParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{QnnError, Result};
use crate::layers::{avgpool2, conv2d, dense, qnn_layer_forward};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Classical,
    Quantum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Observable {
    PauliZ,
    HermitianTrainable,
    HermitianFrozen,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    pub variant: Variant,
    pub residual: bool,
    pub observable: Observable,
    /// (channels, height, width); 32×32 with 1 or 3 channels.
    pub input_spec: (usize, usize, usize),
    pub n_classes: usize,
    pub l_layers: usize,
}

impl ModelConfig {
    /// MNIST defaults for a named variant.
    pub fn for_variant(variant: Variant, residual: bool, observable: Observable) -> Self {
        ModelConfig {
            variant,
            residual,
            observable,
            input_spec: (1, 32, 32),
            n_classes: 10,
            l_layers: 3,
        }
    }
}

/// Ordered, named parameter tensors (θ) plus the seed that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub names: Vec<String>,
    pub tensors: Vec<Tensor>,
    pub seed: u64,
}

impl ModelParams {
    pub fn n_params(&self) -> usize {
        self.tensors.iter().map(|t| t.numel()).sum()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }
}

/// An assembled architecture: the config plus the PQC ring structure.
/// Parameters live in `ModelParams`; forward binds them as tape Vars.
#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub pqc: PQCParams,
}

pub const N_QUBITS: usize = 6;

pub fn build_model(config: ModelConfig) -> Result<Model> {
    match config.input_spec {
        (1, 32, 32) | (3, 32, 32) => {}
        other => {
            return Err(QnnError::InvalidConfig(format!(
                "unsupported input_spec {other:?}; expected (1,32,32) or (3,32,32)"
            )))
        }
    }
    if config.variant == Variant::Classical && config.residual {
        return Err(QnnError::InvalidConfig(
            "residual=true requires the quantum variant".into(),
        ));
    }
    if config.n_classes == 0 || config.l_layers == 0 {
        return Err(QnnError::InvalidConfig("n_classes and l_layers must be positive".into()));
    }
    let pqc = PQCParams::new(
        Tensor::zeros(&[config.l_layers, N_QUBITS, 3]),
        PQCParams::default_ranges(config.l_layers, N_QUBITS),
        N_QUBITS,
    )?;
    Ok(Model { config, pqc })
}

impl Model {
    /// Parameter tensor names in binding order.
    pub fn param_names(&self) -> Vec<String> {
        let mut names = vec![
            "conv1.kernels".to_string(),
            "conv1.bias".to_string(),
            "conv2.kernels".to_string(),
            "conv2.bias".to_string(),
            "fc1.weights".to_string(),
            "fc1.bias".to_string(),
            "fc2.weights".to_string(),
            "fc2.bias".to_string(),
        ];
        if self.config.variant == Variant::Quantum {
            names.push("qnn.angles".to_string());
            names.push("qnn.coeffs".to_string());
            if self.config.residual {
                names.push("qnn.residual_weights".to_string());
                names.push("qnn.residual_bias".to_string());
            }
        }
        names.push("fc3.weights".to_string());
        names.push("fc3.bias".to_string());
        names
    }

    /// Shape of each parameter tensor, aligned with `param_names`.
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        let c = self.config.input_spec.0;
        let k = self.config.n_classes;
        let mut shapes = vec![
            vec![6, c, 5, 5],
            vec![6],
            vec![16, 6, 5, 5],
            vec![16],
            vec![120, 400],
            vec![120],
        ];
        match self.config.variant {
            Variant::Classical => {
                shapes.push(vec![84, 120]);
                shapes.push(vec![84]);
                shapes.push(vec![k, 84]);
                shapes.push(vec![k]);
            }
            Variant::Quantum => {
                shapes.push(vec![64, 120]);
                shapes.push(vec![64]);
                shapes.push(vec![self.config.l_layers, N_QUBITS, 3]);
                shapes.push(vec![N_QUBITS, 4]);
                if self.config.residual {
                    shapes.push(vec![N_QUBITS, 64]);
                    shapes.push(vec![N_QUBITS]);
                }
                shapes.push(vec![k, N_QUBITS]);
                shapes.push(vec![k]);
            }
        }
        shapes
    }

    /// Whether gradients are applied to the named parameter group.
    /// Hermitian coefficients update only in the trainable-observable
    /// configuration.
    pub fn is_trainable(&self, name: &str) -> bool {
        if name == "qnn.coeffs" {
            return self.config.observable == Observable::HermitianTrainable;
        }
        true
    }

    /// Deterministic θ₀: conv/dense weights and biases uniform in
    /// ±1/√fan_in, circuit angles uniform [0, 2π), Hermitian coefficients
    /// at the exact Pauli-Z point (0,0,0,1), residual projection weights
    /// small uniform with zero bias.
    pub fn init_params(&self, seed: u64) -> ModelParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let names = self.param_names();
        let shapes = self.param_shapes();
        let mut fan_in = 1usize;
        let tensors = names
            .iter()
            .zip(&shapes)
            .map(|(name, shape)| {
                if name.ends_with(".kernels") || name.ends_with("weights") {
                    fan_in = shape[1..].iter().product();
                }
                init_tensor(name, shape, fan_in, &mut rng)
            })
            .collect();
        ModelParams { names, tensors, seed }
    }

    /// Logits [b, n_classes] from images [b,c,32,32]. `params` are tape
    /// Vars aligned with `param_names`; gradients flow to both the
    /// parameters and the input pixels.
    pub fn forward<'t>(&self, _tape: &'t Tape, params: &[Var<'t>], images: Var<'t>) -> Result<Var<'t>> {
        let names = self.param_names();
        if params.len() != names.len() {
            return Err(QnnError::InvalidConfig(format!(
                "expected {} parameter vars, got {}",
                names.len(),
                params.len()
            )));
        }
        let (c, h, w) = self.config.input_spec;
        let xs = images.shape();
        if xs.len() != 4 || xs[1] != c || xs[2] != h || xs[3] != w {
            return Err(QnnError::BadShape {
                op: "forward",
                got: xs,
                expected: format!("[b, {c}, {h}, {w}]"),
            });
        }
        let p = |name: &str| params[names.iter().position(|n| n == name).unwrap()];

        let x = conv2d(images, p("conv1.kernels"), p("conv1.bias"))?.tanh()?;
        let x = avgpool2(x)?;
        let x = conv2d(x, p("conv2.kernels"), p("conv2.bias"))?.tanh()?;
        let x = avgpool2(x)?;
        let b = x.shape()[0];
        let x = x.reshape(&[b, 400])?;
        let x = dense(x, p("fc1.weights"), p("fc1.bias"))?.tanh()?;
        let x = dense(x, p("fc2.weights"), p("fc2.bias"))?.tanh()?;
        let x = match self.config.variant {
            Variant::Classical => x,
            Variant::Quantum => {
                let residual = if self.config.residual {
                    Some((p("qnn.residual_weights"), p("qnn.residual_bias")))
                } else {
                    None
                };
                qnn_layer_forward(x, &self.pqc, p("qnn.angles"), p("qnn.coeffs"), residual)?
            }
        };
        dense(x, p("fc3.weights"), p("fc3.bias"))
    }

    /// The realized observable at a given parameter point, for inspection.
    pub fn observable_of(&self, params: &ModelParams) -> Option<HermitianObservable> {
        params.get("qnn.coeffs").map(|t| {
            HermitianObservable::new(t.clone(), self.config.observable == Observable::HermitianTrainable)
                .expect("coeffs shape fixed by construction")
        })
    }
}

fn init_tensor(name: &str, shape: &[usize], fan_in: usize, rng: &mut ChaCha8Rng) -> Tensor {
    match name {
        "qnn.angles" => random_tensor(shape, rng, 0.0, std::f64::consts::TAU),
        "qnn.coeffs" => {
            let mut data = vec![0.0; shape.iter().product()];
            for q in 0..shape[0] {
                data[q * 4 + 3] = 1.0;
            }
            Tensor::new(shape.to_vec(), data).unwrap()
        }
        "qnn.residual_bias" => Tensor::zeros(shape),
        // weights, kernels, and biases all draw from ±1/√fan_in of the
        // layer they belong to
        _ => {
            let bound = 1.0 / (fan_in as f64).sqrt();
            random_tensor(shape, rng, -bound, bound)
        }
    }
}

fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(lo..hi)).collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}
