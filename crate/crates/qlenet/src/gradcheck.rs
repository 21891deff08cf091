//! The `gradcheck` command: every differentiable layer, the full quantum
//! LeNet loss, the parameter-shift oracle, and T=1/T=2 hypergradients,
//! each checked against an independent numerical oracle.

use autodiff::{backward, finite_diff_gradient, max_rel_err, Tape, Tensor, Var};
use distill::DistillModel;
use qnn::{
    avgpool2, build_model, conv2d, dense, qnn_layer_forward, softmax_cross_entropy, ModelConfig,
    Observable, Variant,
};
use qsim::{parameter_shift_grad, qnn_forward, CircuitSpec, PQCParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::Result;

pub const LAYER_THRESHOLD: f64 = 1e-4;
pub const SHIFT_THRESHOLD: f64 = 1e-8;
pub const HYPER_THRESHOLD: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: String,
    pub max_rel_err: f64,
    pub threshold: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.max_rel_err < self.threshold
    }
}

fn rand_tensor(shape: &[usize], rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

/// Max relative error between the autodiff gradients of a scalar
/// function and central finite differences, over every input tensor.
/// `f_auto` builds the scalar on a tape from leaves for the inputs.
fn layer_check(
    inputs: &[Tensor],
    f_auto: &dyn for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
) -> Result<f64> {
    let tape = Tape::new();
    let leaves: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let loss = f_auto(&tape, &leaves)?;
    let grads = backward(loss, &leaves, false)?;

    let value_of = |probe: &[Tensor]| -> f64 {
        let tape = Tape::new();
        let vars: Vec<Var> = probe.iter().map(|t| tape.constant(t.clone())).collect();
        f_auto(&tape, &vars).unwrap().item()
    };

    let mut worst = 0.0f64;
    for (i, x) in inputs.iter().enumerate() {
        let fd = finite_diff_gradient(
            |probe| {
                let mut all = inputs.to_vec();
                all[i] = probe.clone();
                value_of(&all)
            },
            x,
            1e-5,
        );
        worst = worst.max(max_rel_err(&grads[i].value(), &fd, 1e-6));
    }
    Ok(worst)
}

fn check_dense(rng: &mut ChaCha8Rng) -> Result<CheckResult> {
    let inputs = vec![
        rand_tensor(&[3, 5], rng, -1.0, 1.0),
        rand_tensor(&[4, 5], rng, -1.0, 1.0),
        rand_tensor(&[4], rng, -1.0, 1.0),
        rand_tensor(&[3, 4], rng, -1.0, 1.0), // readout weights
    ];
    let err = layer_check(&inputs, &|_tape, v| {
        Ok(dense(v[0], v[1], v[2])?.mul(v[3])?.sum_all()?)
    })?;
    Ok(CheckResult { name: "layer:dense".into(), max_rel_err: err, threshold: LAYER_THRESHOLD })
}

fn check_conv2d(rng: &mut ChaCha8Rng) -> Result<CheckResult> {
    let inputs = vec![
        rand_tensor(&[2, 2, 6, 6], rng, -1.0, 1.0),
        rand_tensor(&[3, 2, 5, 5], rng, -0.5, 0.5),
        rand_tensor(&[3], rng, -0.5, 0.5),
        rand_tensor(&[2, 3, 2, 2], rng, -1.0, 1.0),
    ];
    let err = layer_check(&inputs, &|_tape, v| {
        Ok(conv2d(v[0], v[1], v[2])?.mul(v[3])?.sum_all()?)
    })?;
    Ok(CheckResult { name: "layer:conv2d".into(), max_rel_err: err, threshold: LAYER_THRESHOLD })
}

fn check_pool_tanh(rng: &mut ChaCha8Rng) -> Result<CheckResult> {
    let inputs = vec![
        rand_tensor(&[2, 3, 4, 4], rng, -1.5, 1.5),
        rand_tensor(&[2, 3, 2, 2], rng, -1.0, 1.0),
    ];
    let err = layer_check(&inputs, &|_tape, v| {
        Ok(avgpool2(v[0].tanh()?)?.mul(v[1])?.sum_all()?)
    })?;
    Ok(CheckResult {
        name: "layer:avgpool2+tanh".into(),
        max_rel_err: err,
        threshold: LAYER_THRESHOLD,
    })
}

fn check_softmax_ce(rng: &mut ChaCha8Rng) -> Result<CheckResult> {
    let logits = rand_tensor(&[4, 10], rng, -2.0, 2.0);
    let mut labels = Tensor::zeros(&[4, 10]);
    for row in 0..4 {
        let class = rng.gen_range(0..10usize);
        labels.data_mut()[row * 10 + class] = 1.0;
    }
    let err = layer_check(&[logits], &|tape, v| {
        Ok(softmax_cross_entropy(v[0], tape.constant(labels.clone()))?)
    })?;
    Ok(CheckResult {
        name: "layer:softmax-ce".into(),
        max_rel_err: err,
        threshold: LAYER_THRESHOLD,
    })
}

fn check_qnn_layer(rng: &mut ChaCha8Rng) -> Result<CheckResult> {
    let pqc = PQCParams::new(Tensor::zeros(&[2, 6, 3]), PQCParams::default_ranges(2, 6), 6)
        .map_err(|e| crate::config::CliError::Config(e.to_string()))?;
    let inputs = vec![
        rand_tensor(&[2, 64], rng, -1.0, 1.0),
        rand_tensor(&[2, 6, 3], rng, 0.0, std::f64::consts::TAU),
        rand_tensor(&[6, 4], rng, -1.0, 1.0),
        rand_tensor(&[6, 64], rng, -0.2, 0.2),
        rand_tensor(&[6], rng, -0.2, 0.2),
        rand_tensor(&[2, 6], rng, -1.0, 1.0),
    ];
    let err = layer_check(&inputs, &|_tape, v| {
        let out = qnn_layer_forward(v[0], &pqc, v[1], v[2], Some((v[3], v[4])))
            .map_err(crate::config::CliError::Qnn)?;
        Ok(out.mul(v[5])?.sum_all()?)
    })?;
    Ok(CheckResult { name: "layer:qnn".into(), max_rel_err: err, threshold: LAYER_THRESHOLD })
}

/// Full q-r-h LeNet loss: autodiff gradients of every parameter group
/// and the input pixels against finite differences on sampled
/// coordinates (the full sweep over 60k+ parameters would take hours).
fn check_full_model(rng: &mut ChaCha8Rng) -> Result<CheckResult> {
    let model = build_model(ModelConfig::for_variant(
        Variant::Quantum,
        true,
        Observable::HermitianTrainable,
    ))?;
    let params = model.init_params(rng.gen());
    let images = rand_tensor(&[2, 1, 32, 32], rng, -0.5, 0.5);
    let mut labels = Tensor::zeros(&[2, 10]);
    labels.data_mut()[3] = 1.0;
    labels.data_mut()[10 + 7] = 1.0;

    let loss_of = |tensors: &[Tensor], imgs: &Tensor| -> f64 {
        let tape = Tape::new();
        let vars: Vec<Var> = tensors.iter().map(|t| tape.constant(t.clone())).collect();
        let logits = model.forward(&tape, &vars, tape.constant(imgs.clone())).unwrap();
        softmax_cross_entropy(logits, tape.constant(labels.clone())).unwrap().item()
    };

    let tape = Tape::new();
    let vars: Vec<Var> = params.tensors.iter().map(|t| tape.leaf(t.clone())).collect();
    let img_var = tape.leaf(images.clone());
    let logits = model.forward(&tape, &vars, img_var)?;
    let loss = softmax_cross_entropy(logits, tape.constant(labels.clone()))?;
    let mut leaves = vars.clone();
    leaves.push(img_var);
    let grads = backward(loss, &leaves, false)?;

    let eps = 1e-5;
    let mut worst = 0.0f64;
    // every parameter group, sampled coordinates
    for (gi, tensor) in params.tensors.iter().enumerate() {
        let auto = grads[gi].value();
        let scale = auto.max_abs().max(1e-6);
        for _ in 0..6.min(tensor.numel()) {
            let i = rng.gen_range(0..tensor.numel());
            let mut plus = params.tensors.to_vec();
            plus[gi].data_mut()[i] += eps;
            let mut minus = params.tensors.to_vec();
            minus[gi].data_mut()[i] -= eps;
            let fd = (loss_of(&plus, &images) - loss_of(&minus, &images)) / (2.0 * eps);
            worst = worst.max((auto.data()[i] - fd).abs() / scale);
        }
    }
    // input pixels
    let auto = grads[params.tensors.len()].value();
    let scale = auto.max_abs().max(1e-6);
    for _ in 0..12 {
        let i = rng.gen_range(0..images.numel());
        let mut plus = images.clone();
        plus.data_mut()[i] += eps;
        let mut minus = images.clone();
        minus.data_mut()[i] -= eps;
        let fd = (loss_of(&params.tensors, &plus) - loss_of(&params.tensors, &minus)) / (2.0 * eps);
        worst = worst.max((auto.data()[i] - fd).abs() / scale);
    }
    Ok(CheckResult {
        name: "model:full-quantum-loss".into(),
        max_rel_err: worst,
        threshold: LAYER_THRESHOLD,
    })
}

/// Parameter-shift equivalence over ≥100 random trials: autodiff
/// gradients of all angles of random 6-qubit 3-layer circuits against
/// the two-point shift oracle. Returns (check, trial count).
fn check_parameter_shift(rng: &mut ChaCha8Rng) -> Result<(CheckResult, usize)> {
    let layers = 3;
    let mut worst = 0.0f64;
    let mut trials = 0usize;
    for _ in 0..3 {
        let ranges = PQCParams::default_ranges(layers, 6);
        let angles = rand_tensor(&[layers, 6, 3], rng, 0.0, std::f64::consts::TAU);
        let coeffs = rand_tensor(&[6, 4], rng, -1.0, 1.0);
        let features = rand_tensor(&[1, 64], rng, -1.0, 1.0);
        let weights = rand_tensor(&[1, 6], rng, -1.0, 1.0);

        let pqc = PQCParams::new(Tensor::zeros(&[layers, 6, 3]), ranges.clone(), 6)
            .map_err(|e| crate::config::CliError::Config(e.to_string()))?;
        let tape = Tape::new();
        let a = tape.leaf(angles.clone());
        let out = qnn_forward(tape.constant(features.clone()), &pqc, a, tape.constant(coeffs.clone()))
            .map_err(|e| crate::config::CliError::Config(e.to_string()))?;
        let loss = out.mul(tape.constant(weights.clone()))?.sum_all()?;
        let auto = backward(loss, &[a], false)?[0].value();

        let spec = CircuitSpec {
            n_qubits: 6,
            angles: angles.data().to_vec(),
            ranges,
            coeffs: coeffs.data().to_vec(),
            features: features.data().to_vec(),
        };
        for l in 0..layers {
            for q in 0..6 {
                for e in 0..3 {
                    let shift = parameter_shift_grad(&spec, l, q, e, weights.data())
                        .map_err(|err| crate::config::CliError::Config(err.to_string()))?;
                    let a = auto.data()[(l * 6 + q) * 3 + e];
                    worst = worst.max((a - shift).abs() / a.abs().max(shift.abs()).max(1e-10));
                    trials += 1;
                }
            }
        }
    }
    Ok((
        CheckResult {
            name: format!("quantum:parameter-shift({trials} trials)"),
            max_rel_err: worst,
            threshold: SHIFT_THRESHOLD,
        },
        trials,
    ))
}

/// 56-parameter dense+QNN toy model for the hypergradient checks.
struct ToyModel {
    pqc: PQCParams,
}

impl ToyModel {
    fn new() -> Self {
        ToyModel {
            pqc: PQCParams::new(Tensor::zeros(&[1, 6, 3]), PQCParams::default_ranges(1, 6), 6)
                .unwrap(),
        }
    }

    fn init(&self, rng: &mut ChaCha8Rng) -> Vec<Tensor> {
        vec![
            rand_tensor(&[1, 6, 3], rng, 0.0, std::f64::consts::TAU),
            rand_tensor(&[6, 4], rng, -0.5, 0.5),
            rand_tensor(&[2, 6], rng, -0.4, 0.4),
            rand_tensor(&[2], rng, -0.4, 0.4),
        ]
    }
}

impl DistillModel for ToyModel {
    fn group_names(&self) -> Vec<String> {
        vec!["angles".into(), "coeffs".into(), "fc.weights".into(), "fc.bias".into()]
    }

    fn logits<'t>(
        &self,
        _tape: &'t Tape,
        params: &[Var<'t>],
        images: Var<'t>,
    ) -> distill::Result<Var<'t>> {
        let q = qnn_forward(images, &self.pqc, params[0], params[1])
            .map_err(|e| distill::DistillError::Model(e.to_string()))?;
        Ok(dense(q, params[2], params[3])?)
    }
}

fn pipeline_loss<M: DistillModel>(
    model: &M,
    theta0: &[Tensor],
    synth_images: &Tensor,
    synth_labels: &Tensor,
    eta: f64,
    t_steps: usize,
    rx: &Tensor,
    ry: &Tensor,
) -> f64 {
    let tape = Tape::new();
    let x = tape.constant(synth_images.clone());
    let y = tape.constant(synth_labels.clone());
    let eta = tape.scalar(eta);
    let mut theta: Vec<Var> = theta0.iter().map(|p| tape.leaf(p.clone())).collect();
    for t in 0..t_steps {
        theta = distill::inner_step(model, &tape, &theta, x, y, eta, true, t).unwrap();
    }
    model
        .loss(&tape, &theta, tape.constant(rx.clone()), tape.constant(ry.clone()))
        .unwrap()
        .item()
}

fn check_hypergradient(rng: &mut ChaCha8Rng, t_steps: usize) -> Result<CheckResult> {
    let model = ToyModel::new();
    let theta0 = model.init(rng);
    let synth_images = rand_tensor(&[2, 64], rng, -1.0, 1.0);
    let synth_labels = Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
    let rx = rand_tensor(&[4, 64], rng, -1.0, 1.0);
    let mut ry = Tensor::zeros(&[4, 2]);
    for r in 0..4 {
        ry.data_mut()[r * 2 + r % 2] = 1.0;
    }
    let eta0 = 0.05;

    // autodiff hypergradient via double backward
    let tape = Tape::new();
    let x = tape.leaf(synth_images.clone());
    let y = tape.constant(synth_labels.clone());
    let eta = tape.leaf(Tensor::scalar(eta0));
    let mut theta: Vec<Var> = theta0.iter().map(|p| tape.leaf(p.clone())).collect();
    for t in 0..t_steps {
        theta = distill::inner_step(&model, &tape, &theta, x, y, eta, true, t)?;
    }
    let outer = model.loss(&tape, &theta, tape.constant(rx.clone()), tape.constant(ry.clone()))?;
    let grads = backward(outer, &[x, eta], false)?;
    let gx = grads[0].value();
    let geta = grads[1].item();

    // brute-force central differences on sampled x̃ coordinates and η̃
    let eps = 1e-4;
    let scale = gx.max_abs().max(1e-4);
    let mut worst = 0.0f64;
    for _ in 0..24 {
        let i = rng.gen_range(0..synth_images.numel());
        let mut plus = synth_images.clone();
        plus.data_mut()[i] += eps;
        let fp = pipeline_loss(&model, &theta0, &plus, &synth_labels, eta0, t_steps, &rx, &ry);
        let mut minus = synth_images.clone();
        minus.data_mut()[i] -= eps;
        let fm = pipeline_loss(&model, &theta0, &minus, &synth_labels, eta0, t_steps, &rx, &ry);
        let fd = (fp - fm) / (2.0 * eps);
        worst = worst.max((gx.data()[i] - fd).abs() / scale);
    }
    let fp = pipeline_loss(&model, &theta0, &synth_images, &synth_labels, eta0 + eps, t_steps, &rx, &ry);
    let fm = pipeline_loss(&model, &theta0, &synth_images, &synth_labels, eta0 - eps, t_steps, &rx, &ry);
    let fd = (fp - fm) / (2.0 * eps);
    worst = worst.max((geta - fd).abs() / geta.abs().max(fd.abs()).max(1e-4));
    Ok(CheckResult {
        name: format!("hypergradient:T={t_steps}"),
        max_rel_err: worst,
        threshold: HYPER_THRESHOLD,
    })
}

/// The complete oracle suite; every result carries its max relative
/// error and threshold so callers can print a per-check report.
pub fn run_gradcheck(seed: u64) -> Result<Vec<CheckResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut results = vec![
        check_dense(&mut rng)?,
        check_conv2d(&mut rng)?,
        check_pool_tanh(&mut rng)?,
        check_softmax_ce(&mut rng)?,
        check_qnn_layer(&mut rng)?,
        check_full_model(&mut rng)?,
    ];
    let (shift, _trials) = check_parameter_shift(&mut rng)?;
    results.push(shift);
    results.push(check_hypergradient(&mut rng, 1)?);
    results.push(check_hypergradient(&mut rng, 2)?);
    Ok(results)
}
