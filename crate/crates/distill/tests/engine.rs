use autodiff::{backward, Tape, Tensor, Var};
use distill::{
    distill, evaluate_distilled, init_synthetic, inner_step, outer_step, read_qdd1, write_qdd1,
    DistillConfig, DistillModel, OuterOptimizer, OuterState, SyntheticDataset,
};
use qnn::dense;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

type DResult<T> = distill::Result<T>;

fn rand_tensor(shape: &[usize], rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

/// Linear classifier logits = x·Wᵀ + b. Two parameter groups.
struct TinyLinear;

impl DistillModel for TinyLinear {
    fn group_names(&self) -> Vec<String> {
        vec!["w".into(), "b".into()]
    }

    fn logits<'t>(&self, _tape: &'t Tape, params: &[Var<'t>], images: Var<'t>) -> DResult<Var<'t>> {
        Ok(dense(images, params[0], params[1])?)
    }
}

/// Single scalar parameter with loss ½θ², ignoring the data.
struct Quadratic;

impl DistillModel for Quadratic {
    fn group_names(&self) -> Vec<String> {
        vec!["theta".into()]
    }

    fn logits<'t>(&self, _tape: &'t Tape, params: &[Var<'t>], _images: Var<'t>) -> DResult<Var<'t>> {
        Ok(params[0])
    }

    fn loss<'t>(
        &self,
        tape: &'t Tape,
        params: &[Var<'t>],
        _images: Var<'t>,
        _labels: Var<'t>,
    ) -> DResult<Var<'t>> {
        let half = tape.scalar(0.5);
        Ok(params[0].mul(params[0])?.mul(half)?.sum_all()?)
    }
}

/// 64-feature QNN head with a 2-class readout: 56 parameters, exercising
/// double backward through the quantum circuit.
struct QnnToy {
    pqc: qsim::PQCParams,
}

impl QnnToy {
    fn new() -> Self {
        QnnToy {
            pqc: qsim::PQCParams::new(
                Tensor::zeros(&[1, 6, 3]),
                qsim::PQCParams::default_ranges(1, 6),
                6,
            )
            .unwrap(),
        }
    }

    fn init(&self, rng: &mut ChaCha8Rng) -> Vec<Tensor> {
        let mut coeffs = Tensor::zeros(&[6, 4]);
        for q in 0..6 {
            coeffs.data_mut()[q * 4 + 3] = 1.0;
        }
        vec![
            rand_tensor(&[1, 6, 3], rng, 0.0, std::f64::consts::TAU),
            coeffs,
            rand_tensor(&[2, 6], rng, -0.4, 0.4),
            rand_tensor(&[2], rng, -0.4, 0.4),
        ]
    }
}

impl DistillModel for QnnToy {
    fn group_names(&self) -> Vec<String> {
        vec!["angles".into(), "coeffs".into(), "fc.weights".into(), "fc.bias".into()]
    }

    fn logits<'t>(&self, _tape: &'t Tape, params: &[Var<'t>], images: Var<'t>) -> DResult<Var<'t>> {
        let q = qsim::qnn_forward(images, &self.pqc, params[0], params[1])
            .map_err(|e| distill::DistillError::Model(e.to_string()))?;
        Ok(dense(q, params[2], params[3])?)
    }
}

fn default_config(n: usize, t: usize, k: usize) -> DistillConfig {
    let _ = k;
    DistillConfig {
        n_synthetic: n,
        inner_steps: t,
        epochs: 1,
        alpha: 0.05,
        batch_size: 8,
        seed: 1,
        eta_init: 0.01,
        outer_optimizer: OuterOptimizer::PlainGd,
    }
}

#[test]
fn init_synthetic_shapes_and_determinism() {
    let cfg = DistillConfig { n_synthetic: 10, ..default_config(10, 1, 10) };
    let s = init_synthetic(&cfg, &[1, 32, 32], 10).unwrap();
    assert_eq!(s.images.shape(), vec![10, 1, 32, 32]);
    assert_eq!(s.labels.shape(), vec![10, 10]);
    assert_eq!(s.class_ids(), (0..10).collect::<Vec<_>>()); // one per class, in order
    assert_eq!(s.eta, 0.01);

    let cfg100 = DistillConfig { n_synthetic: 100, ..cfg.clone() };
    let s100 = init_synthetic(&cfg100, &[3, 32, 32], 10).unwrap();
    assert_eq!(s100.images.shape(), vec![100, 3, 32, 32]);
    // 10 per class, grouped
    assert_eq!(s100.class_ids()[..10], [0; 10]);
    assert_eq!(s100.class_ids()[90..], [9; 10]);

    let again = init_synthetic(&cfg, &[1, 32, 32], 10).unwrap();
    assert_eq!(s, again);

    let other = init_synthetic(&DistillConfig { seed: 2, ..cfg.clone() }, &[1, 32, 32], 10).unwrap();
    assert!(s.images != other.images);

    // N not divisible by class count
    let bad = DistillConfig { n_synthetic: 7, ..cfg };
    assert!(init_synthetic(&bad, &[1, 32, 32], 10).is_err());
}

#[test]
fn inner_step_examples() {
    // η̃ = 0 leaves θ exactly unchanged
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let model = TinyLinear;
    let w0 = rand_tensor(&[2, 4], &mut rng, -1.0, 1.0);
    let b0 = rand_tensor(&[2], &mut rng, -1.0, 1.0);
    let tape = Tape::new();
    let theta = vec![tape.leaf(w0.clone()), tape.leaf(b0.clone())];
    let x = tape.leaf(rand_tensor(&[2, 4], &mut rng, -1.0, 1.0));
    let y = tape.constant(Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap());
    let eta = tape.scalar(0.0);
    let updated = inner_step(&model, &tape, &theta, x, y, eta, true, 0).unwrap();
    assert_eq!(updated[0].value(), w0);
    assert_eq!(updated[1].value(), b0);

    // quadratic toy: θ=1, η̃=0.1 → θ'=0.9
    let tape = Tape::new();
    let model = Quadratic;
    let theta = vec![tape.leaf(Tensor::scalar(1.0))];
    let dummy = tape.constant(Tensor::scalar(0.0));
    let eta = tape.scalar(0.1);
    let updated = inner_step(&model, &tape, &theta, dummy, dummy, eta, true, 0).unwrap();
    assert!((updated[0].item() - 0.9).abs() < 1e-15);
}

#[test]
fn frozen_hermitian_coeffs_pass_through_inner_step() {
    let config = qnn::ModelConfig::for_variant(qnn::Variant::Quantum, true, qnn::Observable::HermitianFrozen);
    let model = qnn::build_model(config).unwrap();
    let params = model.init_params(3);
    let tape = Tape::new();
    let theta: Vec<Var> = params.tensors.iter().map(|t| tape.leaf(t.clone())).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    let x = tape.leaf(rand_tensor(&[2, 1, 32, 32], &mut rng, -0.4, 0.4));
    let mut lab = Tensor::zeros(&[2, 10]);
    lab.data_mut()[3] = 1.0;
    lab.data_mut()[10 + 8] = 1.0;
    let y = tape.constant(lab);
    let eta = tape.scalar(0.05);
    let updated = inner_step(&model, &tape, &theta, x, y, eta, true, 0).unwrap();
    let idx = params.names.iter().position(|n| n == "qnn.coeffs").unwrap();
    // frozen coefficients are bit-identical (same Var, untouched)
    assert_eq!(updated[idx].value(), params.tensors[idx]);
    // every other group moved
    for (i, name) in params.names.iter().enumerate() {
        if name != "qnn.coeffs" {
            assert!(updated[i].value() != params.tensors[i], "{name} did not update");
        }
    }
}

/// Full two-level pipeline value: T inner steps from θ0, then the real
/// batch loss, as a pure function of (x̃ data, η̃).
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
    let x = tape.leaf(synth_images.clone());
    let y = tape.constant(synth_labels.clone());
    let eta = tape.leaf(Tensor::scalar(eta));
    let mut theta: Vec<Var> = theta0.iter().map(|p| tape.leaf(p.clone())).collect();
    for t in 0..t_steps {
        theta = inner_step(model, &tape, &theta, x, y, eta, true, t).unwrap();
    }
    model
        .loss(&tape, &theta, tape.constant(rx.clone()), tape.constant(ry.clone()))
        .unwrap()
        .item()
}

fn check_hypergradients<M: DistillModel>(
    model: &M,
    theta0: &[Tensor],
    synth_images: Tensor,
    synth_labels: Tensor,
    eta0: f64,
    t_steps: usize,
    rx: Tensor,
    ry: Tensor,
) {
    // autodiff hypergradient via double backward
    let tape = Tape::new();
    let x = tape.leaf(synth_images.clone());
    let y = tape.constant(synth_labels.clone());
    let eta = tape.leaf(Tensor::scalar(eta0));
    let mut theta: Vec<Var> = theta0.iter().map(|p| tape.leaf(p.clone())).collect();
    for t in 0..t_steps {
        theta = inner_step(model, &tape, &theta, x, y, eta, true, t).unwrap();
    }
    let outer = model
        .loss(&tape, &theta, tape.constant(rx.clone()), tape.constant(ry.clone()))
        .unwrap();
    let grads = backward(outer, &[x, eta], false).unwrap();
    let gx = grads[0].value();
    let geta = grads[1].item();

    // brute-force central differences over every x̃ coordinate
    let eps = 1e-4;
    let mut worst = 0.0f64;
    for i in 0..synth_images.numel() {
        let mut plus = synth_images.clone();
        plus.data_mut()[i] += eps;
        let fp = pipeline_loss(model, theta0, &plus, &synth_labels, eta0, t_steps, &rx, &ry);
        let mut minus = synth_images.clone();
        minus.data_mut()[i] -= eps;
        let fm = pipeline_loss(model, theta0, &minus, &synth_labels, eta0, t_steps, &rx, &ry);
        let fd = (fp - fm) / (2.0 * eps);
        let auto = gx.data()[i];
        let rel = (auto - fd).abs() / auto.abs().max(fd.abs()).max(1e-4);
        worst = worst.max(rel);
        assert!(rel < 1e-3, "x~ coord {i}: autodiff {auto} vs fd {fd} (rel {rel:.2e})");
    }
    // and for η̃
    let fp = pipeline_loss(model, theta0, &synth_images, &synth_labels, eta0 + eps, t_steps, &rx, &ry);
    let fm = pipeline_loss(model, theta0, &synth_images, &synth_labels, eta0 - eps, t_steps, &rx, &ry);
    let fd = (fp - fm) / (2.0 * eps);
    let rel = (geta - fd).abs() / geta.abs().max(fd.abs()).max(1e-4);
    assert!(rel < 1e-3, "eta: autodiff {geta} vs fd {fd}");
    eprintln!("hypergradient check T={t_steps}: worst x rel err {worst:.3e}, eta rel err {rel:.3e}");
}

#[test]
fn hypergradients_match_finite_difference_linear_t1_t2() {
    let mut rng = ChaCha8Rng::seed_from_u64(52);
    let model = TinyLinear;
    for t_steps in [1, 2] {
        let theta0 = vec![
            rand_tensor(&[2, 8], &mut rng, -0.5, 0.5),
            rand_tensor(&[2], &mut rng, -0.5, 0.5),
        ];
        let synth_images = rand_tensor(&[2, 8], &mut rng, -1.0, 1.0);
        let synth_labels = Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let rx = rand_tensor(&[6, 8], &mut rng, -1.0, 1.0);
        let mut ry = Tensor::zeros(&[6, 2]);
        for r in 0..6 {
            ry.data_mut()[r * 2 + r % 2] = 1.0;
        }
        check_hypergradients(&model, &theta0, synth_images, synth_labels, 0.05, t_steps, rx, ry);
    }
}

#[test]
fn hypergradients_match_finite_difference_qnn_toy() {
    let mut rng = ChaCha8Rng::seed_from_u64(53);
    let model = QnnToy::new();
    let theta0 = model.init(&mut rng);
    assert!(theta0.iter().map(|t| t.numel()).sum::<usize>() <= 200);
    let synth_images = rand_tensor(&[2, 64], &mut rng, -1.0, 1.0);
    let synth_labels = Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
    let rx = rand_tensor(&[4, 64], &mut rng, -1.0, 1.0);
    let mut ry = Tensor::zeros(&[4, 2]);
    for r in 0..4 {
        ry.data_mut()[r * 2 + r % 2] = 1.0;
    }
    check_hypergradients(&model, &theta0, synth_images, synth_labels, 0.05, 1, rx, ry);
}

#[test]
fn outer_step_alpha_zero_reports_loss_without_moving() {
    let mut rng = ChaCha8Rng::seed_from_u64(54);
    let model = TinyLinear;
    let theta0 = vec![
        rand_tensor(&[2, 8], &mut rng, -0.5, 0.5),
        rand_tensor(&[2], &mut rng, -0.5, 0.5),
    ];
    let cfg = DistillConfig { alpha: 0.0, ..default_config(2, 1, 2) };
    let mut synth = init_synthetic(&DistillConfig { alpha: 0.1, ..cfg.clone() }, &[8], 2).unwrap();
    let before = synth.clone();
    let rx = rand_tensor(&[6, 8], &mut rng, -1.0, 1.0);
    let mut ry = Tensor::zeros(&[6, 2]);
    for r in 0..6 {
        ry.data_mut()[r * 2 + r % 2] = 1.0;
    }
    let mut state = OuterState::new(&cfg);
    let loss = outer_step(&model, &mut synth, &theta0, &rx, &ry, &cfg, &mut state, 0).unwrap();
    assert!(loss.is_finite() && loss > 0.0);
    assert_eq!(synth, before);
}

fn two_gaussian_data(
    rng: &mut ChaCha8Rng,
    m: usize,
    d: usize,
    sep: f64,
) -> (Tensor, Vec<usize>) {
    let mut data = Vec::with_capacity(m * d);
    let mut labels = Vec::with_capacity(m);
    for i in 0..m {
        let class = i % 2;
        let mean = if class == 0 { -sep } else { sep };
        for _ in 0..d {
            let v: f64 = StandardNormal.sample(rng);
            data.push(mean + v);
        }
        labels.push(class);
    }
    (Tensor::new(vec![m, d], data).unwrap(), labels)
}

#[test]
fn distill_loop_structure_and_reproducibility() {
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let model = TinyLinear;
    let theta0 = vec![
        rand_tensor(&[2, 16], &mut rng, -0.3, 0.3),
        rand_tensor(&[2], &mut rng, -0.3, 0.3),
    ];
    let (rx, ry) = two_gaussian_data(&mut rng, 10, 16, 0.5);
    let cfg = DistillConfig {
        n_synthetic: 2,
        inner_steps: 1,
        epochs: 2,
        alpha: 0.05,
        batch_size: 4,
        seed: 9,
        eta_init: 0.01,
        outer_optimizer: OuterOptimizer::PlainGd,
    };
    let run = |cfg: &DistillConfig| {
        let synth = init_synthetic(cfg, &[16], 2).unwrap();
        let mut steps = Vec::new();
        let mut epochs_seen = Vec::new();
        let result = distill(
            &model,
            cfg,
            &theta0,
            0,
            &rx,
            &ry,
            2,
            synth,
            |r| steps.push(r),
            |e, _| epochs_seen.push(e),
        )
        .unwrap();
        (result, steps, epochs_seen)
    };
    let (a, steps, epochs_seen) = run(&cfg);
    // loss history length = epochs × ceil(M / batch)
    assert_eq!(a.loss_history.len(), 2 * 3);
    assert_eq!(steps.len(), 6);
    assert!(steps.iter().all(|r| r.loss.is_finite() && r.eta.is_finite()));
    assert_eq!(epochs_seen, vec![0, 1]);
    // labels unchanged by distillation
    let fresh = init_synthetic(&cfg, &[16], 2).unwrap();
    assert_eq!(a.synth.labels, fresh.labels);
    // but images moved
    assert!(a.synth.images != fresh.images);

    // bit-exact reproducibility
    let (b, _, _) = run(&cfg);
    assert_eq!(a.loss_history, b.loss_history);
    assert_eq!(a.synth, b.synth);

    // validation errors
    let bad = DistillConfig { epochs: 0, ..cfg.clone() };
    assert!(distill(
        &model, &bad, &theta0, 0, &rx, &ry, 2,
        init_synthetic(&cfg, &[16], 2).unwrap(),
        |_| {}, |_, _| {}
    )
    .is_err());
}

#[test]
fn toy_two_gaussian_loss_trend_and_accuracy() {
    // two-Gaussian task: outer loss should trend down and the distilled
    // pair of points should classify well above chance
    let model = TinyLinear;
    let mut final_accs = Vec::new();
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let theta0 = vec![
            rand_tensor(&[2, 64], &mut rng, -0.1, 0.1),
            rand_tensor(&[2], &mut rng, -0.1, 0.1),
        ];
        let (rx, ry) = two_gaussian_data(&mut rng, 500, 64, 0.35);
        let (tx, ty) = two_gaussian_data(&mut rng, 200, 64, 0.35);
        let cfg = DistillConfig {
            n_synthetic: 2,
            inner_steps: 1,
            epochs: 5,
            alpha: 0.1,
            batch_size: 64,
            seed,
            eta_init: 0.01,
            outer_optimizer: OuterOptimizer::Adam,
        };
        let synth = init_synthetic(&cfg, &[64], 2).unwrap();
        let result =
            distill(&model, &cfg, &theta0, 0, &rx, &ry, 2, synth, |_| {}, |_, _| {}).unwrap();
        let h = &result.loss_history;
        let tenth = (h.len() / 10).max(1);
        let median = |s: &[f64]| {
            let mut v = s.to_vec();
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
            v[v.len() / 2]
        };
        assert!(
            median(&h[h.len() - tenth..]) < median(&h[..tenth]),
            "seed {seed}: no loss improvement ({:?} -> {:?})",
            &h[..tenth],
            &h[h.len() - tenth..]
        );
        let acc =
            evaluate_distilled(&model, &result.synth, &theta0, &cfg, &tx, &ty, 100).unwrap();
        final_accs.push(acc);
    }
    let mean = final_accs.iter().sum::<f64>() / final_accs.len() as f64;
    eprintln!("two-gaussian distilled accuracies: {final_accs:?} (mean {mean:.3})");
    assert!(mean > 0.8, "mean accuracy {mean} not above chance");
}

#[test]
fn qdd1_round_trip_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = DistillConfig { n_synthetic: 4, ..default_config(4, 1, 2) };
    let synth = init_synthetic(&cfg, &[1, 32, 32], 2).unwrap();
    let path = dir.path().join("distilled.qdd1");
    write_qdd1(&path, &synth, 77, "dataset=mnist variant=q-r-h seed=77").unwrap();

    let (back, seed, echo) = read_qdd1(&path).unwrap();
    assert_eq!(back, synth);
    assert_eq!(seed, 77);
    assert_eq!(echo, "dataset=mnist variant=q-r-h seed=77");

    // writing the parsed content again is byte-identical
    let path2 = dir.path().join("again.qdd1");
    write_qdd1(&path2, &back, seed, &echo).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());

    // corrupt magic
    let mut bytes = std::fs::read(&path).unwrap();
    bytes[0] = b'Z';
    let bad = dir.path().join("bad.qdd1");
    std::fs::write(&bad, &bytes).unwrap();
    let msg = read_qdd1(&bad).unwrap_err().to_string();
    assert!(msg.contains("bad QDD1 header"), "{msg}");
    // truncation
    let good = std::fs::read(&path).unwrap();
    let trunc = dir.path().join("trunc.qdd1");
    std::fs::write(&trunc, &good[..good.len() - 9]).unwrap();
    assert!(read_qdd1(&trunc).is_err());
    // non-4d images refuse to serialize
    let flat = SyntheticDataset {
        images: Tensor::zeros(&[2, 64]),
        labels: Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap(),
        eta: 0.01,
    };
    assert!(write_qdd1(&dir.path().join("flat.qdd1"), &flat, 0, "").is_err());
}

#[test]
fn evaluate_uses_theta0_bit_for_bit() {
    let mut rng = ChaCha8Rng::seed_from_u64(60);
    let model = TinyLinear;
    let theta0 = vec![
        rand_tensor(&[2, 8], &mut rng, -0.5, 0.5),
        rand_tensor(&[2], &mut rng, -0.5, 0.5),
    ];
    let before = theta0.clone();
    let cfg = default_config(2, 2, 2);
    let synth = init_synthetic(&cfg, &[8], 2).unwrap();
    let (tx, ty) = two_gaussian_data(&mut rng, 50, 8, 1.0);
    let acc = evaluate_distilled(&model, &synth, &theta0, &cfg, &tx, &ty, 16).unwrap();
    assert!((0.0..=1.0).contains(&acc));
    assert_eq!(theta0, before); // θ0 never mutated
}
