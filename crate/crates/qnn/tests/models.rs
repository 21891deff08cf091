use autodiff::{backward, Tape, Tensor};
use qnn::{build_model, load_qdl1, save_qdl1, Model, ModelConfig, Observable, Variant};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn mnist_config(variant: Variant, residual: bool, observable: Observable) -> ModelConfig {
    ModelConfig::for_variant(variant, residual, observable)
}

fn bind<'t>(tape: &'t Tape, model: &Model, params: &qnn::ModelParams) -> Vec<autodiff::Var<'t>> {
    let _ = model;
    params.tensors.iter().map(|t| tape.leaf(t.clone())).collect()
}

#[test]
fn classical_mnist_parameter_count() {
    let model = build_model(mnist_config(Variant::Classical, false, Observable::PauliZ)).unwrap();
    let params = model.init_params(0);
    assert_eq!(params.n_params(), 61_706);
}

#[test]
fn quantum_rh_parameter_count() {
    let model =
        build_model(mnist_config(Variant::Quantum, true, Observable::HermitianTrainable)).unwrap();
    let params = model.init_params(0);
    let expected = 156 + 2416 // convs
        + (120 * 400 + 120)   // fc1
        + (64 * 120 + 64)     // fc2 -> 64 features
        + 3 * 6 * 3           // angles, L=3
        + 6 * 4               // Hermitian coeffs
        + (6 * 64 + 6)        // residual projection
        + (10 * 6 + 10); // fc3
    assert_eq!(params.n_params(), expected);
    assert!(params.get("qnn.coeffs").is_some());
    assert!(params.get("qnn.residual_weights").is_some());
}

#[test]
fn config_validation() {
    assert!(build_model(mnist_config(Variant::Classical, true, Observable::PauliZ)).is_err());
    let mut cfg = mnist_config(Variant::Quantum, false, Observable::PauliZ);
    cfg.input_spec = (1, 28, 28);
    assert!(build_model(cfg).is_err());
    let mut cfg = mnist_config(Variant::Quantum, false, Observable::PauliZ);
    cfg.input_spec = (3, 32, 32);
    assert!(build_model(cfg).is_ok());
}

#[test]
fn init_is_deterministic_and_seed_sensitive() {
    let model =
        build_model(mnist_config(Variant::Quantum, true, Observable::HermitianTrainable)).unwrap();
    let a = model.init_params(42);
    let b = model.init_params(42);
    assert_eq!(a, b);
    let c = model.init_params(43);
    assert!(a.tensors.iter().zip(&c.tensors).any(|(x, y)| x != y));

    // Hermitian coefficients start at the exact Pauli-Z point
    let coeffs = a.get("qnn.coeffs").unwrap();
    for q in 0..6 {
        assert_eq!(&coeffs.data()[q * 4..q * 4 + 4], &[0.0, 0.0, 0.0, 1.0]);
    }
    // circuit angles inside [0, 2pi)
    let angles = a.get("qnn.angles").unwrap();
    assert!(angles.data().iter().all(|&v| (0.0..std::f64::consts::TAU).contains(&v)));
    // residual bias zero-initialized
    assert!(a.get("qnn.residual_bias").unwrap().data().iter().all(|&v| v == 0.0));
}

#[test]
fn forward_shape_and_row_consistency() {
    let model =
        build_model(mnist_config(Variant::Quantum, true, Observable::HermitianTrainable)).unwrap();
    let params = model.init_params(7);
    let tape = Tape::new();
    let vars = bind(&tape, &model, &params);

    let mut rng = ChaCha8Rng::seed_from_u64(30);
    let img: Vec<f64> = (0..32 * 32).map(|_| rng.gen_range(-0.5..2.8)).collect();
    let mut batch = img.clone();
    batch.extend_from_slice(&img); // two identical images
    let images = tape.constant(Tensor::new(vec![2, 1, 32, 32], batch).unwrap());
    let logits = model.forward(&tape, &vars, images).unwrap();
    assert_eq!(logits.shape(), vec![2, 10]);
    let v = logits.value();
    let (r0, r1) = v.data().split_at(10);
    assert_eq!(r0, r1);
    assert!(v.data().iter().all(|x| x.is_finite()));

    // wrong channel count rejected
    let bad = tape.constant(Tensor::zeros(&[1, 3, 32, 32]));
    assert!(model.forward(&tape, &vars, bad).is_err());
}

#[test]
fn variant_degeneracy_at_init() {
    // NR,H and NR,NH share θ₀ (Hermitian starts at exact Pauli-Z) and
    // therefore produce identical forward outputs before training.
    let nrh = build_model(mnist_config(Variant::Quantum, false, Observable::HermitianTrainable)).unwrap();
    let nrnh = build_model(mnist_config(Variant::Quantum, false, Observable::PauliZ)).unwrap();
    let pa = nrh.init_params(5);
    let pb = nrnh.init_params(5);
    assert_eq!(pa.tensors, pb.tensors);

    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let img = Tensor::new(
        vec![2, 1, 32, 32],
        (0..2 * 32 * 32).map(|_| rng.gen_range(-0.5..2.8)).collect(),
    )
    .unwrap();

    let tape = Tape::new();
    let va = bind(&tape, &nrh, &pa);
    let la = nrh.forward(&tape, &va, tape.constant(img.clone())).unwrap().value();
    let tape = Tape::new();
    let vb = bind(&tape, &nrnh, &pb);
    let lb = nrnh.forward(&tape, &vb, tape.constant(img)).unwrap().value();
    assert_eq!(la, lb);
}

#[test]
fn trainability_flags() {
    let frozen = build_model(mnist_config(Variant::Quantum, true, Observable::HermitianFrozen)).unwrap();
    assert!(!frozen.is_trainable("qnn.coeffs"));
    assert!(frozen.is_trainable("qnn.angles"));
    assert!(frozen.is_trainable("fc3.weights"));
    let pz = build_model(mnist_config(Variant::Quantum, false, Observable::PauliZ)).unwrap();
    assert!(!pz.is_trainable("qnn.coeffs"));
    let trainable =
        build_model(mnist_config(Variant::Quantum, true, Observable::HermitianTrainable)).unwrap();
    assert!(trainable.is_trainable("qnn.coeffs"));
}

#[test]
fn input_pixel_gradients_match_finite_difference() {
    // gradient with respect to input pixels is what distillation trains;
    // spot-check a handful of pixels against central differences
    let model =
        build_model(mnist_config(Variant::Quantum, false, Observable::HermitianTrainable)).unwrap();
    let params = model.init_params(11);
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let img0 = Tensor::new(
        vec![1, 1, 32, 32],
        (0..1024).map(|_| rng.gen_range(-0.5..0.5)).collect(),
    )
    .unwrap();
    let w0: Vec<f64> = (0..10).map(|_| rng.gen_range(-1.0..1.0)).collect();

    let eval = |img: &Tensor| {
        let tape = Tape::new();
        let vars: Vec<_> = params.tensors.iter().map(|t| tape.constant(t.clone())).collect();
        let x = tape.leaf(img.clone());
        let logits = model.forward(&tape, &vars, x).unwrap();
        let w = tape.constant(Tensor::new(vec![1, 10], w0.clone()).unwrap());
        logits.mul(w).unwrap().sum_all().unwrap().item()
    };

    let tape = Tape::new();
    let vars: Vec<_> = params.tensors.iter().map(|t| tape.constant(t.clone())).collect();
    let x = tape.leaf(img0.clone());
    let logits = model.forward(&tape, &vars, x).unwrap();
    let w = tape.constant(Tensor::new(vec![1, 10], w0.clone()).unwrap());
    let loss = logits.mul(w).unwrap().sum_all().unwrap();
    let grad = backward(loss, &[x], false).unwrap()[0].value();

    let eps = 1e-5;
    for _ in 0..12 {
        let i = rng.gen_range(0..1024);
        let mut probe = img0.clone();
        probe.data_mut()[i] += eps;
        let fp = eval(&probe);
        probe.data_mut()[i] -= 2.0 * eps;
        let fm = eval(&probe);
        let fd = (fp - fm) / (2.0 * eps);
        let auto = grad.data()[i];
        let rel = (auto - fd).abs() / auto.abs().max(fd.abs()).max(1e-3);
        assert!(rel < 1e-3, "pixel {i}: autodiff {auto} vs fd {fd}");
    }
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let model =
        build_model(mnist_config(Variant::Quantum, true, Observable::HermitianTrainable)).unwrap();
    let params = model.init_params(99);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("theta.qdl1");
    save_qdl1(&path, &params).unwrap();
    let loaded = load_qdl1(&path).unwrap();
    assert_eq!(params, loaded);

    // double round trip produces identical bytes
    let path2 = dir.path().join("theta2.qdl1");
    save_qdl1(&path2, &loaded).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());

    // corrupted magic rejected
    let mut bytes = std::fs::read(&path).unwrap();
    bytes[0] = b'X';
    let bad = dir.path().join("bad.qdl1");
    std::fs::write(&bad, &bytes).unwrap();
    assert!(load_qdl1(&bad).is_err());
    // truncation rejected
    let good = std::fs::read(&path).unwrap();
    let trunc = dir.path().join("trunc.qdl1");
    std::fs::write(&trunc, &good[..good.len() / 2]).unwrap();
    assert!(load_qdl1(&trunc).is_err());
}
