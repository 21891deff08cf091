use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use autodiff::{backward, Tape, Tensor, Var};
use dataio::{export_images, LabeledDataset, MetricsWriter};
use distill::{
    distill, evaluate_distilled, init_synthetic, read_qdd1, write_qdd1, DistillConfig,
    SyntheticDataset,
};
use qnn::{build_model, save_qdl1, Model, ModelParams};

use crate::config::{echo_field, CliError, Dataset, Result, RunConfig};
use crate::data::{load_dataset, norm_from_echo, truncate};

#[derive(Debug)]
pub struct DistillOutcome {
    pub accuracy: f64,
    pub loss_history: Vec<f64>,
    pub qdd_path: PathBuf,
    pub synth: SyntheticDataset,
}

/// Run the full distillation pipeline and write every artifact:
/// distilled.qdd1, theta0.qdl1, metrics.log, exported images, summary.txt.
pub fn cmd_distill(config: &RunConfig) -> Result<DistillOutcome> {
    let model = build_model(config.model_config())?; // invalid combos fail before compute
    config.distill.validate(10)?;
    let (train, test) = load_dataset(config)?;
    let theta0 = model.init_params(config.distill.seed);

    std::fs::create_dir_all(&config.out_dir)?;
    let echo = config.echo("distill", Some(&train.normalization));
    let qdd_path = config.out_dir.join("distilled.qdd1");
    let mut metrics = MetricsWriter::create(&config.out_dir.join("metrics.log"))?;
    let started = Instant::now();

    let shape = [config.dataset.channels(), 32, 32];
    let synth = init_synthetic(&config.distill, &shape, 10)?;
    let mut result = distill(
        &model,
        &config.distill,
        &theta0.tensors,
        theta0.seed,
        &train.images,
        &train.labels,
        10,
        synth,
        |r| {
            let _ = metrics.step(r.step, r.epoch, r.loss, r.eta, started.elapsed().as_secs_f64());
        },
        |_, snapshot| {
            // per-epoch checkpoint so an aborted run keeps its last state
            let _ = write_qdd1(&qdd_path, snapshot, theta0.seed, &echo);
        },
    )?;

    let accuracy = evaluate_distilled(
        &model,
        &result.synth,
        &theta0.tensors,
        &config.distill,
        &test.images,
        &test.labels,
        256,
    )?;
    result.accuracy = Some(accuracy);

    write_qdd1(&qdd_path, &result.synth, theta0.seed, &echo)?;
    save_qdl1(&config.out_dir.join("theta0.qdl1"), &theta0)?;
    metrics.finish(result.loss_history.len(), accuracy)?;
    export_images(
        &result.synth.images,
        &result.synth.class_ids(),
        &train.normalization,
        &config.out_dir.join("images"),
    )?;
    let mut summary = std::fs::File::create(config.out_dir.join("summary.txt"))?;
    writeln!(summary, "{echo}")?;
    writeln!(summary, "outer_steps={}", result.loss_history.len())?;
    writeln!(summary, "final_loss={}", result.loss_history.last().copied().unwrap_or(f64::NAN))?;
    writeln!(summary, "eta_final={}", result.synth.eta)?;
    writeln!(summary, "accuracy={accuracy}")?;
    Ok(DistillOutcome {
        accuracy,
        loss_history: result.loss_history,
        qdd_path,
        synth: result.synth,
    })
}

/// Re-evaluate a distilled file. Refuses to run when the file's θ₀ seed,
/// variant, or dataset disagree with the requested config.
pub fn cmd_eval(config: &RunConfig, qdd_path: &Path) -> Result<f64> {
    let (synth, seed, echo) = read_qdd1(qdd_path)?;
    let file_variant = echo_field(&echo, "variant")
        .ok_or_else(|| CliError::Config("distilled file lacks a variant echo".into()))?;
    if file_variant != config.variant.name() {
        return Err(CliError::Config(format!(
            "variant mismatch: distilled file was produced with {file_variant}, requested {}",
            config.variant.name()
        )));
    }
    if seed != config.distill.seed {
        return Err(CliError::Config(format!(
            "theta0 seed mismatch: distilled file used seed {seed}, requested {}",
            config.distill.seed
        )));
    }
    if let Some(ds) = echo_field(&echo, "dataset") {
        if ds != config.dataset.name() {
            return Err(CliError::Config(format!(
                "dataset mismatch: distilled file is for {ds}, requested {}",
                config.dataset.name()
            )));
        }
    }
    // the unroll depth and layer count travel with the file
    let inner_steps: usize = echo_field(&echo, "inner_steps")
        .and_then(|v| v.parse().ok())
        .unwrap_or(config.distill.inner_steps);
    let layers: usize = echo_field(&echo, "layers")
        .and_then(|v| v.parse().ok())
        .unwrap_or(config.layers);

    let mut model_config = config.model_config();
    model_config.l_layers = layers;
    let model = build_model(model_config)?;
    let theta0 = model.init_params(seed);

    let norm = norm_from_echo(&echo)
        .ok_or_else(|| CliError::Config("distilled file lacks normalization echo".into()))?;
    let test = load_test_split(config, norm)?;

    let eval_config = DistillConfig { inner_steps, ..config.distill.clone() };
    let accuracy = evaluate_distilled(
        &model,
        &synth,
        &theta0.tensors,
        &eval_config,
        &test.images,
        &test.labels,
        256,
    )?;
    std::fs::create_dir_all(&config.out_dir)?;
    std::fs::write(
        config.out_dir.join("eval_report.txt"),
        format!("{echo}\neval_accuracy={accuracy}\n"),
    )?;
    Ok(accuracy)
}

fn load_test_split(config: &RunConfig, norm: dataio::Normalization) -> Result<LabeledDataset> {
    let mut test = match config.dataset {
        Dataset::Mnist => {
            let dir = config.data_dir.join("mnist");
            dataio::load_mnist(
                &dir.join("t10k-images-idx3-ubyte"),
                &dir.join("t10k-labels-idx1-ubyte"),
                dataio::Split::Test,
                Some(norm),
            )?
        }
        Dataset::Cifar10 => {
            let dir = config.data_dir.join("cifar10");
            dataio::load_cifar10(&[dir.join("test_batch.bin")], dataio::Split::Test, Some(norm))?
        }
    };
    if let Some(limit) = config.test_limit {
        truncate(&mut test, limit)?;
    }
    Ok(test)
}

/// Plain argmax accuracy of a parameter set on a dataset.
pub fn test_accuracy(model: &Model, theta: &[Tensor], data: &LabeledDataset) -> Result<f64> {
    let m = data.len();
    let mut correct = 0usize;
    for start in (0..m).step_by(256) {
        let end = (start + 256).min(m);
        let idx: Vec<usize> = (start..end).collect();
        let (images, _) = data.batch(&idx, 10)?;
        let tape = Tape::new();
        let vars: Vec<Var> = theta.iter().map(|t| tape.constant(t.clone())).collect();
        let logits = model.forward(&tape, &vars, tape.constant(images))?.value();
        for (row, &label) in data.labels[start..end].iter().enumerate() {
            let r = &logits.data()[row * 10..(row + 1) * 10];
            let argmax = r
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .map(|(i, _)| i)
                .unwrap();
            if argmax == label {
                correct += 1;
            }
        }
    }
    Ok(correct as f64 / m as f64)
}

/// Minibatch SGD with momentum on real training data; reports test
/// accuracy. Contextualizes the distillation numbers.
pub fn cmd_train_baseline(config: &RunConfig) -> Result<f64> {
    let model = build_model(config.model_config())?;
    let (train, test) = load_dataset(config)?;
    let params = model.init_params(config.distill.seed);
    std::fs::create_dir_all(&config.out_dir)?;
    let mut metrics = MetricsWriter::create(&config.out_dir.join("baseline_metrics.log"))?;
    let started = Instant::now();

    let lr = config.distill.alpha;
    let momentum = 0.9;
    let batch = config.distill.batch_size;
    let mut theta = params.tensors.clone();
    let mut velocity: Vec<Vec<f64>> = theta.iter().map(|t| vec![0.0; t.numel()]).collect();
    let names = params.names.clone();
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(
        config.distill.seed ^ 0x5851_f42d_4c95_7f2d,
    );
    let mut step = 0usize;
    for epoch in 0..config.distill.epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
        for chunk in order.chunks(batch) {
            let (images, labels) = train.batch(chunk, 10)?;
            let tape = Tape::new();
            let vars: Vec<Var> = theta.iter().map(|t| tape.leaf(t.clone())).collect();
            let logits = model.forward(&tape, &vars, tape.constant(images))?;
            let loss = qnn::softmax_cross_entropy(logits, tape.constant(labels))?;
            let loss_value = loss.item();
            if !loss_value.is_finite() {
                return Err(CliError::Config(format!(
                    "baseline training diverged (non-finite loss at step {step})"
                )));
            }
            let trainable: Vec<usize> =
                (0..theta.len()).filter(|&i| model.is_trainable(&names[i])).collect();
            let leaves: Vec<Var> = trainable.iter().map(|&i| vars[i]).collect();
            let grads = backward(loss, &leaves, false)?;
            for (&i, g) in trainable.iter().zip(&grads) {
                let g = g.value();
                let v = &mut velocity[i];
                let t = theta[i].data_mut();
                for j in 0..t.len() {
                    v[j] = momentum * v[j] + g.data()[j];
                    t[j] -= lr * v[j];
                }
            }
            if step % 50 == 0 {
                metrics.step(step, epoch, loss_value, lr, started.elapsed().as_secs_f64())?;
            }
            step += 1;
        }
    }
    let accuracy = test_accuracy(&model, &theta, &test)?;
    metrics.finish(step, accuracy)?;
    let trained = ModelParams { names, tensors: theta, seed: params.seed };
    save_qdl1(&config.out_dir.join("baseline.qdl1"), &trained)?;
    Ok(accuracy)
}

/// Export the images of a distilled file as PGM/PPM plus a contact sheet.
pub fn cmd_export_images(config: &RunConfig, qdd_path: &Path) -> Result<Vec<PathBuf>> {
    let (synth, _seed, echo) = read_qdd1(qdd_path)?;
    let norm = norm_from_echo(&echo)
        .ok_or_else(|| CliError::Config("distilled file lacks normalization echo".into()))?;
    Ok(export_images(&synth.images, &synth.class_ids(), &norm, &config.out_dir)?)
}

/// Chance-level helper used by tests: accuracy of an undistilled
/// synthetic set (fresh noise) under the same evaluation contract.
pub fn undistilled_accuracy(config: &RunConfig) -> Result<f64> {
    let model = build_model(config.model_config())?;
    let theta0 = model.init_params(config.distill.seed);
    let (train, test) = load_dataset(config)?;
    let _ = train;
    let shape = [config.dataset.channels(), 32, 32];
    let synth = init_synthetic(&config.distill, &shape, 10)?;
    Ok(evaluate_distilled(
        &model,
        &synth,
        &theta0.tensors,
        &config.distill,
        &test.images,
        &test.labels,
        256,
    )?)
}
