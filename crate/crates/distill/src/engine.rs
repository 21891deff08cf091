use autodiff::{backward, Tape, Tensor, Var};
use qnn::softmax_cross_entropy;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{DistillConfig, OuterOptimizer};
use crate::error::{DistillError, Result};
use crate::synthetic::SyntheticDataset;

/// A model the distillation engine can train: named parameter groups and
/// a differentiable logits map. The inner loss defaults to softmax
/// cross-entropy on the logits; toy models may override it.
pub trait DistillModel {
    fn group_names(&self) -> Vec<String>;

    /// Whether gradient updates are applied to a group (false for the
    /// frozen-Hermitian coefficients).
    fn is_trainable(&self, name: &str) -> bool {
        let _ = name;
        true
    }

    fn logits<'t>(&self, tape: &'t Tape, params: &[Var<'t>], images: Var<'t>)
        -> Result<Var<'t>>;

    fn loss<'t>(
        &self,
        tape: &'t Tape,
        params: &[Var<'t>],
        images: Var<'t>,
        labels: Var<'t>,
    ) -> Result<Var<'t>> {
        let logits = self.logits(tape, params, images)?;
        Ok(softmax_cross_entropy(logits, labels)?)
    }
}

impl DistillModel for qnn::Model {
    fn group_names(&self) -> Vec<String> {
        self.param_names()
    }

    fn is_trainable(&self, name: &str) -> bool {
        qnn::Model::is_trainable(self, name)
    }

    fn logits<'t>(&self, tape: &'t Tape, params: &[Var<'t>], images: Var<'t>)
        -> Result<Var<'t>> {
        Ok(self.forward(tape, params, images)?)
    }
}

/// One inner gradient-descent step θ' = θ − η̃·∇_θ ℓ(x̃, θ), recorded on
/// the tape so the map (x̃, η̃, θ) → θ' stays differentiable when
/// `create_graph` is set. Frozen groups pass through unchanged.
pub fn inner_step<'t, M: DistillModel + ?Sized>(
    model: &M,
    tape: &'t Tape,
    theta: &[Var<'t>],
    images: Var<'t>,
    labels: Var<'t>,
    eta: Var<'t>,
    create_graph: bool,
    step: usize,
) -> Result<Vec<Var<'t>>> {
    let names = model.group_names();
    let loss = model.loss(tape, theta, images, labels)?;
    let trainable: Vec<usize> =
        (0..theta.len()).filter(|&i| model.is_trainable(&names[i])).collect();
    let leaves: Vec<Var> = trainable.iter().map(|&i| theta[i]).collect();
    let grads = backward(loss, &leaves, create_graph)?;
    for (&i, g) in trainable.iter().zip(&grads) {
        if !g.value().is_finite() {
            return Err(DistillError::NonFiniteInnerGrad { group: names[i].clone(), step });
        }
    }
    let mut updated = theta.to_vec();
    for (&i, g) in trainable.iter().zip(&grads) {
        updated[i] = theta[i].sub(eta.mul(*g)?)?;
    }
    Ok(updated)
}

/// Adam moment state for one tensor-shaped target.
#[derive(Debug, Clone)]
struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    fn new(n: usize) -> Self {
        AdamState { m: vec![0.0; n], v: vec![0.0; n] }
    }

    fn update(&mut self, target: &mut [f64], grad: &[f64], lr: f64, t: usize) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        const EPS: f64 = 1e-8;
        let bc1 = 1.0 - B1.powi(t as i32);
        let bc2 = 1.0 - B2.powi(t as i32);
        for i in 0..target.len() {
            self.m[i] = B1 * self.m[i] + (1.0 - B1) * grad[i];
            self.v[i] = B2 * self.v[i] + (1.0 - B2) * grad[i] * grad[i];
            target[i] -= lr * (self.m[i] / bc1) / ((self.v[i] / bc2).sqrt() + EPS);
        }
    }
}

/// The outer optimizer over (x̃, η̃): plain GD with fixed α, or Adam.
#[derive(Debug, Clone)]
pub struct OuterState {
    optimizer: OuterOptimizer,
    alpha: f64,
    t: usize,
    images: Option<AdamState>,
    eta: Option<AdamState>,
}

impl OuterState {
    pub fn new(config: &DistillConfig) -> Self {
        OuterState {
            optimizer: config.outer_optimizer,
            alpha: config.alpha,
            t: 0,
            images: None,
            eta: None,
        }
    }

    fn apply(&mut self, synth: &mut SyntheticDataset, g_images: &Tensor, g_eta: f64) {
        self.t += 1;
        match self.optimizer {
            OuterOptimizer::PlainGd => {
                let data = synth.images.data_mut();
                for (x, g) in data.iter_mut().zip(g_images.data()) {
                    *x -= self.alpha * g;
                }
                synth.eta -= self.alpha * g_eta;
            }
            OuterOptimizer::Adam => {
                let n = g_images.numel();
                let st = self.images.get_or_insert_with(|| AdamState::new(n));
                st.update(synth.images.data_mut(), g_images.data(), self.alpha, self.t);
                let st = self.eta.get_or_insert_with(|| AdamState::new(1));
                let mut eta = [synth.eta];
                st.update(&mut eta, &[g_eta], self.alpha, self.t);
                synth.eta = eta[0];
            }
        }
    }
}

/// One outer step: T unrolled inner steps from θ₀, the real-batch loss
/// 𝓛 = ℓ(x, θ_T), hypergradients into x̃ and η̃ by double backward, and
/// the configured outer update. Returns 𝓛 as measured before the update.
pub fn outer_step<M: DistillModel + ?Sized>(
    model: &M,
    synth: &mut SyntheticDataset,
    theta0: &[Tensor],
    real_images: &Tensor,
    real_labels: &Tensor,
    config: &DistillConfig,
    state: &mut OuterState,
    step: usize,
) -> Result<f64> {
    let tape = Tape::new();
    let x = tape.leaf(synth.images.clone());
    let eta = tape.leaf(Tensor::scalar(synth.eta));
    let y = tape.constant(synth.labels.clone());
    let mut theta: Vec<Var> = theta0.iter().map(|t| tape.leaf(t.clone())).collect();
    for t in 0..config.inner_steps {
        theta = inner_step(model, &tape, &theta, x, y, eta, true, t)?;
    }
    let rx = tape.constant(real_images.clone());
    let ry = tape.constant(real_labels.clone());
    let outer_loss = model.loss(&tape, &theta, rx, ry)?;
    let value = outer_loss.item();
    if !value.is_finite() {
        return Err(DistillError::NanOuterLoss { step });
    }
    let grads = backward(outer_loss, &[x, eta], false)?;
    let g_images = grads[0].value();
    let g_eta = grads[1].item();
    if !g_images.is_finite() || !g_eta.is_finite() {
        return Err(DistillError::NanOuterLoss { step });
    }
    state.apply(synth, &g_images, g_eta);
    Ok(value)
}

/// Record handed to the per-step observer during `distill`.
#[derive(Debug, Clone, Copy)]
pub struct StepRecord {
    pub step: usize,
    pub epoch: usize,
    pub loss: f64,
    pub eta: f64,
}

/// Outcome of a distillation run.
#[derive(Debug, Clone)]
pub struct DistilledResult {
    pub synth: SyntheticDataset,
    /// Outer loss per step; length = epochs × ⌈M / batch_size⌉.
    pub loss_history: Vec<f64>,
    pub config: DistillConfig,
    /// Seed of the fixed θ₀ the run started from.
    pub theta0_seed: u64,
    /// Filled in by post-distillation evaluation.
    pub accuracy: Option<f64>,
}

/// The full performance-matching loop: every outer step restarts the
/// inner unroll from the SAME θ₀ (fixed-initialization scenario) while
/// x̃ and η̃ accumulate updates. Real minibatches are drawn in seeded
/// shuffled order, one pass per epoch. `observe` fires after every outer
/// step; `on_epoch` after each epoch (checkpointing hook).
#[allow(clippy::too_many_arguments)]
pub fn distill<M: DistillModel + ?Sized>(
    model: &M,
    config: &DistillConfig,
    theta0: &[Tensor],
    theta0_seed: u64,
    real_images: &Tensor,
    real_labels: &[usize],
    n_classes: usize,
    mut synth: SyntheticDataset,
    mut observe: impl FnMut(StepRecord),
    mut on_epoch: impl FnMut(usize, &SyntheticDataset),
) -> Result<DistilledResult> {
    config.validate(n_classes)?;
    let m = real_labels.len();
    if real_images.shape()[0] != m || m == 0 {
        return Err(DistillError::InvalidConfig(format!(
            "real data has {} images for {m} labels",
            real_images.shape()[0]
        )));
    }
    let sample: usize = real_images.shape()[1..].iter().product();
    let mut state = OuterState::new(config);
    let mut loss_history = Vec::new();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut step = 0usize;
    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..m).collect();
        order.shuffle(&mut shuffle_rng);
        for chunk in order.chunks(config.batch_size) {
            let mut images = Vec::with_capacity(chunk.len() * sample);
            let mut labels = vec![0.0; chunk.len() * n_classes];
            for (row, &i) in chunk.iter().enumerate() {
                images.extend_from_slice(&real_images.data()[i * sample..(i + 1) * sample]);
                labels[row * n_classes + real_labels[i]] = 1.0;
            }
            let mut shape = vec![chunk.len()];
            shape.extend_from_slice(&real_images.shape()[1..]);
            let batch_images =
                Tensor::new(shape, images).map_err(|e| DistillError::Model(e.to_string()))?;
            let batch_labels = Tensor::new(vec![chunk.len(), n_classes], labels)
                .map_err(|e| DistillError::Model(e.to_string()))?;
            let loss = outer_step(
                model, &mut synth, theta0, &batch_images, &batch_labels, config, &mut state, step,
            )?;
            loss_history.push(loss);
            observe(StepRecord { step, epoch, loss, eta: synth.eta });
            step += 1;
        }
        on_epoch(epoch, &synth);
    }
    Ok(DistilledResult {
        synth,
        loss_history,
        config: config.clone(),
        theta0_seed,
        accuracy: None,
    })
}

/// Post-distillation evaluation: start from θ₀ bit-for-bit, apply
/// exactly T inner steps with the learned η̃ on the final x̃, then score
/// argmax accuracy on the test set.
pub fn evaluate_distilled<M: DistillModel + ?Sized>(
    model: &M,
    synth: &SyntheticDataset,
    theta0: &[Tensor],
    config: &DistillConfig,
    test_images: &Tensor,
    test_labels: &[usize],
    batch_size: usize,
) -> Result<f64> {
    if synth.eta <= 0.0 {
        eprintln!("warning: learned eta is non-positive ({}); inner steps ascend", synth.eta);
    }
    let mut theta: Vec<Tensor> = theta0.to_vec();
    for t in 0..config.inner_steps {
        let tape = Tape::new();
        let vars: Vec<Var> = theta.iter().map(|p| tape.leaf(p.clone())).collect();
        let x = tape.constant(synth.images.clone());
        let y = tape.constant(synth.labels.clone());
        let eta = tape.scalar(synth.eta);
        let updated = inner_step(model, &tape, &vars, x, y, eta, false, t)?;
        theta = updated.iter().map(|v| v.value()).collect();
    }

    let m = test_labels.len();
    if test_images.shape()[0] != m || m == 0 {
        return Err(DistillError::InvalidConfig("empty or mismatched test set".into()));
    }
    let sample: usize = test_images.shape()[1..].iter().product();
    let mut correct = 0usize;
    for chunk_start in (0..m).step_by(batch_size.max(1)) {
        let end = (chunk_start + batch_size.max(1)).min(m);
        let mut shape = vec![end - chunk_start];
        shape.extend_from_slice(&test_images.shape()[1..]);
        let batch = Tensor::new(
            shape,
            test_images.data()[chunk_start * sample..end * sample].to_vec(),
        )
        .map_err(|e| DistillError::Model(e.to_string()))?;
        let tape = Tape::new();
        let vars: Vec<Var> = theta.iter().map(|p| tape.constant(p.clone())).collect();
        let logits = model.logits(&tape, &vars, tape.constant(batch))?.value();
        let k = logits.shape()[1];
        for (row, &label) in test_labels[chunk_start..end].iter().enumerate() {
            let r = &logits.data()[row * k..(row + 1) * k];
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
