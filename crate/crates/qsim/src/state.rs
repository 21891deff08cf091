use autodiff::{concat, Tensor, Var};

use crate::error::{QsimError, Result};
use crate::gates::apply_strongly_entangling;
use crate::observable::expectation;
use crate::params::PQCParams;

/// Norm regularizer inside amplitude embedding; keeps the backward pass
/// finite when distillation drives a feature vector toward zero.
pub const EMBED_EPS: f64 = 1e-12;

/// Batched n-qubit register: 2^n complex amplitudes per sample stored as
/// paired real tensors of shape [batch, 2^n], computational-basis order
/// with qubit 0 most significant.
#[derive(Clone, Copy)]
pub struct StateVector<'t> {
    pub n_qubits: usize,
    pub re: Var<'t>,
    pub im: Var<'t>,
}

impl<'t> StateVector<'t> {
    pub fn batch(&self) -> usize {
        self.re.shape()[0]
    }

    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    /// Σ(re² + im²) per sample, shape [batch, 1].
    pub fn norm_sq(&self) -> Result<Var<'t>> {
        let r2 = self.re.mul(self.re)?;
        let i2 = self.im.mul(self.im)?;
        Ok(r2.add(i2)?.sum_last()?)
    }
}

/// Encode feature vectors as state amplitudes: x / sqrt(Σx² + ε).
/// Accepts [width] or [batch, width]; width must be a power of two.
pub fn amplitude_embed<'t>(features: Var<'t>) -> Result<StateVector<'t>> {
    let shape = features.shape();
    let (features, width) = match shape.len() {
        1 => (features.reshape(&[1, shape[0]])?, shape[0]),
        2 => (features, shape[1]),
        _ => return Err(QsimError::BadFeatureWidth { got: shape.len(), expected: 2 }),
    };
    if !width.is_power_of_two() || width < 2 {
        return Err(QsimError::NotPowerOfTwo(width));
    }
    let n_qubits = width.trailing_zeros() as usize;
    let tape = tape_of(features);
    let eps = tape.scalar(EMBED_EPS);
    let norm = features.mul(features)?.sum_last()?.add(eps)?.sqrt()?;
    let re = features.div(norm.repeat_last(width)?)?;
    let batch = re.shape()[0];
    let im = tape.constant(Tensor::zeros(&[batch, width]));
    Ok(StateVector { n_qubits, re, im })
}

pub(crate) fn tape_of<'t>(v: Var<'t>) -> &'t autodiff::Tape {
    v.tape()
}

/// Full QNN layer forward: embed 64 features on 6 qubits, run the
/// entangling circuit, measure each qubit's Hermitian observable.
/// `coeffs` is the [n_qubits, 4] observable coefficient tensor.
pub fn qnn_forward<'t>(
    features: Var<'t>,
    params: &PQCParams,
    angles: Var<'t>,
    coeffs: Var<'t>,
) -> Result<Var<'t>> {
    let shape = features.shape();
    let width = *shape.last().unwrap();
    if width != 64 {
        return Err(QsimError::BadFeatureWidth { got: width, expected: 64 });
    }
    let state = amplitude_embed(features)?;
    let state = apply_strongly_entangling(state, params, angles)?;
    let mut outs = Vec::with_capacity(state.n_qubits);
    for q in 0..state.n_qubits {
        outs.push(expectation(&state, q, coeffs)?);
    }
    Ok(concat(&outs, 1)?)
}
