//! Plain complex-arithmetic circuit evaluation, independent of the tape.
//! Serves as the parameter-shift gradient oracle for the differentiable
//! path.

use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64;

use crate::error::{QsimError, Result};
use crate::state::EMBED_EPS;

/// A concrete circuit instance by value: features, angles, ring offsets,
/// and observable coefficients.
#[derive(Debug, Clone)]
pub struct CircuitSpec {
    pub n_qubits: usize,
    /// Row-major [layers, n_qubits, 3].
    pub angles: Vec<f64>,
    pub ranges: Vec<usize>,
    /// Row-major [n_qubits, 4].
    pub coeffs: Vec<f64>,
    pub features: Vec<f64>,
}

impl CircuitSpec {
    pub fn layers(&self) -> usize {
        self.ranges.len()
    }

    fn angle_offset(&self, layer: usize, qubit: usize, euler: usize) -> Result<usize> {
        if layer >= self.layers() || qubit >= self.n_qubits || euler >= 3 {
            return Err(QsimError::AngleIndexOutOfRange { layer, qubit, euler });
        }
        Ok((layer * self.n_qubits + qubit) * 3 + euler)
    }
}

fn embed(features: &[f64]) -> Vec<Complex64> {
    let norm = (features.iter().map(|v| v * v).sum::<f64>() + EMBED_EPS).sqrt();
    features.iter().map(|&v| Complex64::new(v / norm, 0.0)).collect()
}

fn apply_single(state: &mut [Complex64], n: usize, q: usize, u: [Complex64; 4]) {
    let mask = 1usize << (n - 1 - q);
    for i in 0..state.len() {
        if i & mask == 0 {
            let j = i | mask;
            let (a, b) = (state[i], state[j]);
            state[i] = u[0] * a + u[1] * b;
            state[j] = u[2] * a + u[3] * b;
        }
    }
}

pub(crate) fn rz_matrix(theta: f64) -> [Complex64; 4] {
    let h = theta / 2.0;
    [
        Complex64::from_polar(1.0, -h),
        Complex64::new(0.0, 0.0),
        Complex64::new(0.0, 0.0),
        Complex64::from_polar(1.0, h),
    ]
}

pub(crate) fn ry_matrix(theta: f64) -> [Complex64; 4] {
    let h = theta / 2.0;
    [
        Complex64::new(h.cos(), 0.0),
        Complex64::new(-h.sin(), 0.0),
        Complex64::new(h.sin(), 0.0),
        Complex64::new(h.cos(), 0.0),
    ]
}

fn apply_cnot(state: &mut [Complex64], n: usize, control: usize, target: usize) {
    let cmask = 1usize << (n - 1 - control);
    let tmask = 1usize << (n - 1 - target);
    for i in 0..state.len() {
        if i & cmask != 0 && i & tmask == 0 {
            state.swap(i, i | tmask);
        }
    }
}

fn run_circuit(spec: &CircuitSpec, angles: &[f64]) -> Vec<Complex64> {
    let n = spec.n_qubits;
    let mut state = embed(&spec.features);
    for (l, &range) in spec.ranges.iter().enumerate() {
        for q in 0..n {
            let base = (l * n + q) * 3;
            apply_single(&mut state, n, q, rz_matrix(angles[base + 2]));
            apply_single(&mut state, n, q, ry_matrix(angles[base + 1]));
            apply_single(&mut state, n, q, rz_matrix(angles[base]));
        }
        if n > 1 {
            for q in 0..n {
                apply_cnot(&mut state, n, q, (q + range) % n);
            }
        }
    }
    state
}

fn expectations_of(spec: &CircuitSpec, state: &[Complex64]) -> Vec<f64> {
    let n = spec.n_qubits;
    (0..n)
        .map(|q| {
            let mask = 1usize << (n - 1 - q);
            let mut x = 0.0;
            let mut y = 0.0;
            let mut z = 0.0;
            for (i, amp) in state.iter().enumerate() {
                let flipped = state[i ^ mask];
                let cross = amp.conj() * flipped;
                let sign = if i & mask == 0 { 1.0 } else { -1.0 };
                x += cross.re;
                y += sign * cross.im;
                z += sign * amp.norm_sqr();
            }
            let c = &spec.coeffs[q * 4..q * 4 + 4];
            c[0] + c[1] * x + c[2] * y + c[3] * z
        })
        .collect()
}

/// All per-qubit observable expectations of the circuit.
pub fn simulate_expectations(spec: &CircuitSpec) -> Vec<f64> {
    let state = run_circuit(spec, &spec.angles);
    expectations_of(spec, &state)
}

/// Exact gradient of `Σ weights[q]·⟨O_q⟩` with respect to one Euler
/// angle, via two shifted evaluations: (E(θ+π/2) − E(θ−π/2)) / 2. Both
/// RZ and RY have Pauli generators, so the shift rule is exact per angle.
pub fn parameter_shift_grad(
    spec: &CircuitSpec,
    layer: usize,
    qubit: usize,
    euler: usize,
    weights: &[f64],
) -> Result<f64> {
    let offset = spec.angle_offset(layer, qubit, euler)?;
    let weighted = |angles: &[f64]| -> f64 {
        let state = run_circuit(spec, angles);
        expectations_of(spec, &state)
            .iter()
            .zip(weights)
            .map(|(e, w)| e * w)
            .sum()
    };
    let mut shifted = spec.angles.clone();
    shifted[offset] += FRAC_PI_2;
    let plus = weighted(&shifted);
    shifted[offset] -= std::f64::consts::PI;
    let minus = weighted(&shifted);
    Ok((plus - minus) / 2.0)
}
