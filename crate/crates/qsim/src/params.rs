use autodiff::Tensor;

use crate::error::{QsimError, Result};

/// Strongly-entangling-layers circuit structure: per-layer, per-qubit
/// Euler angles for a general rotation, plus the CNOT ring offset for
/// each layer.
#[derive(Debug, Clone)]
pub struct PQCParams {
    /// Shape [layers, n_qubits, 3].
    pub angles: Tensor,
    /// Entangler target offset per layer, each in [1, n_qubits-1].
    pub ranges: Vec<usize>,
    pub n_qubits: usize,
}

impl PQCParams {
    pub fn new(angles: Tensor, ranges: Vec<usize>, n_qubits: usize) -> Result<Self> {
        let shape = angles.shape();
        if shape.len() != 3 || shape[0] != ranges.len() || shape[1] != n_qubits || shape[2] != 3 {
            return Err(QsimError::BadAngleShape { got: shape.to_vec(), n_qubits });
        }
        for &r in &ranges {
            if n_qubits > 1 && !(1..n_qubits).contains(&r) {
                return Err(QsimError::BadRange { range: r, n_qubits });
            }
        }
        if !angles.is_finite() {
            return Err(QsimError::BadAngleShape { got: shape.to_vec(), n_qubits });
        }
        Ok(PQCParams { angles, ranges, n_qubits })
    }

    /// Canonical ring offsets: ranges[l] = (l mod (n-1)) + 1.
    pub fn default_ranges(layers: usize, n_qubits: usize) -> Vec<usize> {
        (0..layers)
            .map(|l| if n_qubits > 1 { (l % (n_qubits - 1)) + 1 } else { 1 })
            .collect()
    }

    pub fn layers(&self) -> usize {
        self.ranges.len()
    }
}
