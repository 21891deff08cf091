use autodiff::{Tensor, Var};
use num_complex::Complex64;

use crate::error::{QsimError, Result};
use crate::state::{tape_of, StateVector};

/// Per-qubit measurement operator a₀I + aₓX + a_yY + a_zZ, one
/// coefficient quadruple per qubit.
#[derive(Debug, Clone)]
pub struct HermitianObservable {
    /// Shape [n_qubits, 4], columns (a₀, aₓ, a_y, a_z).
    pub coeffs: Tensor,
    pub trainable: bool,
}

impl HermitianObservable {
    pub fn new(coeffs: Tensor, trainable: bool) -> Result<Self> {
        let shape = coeffs.shape();
        if shape.len() != 2 || shape[1] != 4 {
            return Err(QsimError::BadAngleShape { got: shape.to_vec(), n_qubits: 0 });
        }
        Ok(HermitianObservable { coeffs, trainable })
    }

    /// Coefficients (0, 0, 0, 1) per qubit: exactly a Pauli-Z measurement.
    pub fn pauli_z(n_qubits: usize, trainable: bool) -> Self {
        let mut data = vec![0.0; n_qubits * 4];
        for q in 0..n_qubits {
            data[q * 4 + 3] = 1.0;
        }
        HermitianObservable {
            coeffs: Tensor::new(vec![n_qubits, 4], data).unwrap(),
            trainable,
        }
    }

    pub fn n_qubits(&self) -> usize {
        self.coeffs.shape()[0]
    }

    /// The realized 2×2 complex matrix for one qubit (row major).
    pub fn matrix(&self, qubit: usize) -> [Complex64; 4] {
        let c = &self.coeffs.data()[qubit * 4..qubit * 4 + 4];
        let (a0, ax, ay, az) = (c[0], c[1], c[2], c[3]);
        [
            Complex64::new(a0 + az, 0.0),
            Complex64::new(ax, -ay),
            Complex64::new(ax, ay),
            Complex64::new(a0 - az, 0.0),
        ]
    }
}

/// ⟨ψ| (a₀I + aₓX + a_yY + a_zZ)_qubit |ψ⟩ per batch sample, shape
/// [batch, 1]. `coeffs` is the observable coefficient tensor on the tape
/// so gradients reach it when it is trainable.
pub fn expectation<'t>(state: &StateVector<'t>, qubit: usize, coeffs: Var<'t>) -> Result<Var<'t>> {
    let n = state.n_qubits;
    if qubit >= n {
        return Err(QsimError::QubitOutOfRange { index: qubit, n_qubits: n });
    }
    let tape = tape_of(state.re);
    let dim = state.dim();
    let mask = 1usize << (n - 1 - qubit);

    // sign[i] = +1 when the qubit bit is 0, -1 when it is 1
    let sign: Vec<f64> = (0..dim).map(|i| if i & mask == 0 { 1.0 } else { -1.0 }).collect();
    let sign = tape.constant(Tensor::new(vec![dim], sign).unwrap());
    let flip = std::sync::Arc::new((0..dim).map(|i| i ^ mask).collect::<Vec<_>>());

    let re_f = state.re.permute_last(flip.clone())?;
    let im_f = state.im.permute_last(flip)?;

    let prob = state.re.mul(state.re)?.add(state.im.mul(state.im)?)?;
    let z = prob.mul(sign)?.sum_last()?;
    let x = state.re.mul(re_f)?.add(state.im.mul(im_f)?)?.sum_last()?;
    let y = state.re.mul(im_f)?.sub(state.im.mul(re_f)?)?.mul(sign)?.sum_last()?;

    let coef = |j: usize| {
        coeffs
            .slice(&[(qubit, qubit + 1), (j, j + 1)])
            .and_then(|v| v.reshape(&[]))
    };
    let a0 = coef(0)?;
    let out = x
        .mul(coef(1)?)?
        .add(y.mul(coef(2)?)?)?
        .add(z.mul(coef(3)?)?)?;
    let batch = z.shape()[0];
    let ones = tape.constant(Tensor::filled(&[batch, 1], 1.0));
    Ok(out.add(ones.mul(a0)?)?)
}
