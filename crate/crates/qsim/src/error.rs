use thiserror::Error;

#[derive(Debug, Error)]
pub enum QsimError {
    #[error("qubit index {index} out of range for {n_qubits} qubits")]
    QubitOutOfRange { index: usize, n_qubits: usize },
    #[error("cnot control and target must differ (both {0})")]
    ControlEqualsTarget(usize),
    #[error("feature width {got} is not the expected {expected}")]
    BadFeatureWidth { got: usize, expected: usize },
    #[error("feature width {0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error("angle shape {got:?} does not match [layers, {n_qubits}, 3]")]
    BadAngleShape { got: Vec<usize>, n_qubits: usize },
    #[error("entangler range {range} invalid for {n_qubits} qubits")]
    BadRange { range: usize, n_qubits: usize },
    #[error("angle index ({layer}, {qubit}, {euler}) out of range")]
    AngleIndexOutOfRange { layer: usize, qubit: usize, euler: usize },
    #[error(transparent)]
    Ad(#[from] autodiff::AdError),
}

pub type Result<T> = std::result::Result<T, QsimError>;
