//! Differentiable dense statevector simulation of the QNN layer:
//! amplitude embedding, strongly entangling layers, and expectation
//! values of per-qubit Hermitian observables. Complex amplitudes are
//! carried as paired real tensors so the autodiff core stays real.

mod error;
mod gates;
mod observable;
mod oracle;
mod params;
mod state;

pub use error::{QsimError, Result};
pub use gates::{apply_cnot, apply_rot, apply_ry, apply_rz, apply_strongly_entangling};
pub use observable::{expectation, HermitianObservable};
pub use oracle::{parameter_shift_grad, simulate_expectations, CircuitSpec};
pub use params::PQCParams;
pub use state::{amplitude_embed, qnn_forward, StateVector, EMBED_EPS};
