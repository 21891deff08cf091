use std::sync::Arc;

use autodiff::{concat, Var};

use crate::error::{QsimError, Result};
use crate::params::PQCParams;
use crate::state::{tape_of, StateVector};

fn check_qubit(state: &StateVector, q: usize) -> Result<()> {
    if q >= state.n_qubits {
        return Err(QsimError::QubitOutOfRange { index: q, n_qubits: state.n_qubits });
    }
    Ok(())
}

/// Split the batched amplitude tensor along qubit `q` into the bit-0 and
/// bit-1 halves, shaped [batch, 2^q, 1, 2^(n-1-q)].
fn split<'t>(v: Var<'t>, n: usize, q: usize) -> Result<(Var<'t>, Var<'t>, Vec<usize>)> {
    let batch = v.shape()[0];
    let pre = 1usize << q;
    let post = 1usize << (n - 1 - q);
    let shaped = v.reshape(&[batch, pre, 2, post])?;
    let lo = shaped.slice(&[(0, batch), (0, pre), (0, 1), (0, post)])?;
    let hi = shaped.slice(&[(0, batch), (0, pre), (1, 2), (0, post)])?;
    Ok((lo, hi, vec![batch, 1 << n]))
}

fn join<'t>(lo_re: Var<'t>, hi_re: Var<'t>, lo_im: Var<'t>, hi_im: Var<'t>, state: &StateVector<'t>) -> Result<StateVector<'t>> {
    let full = vec![state.batch(), state.dim()];
    let re = concat(&[lo_re, hi_re], 2)?.reshape(&full)?;
    let im = concat(&[lo_im, hi_im], 2)?.reshape(&full)?;
    Ok(StateVector { n_qubits: state.n_qubits, re, im })
}

/// RZ(θ) = diag(e^{-iθ/2}, e^{+iθ/2}).
pub fn apply_rz<'t>(state: StateVector<'t>, qubit: usize, theta: Var<'t>) -> Result<StateVector<'t>> {
    check_qubit(&state, qubit)?;
    let tape = tape_of(state.re);
    let half = theta.mul(tape.scalar(0.5))?;
    let c = half.cos()?;
    let s = half.sin()?;
    let (re0, re1, _) = split(state.re, state.n_qubits, qubit)?;
    let (im0, im1, _) = split(state.im, state.n_qubits, qubit)?;
    // e^{-iθ/2}(re0 + i im0) = (c re0 + s im0) + i(c im0 - s re0)
    let nre0 = c.mul(re0)?.add(s.mul(im0)?)?;
    let nim0 = c.mul(im0)?.sub(s.mul(re0)?)?;
    let nre1 = c.mul(re1)?.sub(s.mul(im1)?)?;
    let nim1 = c.mul(im1)?.add(s.mul(re1)?)?;
    join(nre0, nre1, nim0, nim1, &state)
}

/// RY(θ) = [[cos θ/2, -sin θ/2], [sin θ/2, cos θ/2]].
pub fn apply_ry<'t>(state: StateVector<'t>, qubit: usize, theta: Var<'t>) -> Result<StateVector<'t>> {
    check_qubit(&state, qubit)?;
    let tape = tape_of(state.re);
    let half = theta.mul(tape.scalar(0.5))?;
    let c = half.cos()?;
    let s = half.sin()?;
    let (re0, re1, _) = split(state.re, state.n_qubits, qubit)?;
    let (im0, im1, _) = split(state.im, state.n_qubits, qubit)?;
    let nre0 = c.mul(re0)?.sub(s.mul(re1)?)?;
    let nre1 = s.mul(re0)?.add(c.mul(re1)?)?;
    let nim0 = c.mul(im0)?.sub(s.mul(im1)?)?;
    let nim1 = s.mul(im0)?.add(c.mul(im1)?)?;
    join(nre0, nre1, nim0, nim1, &state)
}

/// General rotation Rot(α, β, γ) = RZ(α)·RY(β)·RZ(γ), applied
/// right-to-left as a circuit: RZ(γ) first.
pub fn apply_rot<'t>(
    state: StateVector<'t>,
    qubit: usize,
    alpha: Var<'t>,
    beta: Var<'t>,
    gamma: Var<'t>,
) -> Result<StateVector<'t>> {
    let state = apply_rz(state, qubit, gamma)?;
    let state = apply_ry(state, qubit, beta)?;
    apply_rz(state, qubit, alpha)
}

/// Flip the target bit on every basis state whose control bit is 1.
pub fn apply_cnot<'t>(state: StateVector<'t>, control: usize, target: usize) -> Result<StateVector<'t>> {
    check_qubit(&state, control)?;
    check_qubit(&state, target)?;
    if control == target {
        return Err(QsimError::ControlEqualsTarget(control));
    }
    let n = state.n_qubits;
    let cmask = 1usize << (n - 1 - control);
    let tmask = 1usize << (n - 1 - target);
    let perm: Vec<usize> = (0..state.dim())
        .map(|i| if i & cmask != 0 { i ^ tmask } else { i })
        .collect();
    let perm = Arc::new(perm);
    let re = state.re.permute_last(perm.clone())?;
    let im = state.im.permute_last(perm)?;
    Ok(StateVector { n_qubits: n, re, im })
}

/// One strongly entangling block per layer: a general rotation on every
/// qubit, then the ring CNOT(q, (q + range) mod n).
pub fn apply_strongly_entangling<'t>(
    mut state: StateVector<'t>,
    params: &PQCParams,
    angles: Var<'t>,
) -> Result<StateVector<'t>> {
    let n = state.n_qubits;
    let shape = angles.shape();
    if shape != [params.layers(), n, 3] {
        return Err(QsimError::BadAngleShape { got: shape, n_qubits: n });
    }
    for (l, &range) in params.ranges.iter().enumerate() {
        for q in 0..n {
            let euler = |e: usize| {
                angles
                    .slice(&[(l, l + 1), (q, q + 1), (e, e + 1)])
                    .and_then(|v| v.reshape(&[]))
            };
            state = apply_rot(state, q, euler(0)?, euler(1)?, euler(2)?)?;
        }
        if n > 1 {
            for q in 0..n {
                state = apply_cnot(state, q, (q + range) % n)?;
            }
        }
    }
    Ok(state)
}
