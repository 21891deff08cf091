use autodiff::{Tensor, Var};
use qsim::{qnn_forward, HermitianObservable, PQCParams};

use crate::error::{QnnError, Result};

/// 5×5 valid cross-correlation layer, stride 1.
#[derive(Debug, Clone)]
pub struct Conv2DLayer {
    /// Shape [out_ch, in_ch, 5, 5].
    pub kernels: Tensor,
    /// Shape [out_ch].
    pub bias: Tensor,
}

impl Conv2DLayer {
    pub fn new(kernels: Tensor, bias: Tensor) -> Result<Self> {
        let ks = kernels.shape();
        if ks.len() != 4 || ks[2] != 5 || ks[3] != 5 {
            return Err(QnnError::BadShape {
                op: "Conv2DLayer",
                got: ks.to_vec(),
                expected: "[out_ch, in_ch, 5, 5]".into(),
            });
        }
        if bias.shape() != [ks[0]] {
            return Err(QnnError::BadShape {
                op: "Conv2DLayer",
                got: bias.shape().to_vec(),
                expected: format!("[{}]", ks[0]),
            });
        }
        if !kernels.is_finite() || !bias.is_finite() {
            return Err(QnnError::NonFiniteParam("conv kernels/bias".into()));
        }
        Ok(Conv2DLayer { kernels, bias })
    }
}

/// Affine layer x·Wᵀ + b.
#[derive(Debug, Clone)]
pub struct DenseLayer {
    /// Shape [out, in].
    pub weights: Tensor,
    /// Shape [out].
    pub bias: Tensor,
}

impl DenseLayer {
    pub fn new(weights: Tensor, bias: Tensor) -> Result<Self> {
        let ws = weights.shape();
        if ws.len() != 2 || bias.shape() != [ws[0]] {
            return Err(QnnError::BadShape {
                op: "DenseLayer",
                got: ws.to_vec(),
                expected: "[out, in] with bias [out]".into(),
            });
        }
        if !weights.is_finite() || !bias.is_finite() {
            return Err(QnnError::NonFiniteParam("dense weights/bias".into()));
        }
        Ok(DenseLayer { weights, bias })
    }
}

/// The composite quantum layer: amplitude embedding, strongly entangling
/// circuit, per-qubit Hermitian measurement, optional projection-shortcut
/// residual (64 → 6 affine skip).
#[derive(Debug, Clone)]
pub struct QNNLayer {
    pub pqc: PQCParams,
    pub obs: HermitianObservable,
    pub residual_enabled: bool,
    /// Shape [6, 64].
    pub residual_weights: Tensor,
    /// Shape [6].
    pub residual_bias: Tensor,
}

impl QNNLayer {
    pub fn new(
        pqc: PQCParams,
        obs: HermitianObservable,
        residual_enabled: bool,
        residual_weights: Tensor,
        residual_bias: Tensor,
    ) -> Result<Self> {
        if pqc.n_qubits != 6 || obs.n_qubits() != 6 {
            return Err(QnnError::InvalidConfig("QNN layer requires 6 qubits".into()));
        }
        if residual_weights.shape() != [6, 64] || residual_bias.shape() != [6] {
            return Err(QnnError::BadShape {
                op: "QNNLayer",
                got: residual_weights.shape().to_vec(),
                expected: "[6, 64] with bias [6]".into(),
            });
        }
        Ok(QNNLayer { pqc, obs, residual_enabled, residual_weights, residual_bias })
    }
}

/// Valid 5×5 cross-correlation with per-channel bias, as
/// im2col + matmul. Input [b,c,h,w], kernels [out,c,5,5], bias [out];
/// output [b,out,h−4,w−4].
pub fn conv2d<'t>(x: Var<'t>, kernels: Var<'t>, bias: Var<'t>) -> Result<Var<'t>> {
    let xs = x.shape();
    let ks = kernels.shape();
    if xs.len() != 4 || ks.len() != 4 || ks[2] != 5 || ks[3] != 5 {
        return Err(QnnError::BadShape {
            op: "conv2d",
            got: xs,
            expected: "input [b,c,h,w], kernels [out,c,5,5]".into(),
        });
    }
    if xs[1] != ks[1] {
        return Err(QnnError::ChannelMismatch { input: xs[1], kernel: ks[1] });
    }
    if xs[2] < 5 || xs[3] < 5 {
        return Err(QnnError::BadShape {
            op: "conv2d",
            got: xs,
            expected: "spatial dims >= 5".into(),
        });
    }
    let (b, oh, ow, out) = (xs[0], xs[2] - 4, xs[3] - 4, ks[0]);
    let cols = x.im2col(5, 5)?; // [b*oh*ow, c*25]
    let kmat = kernels.reshape(&[out, ks[1] * 25])?.permute(&[1, 0])?;
    let y = cols.matmul(kmat)?.add(bias)?; // bias broadcasts over trailing axis
    Ok(y.reshape(&[b, oh, ow, out])?.permute(&[0, 3, 1, 2])?)
}

/// Mean over non-overlapping 2×2 windows.
pub fn avgpool2<'t>(x: Var<'t>) -> Result<Var<'t>> {
    Ok(x.avgpool2()?)
}

/// Affine map x·Wᵀ + b for x [b,in], W [out,in], b [out].
pub fn dense<'t>(x: Var<'t>, weights: Var<'t>, bias: Var<'t>) -> Result<Var<'t>> {
    let xs = x.shape();
    let ws = weights.shape();
    if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[1] {
        return Err(QnnError::BadShape {
            op: "dense",
            got: xs,
            expected: format!("[b, {}] for weights {:?}", ws.get(1).copied().unwrap_or(0), ws),
        });
    }
    Ok(x.matmul(weights.permute(&[1, 0])?)?.add(bias)?)
}

/// QNN layer forward: the quantum circuit output, plus the affine
/// projection skip when `residual` carries (weights, bias) Vars.
pub fn qnn_layer_forward<'t>(
    x: Var<'t>,
    pqc: &PQCParams,
    angles: Var<'t>,
    coeffs: Var<'t>,
    residual: Option<(Var<'t>, Var<'t>)>,
) -> Result<Var<'t>> {
    let q = qnn_forward(x, pqc, angles, coeffs)?;
    match residual {
        None => Ok(q),
        Some((w, b)) => Ok(q.add(dense(x, w, b)?)?),
    }
}

/// Mean over the batch of −log softmax(logits)[true class], stabilized
/// by max-subtraction. Labels must be exactly one-hot rows.
pub fn softmax_cross_entropy<'t>(logits: Var<'t>, labels: Var<'t>) -> Result<Var<'t>> {
    let ls = logits.shape();
    if ls.len() != 2 || labels.shape() != ls {
        return Err(QnnError::BadShape {
            op: "softmax_cross_entropy",
            got: labels.shape(),
            expected: format!("{ls:?}"),
        });
    }
    let (b, k) = (ls[0], ls[1]);
    let lv = labels.value();
    for row in 0..b {
        let r = &lv.data()[row * k..(row + 1) * k];
        let ones = r.iter().filter(|&&v| v == 1.0).count();
        if ones != 1 || r.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(QnnError::NotOneHot { row });
        }
    }
    let m = logits.max_last()?.repeat_last(k)?;
    let shifted = logits.sub(m)?;
    let lse = shifted.exp()?.sum_last()?.ln()?; // [b,1]
    let picked = shifted.mul(labels)?.sum_last()?;
    Ok(lse.sub(picked)?.mean_all()?)
}
