use crate::tensor::Tensor;

/// Central-difference gradient of a scalar function, coordinate by
/// coordinate: (f(x + eps e_i) - f(x - eps e_i)) / (2 eps).
///
/// This is the independent oracle every backward rule is checked against;
/// it never touches the tape.
pub fn finite_diff_gradient<F>(f: F, x: &Tensor, eps: f64) -> Tensor
where
    F: Fn(&Tensor) -> f64,
{
    assert!(eps > 0.0, "eps must be positive");
    let mut probe = x.clone();
    let mut grad = vec![0.0; x.numel()];
    for i in 0..x.numel() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + eps;
        let fp = f(&probe);
        probe.data_mut()[i] = orig - eps;
        let fm = f(&probe);
        probe.data_mut()[i] = orig;
        grad[i] = (fp - fm) / (2.0 * eps);
    }
    Tensor::new(x.shape().to_vec(), grad).unwrap()
}

/// Infinity-norm relative difference between two gradients: the largest
/// absolute entry difference divided by the largest magnitude seen in
/// either, floored to keep near-zero gradients meaningful.
pub fn max_rel_err(a: &Tensor, b: &Tensor, floor: f64) -> f64 {
    assert_eq!(a.shape(), b.shape(), "rel err on mismatched shapes");
    let scale = a.max_abs().max(b.max_abs()).max(floor);
    a.data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (x - y).abs())
        .fold(0.0, f64::max)
        / scale
}
