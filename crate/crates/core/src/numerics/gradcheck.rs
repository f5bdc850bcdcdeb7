use super::Tensor;

/// Central-difference gradient of a scalar function at `point`:
/// `(f(x + eps·e_i) − f(x − eps·e_i)) / (2·eps)` for each coordinate.
///
/// The quotient is formed in f64 and divides by the perturbation actually
/// realised in f32 (`x_i + eps` is generally not exact), so functions that
/// evaluate in f64 get f64-accurate estimates.
pub fn finite_diff_gradient<V: Into<f64>, E>(
    mut f: impl FnMut(&Tensor) -> Result<V, E>,
    point: &Tensor,
    eps: f32,
) -> Result<Tensor, E> {
    assert!(eps > 0.0, "finite difference step must be positive");
    let mut grad = vec![0.0f32; point.len()];
    let mut probe = point.clone();
    for (i, g) in grad.iter_mut().enumerate() {
        let orig = point.data()[i];
        let (hi, lo) = (orig + eps, orig - eps);
        probe.data_mut()[i] = hi;
        let up: f64 = f(&probe)?.into();
        probe.data_mut()[i] = lo;
        let down: f64 = f(&probe)?.into();
        probe.data_mut()[i] = orig;
        *g = ((up - down) / (f64::from(hi) - f64::from(lo))) as f32;
    }
    Ok(Tensor::from_parts(point.shape().to_vec(), grad))
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, zero when both are zero.
pub fn relative_error(a: &[f32], b: &[f32]) -> f32 {
    assert_eq!(a.len(), b.len());
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    let diff = norm(&mut a.iter().zip(b).map(|(&x, &y)| f64::from(x) - f64::from(y)));
    let scale = norm(&mut a.iter().map(|&x| f64::from(x))).max(norm(&mut b.iter().map(|&x| f64::from(x))));
    if scale == 0.0 {
        0.0
    } else {
        (diff / scale) as f32
    }
}
