use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// One momentum-SGD step on every tensor:
/// `g' = g + wd·p; v = m·v + g'; p -= rate·v`.
///
/// All gradients are checked before anything is modified, so a non-finite
/// gradient leaves parameters and velocities untouched.
pub fn sgd_update(
    params: &mut [Tensor],
    grads: &[Vec<f64>],
    velocity: &mut [Vec<f64>],
    rate: f64,
    momentum: f64,
    weight_decay: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != velocity.len() {
        return Err(Error::invalid(format!(
            "sgd_update: {} params, {} grads, {} velocity buffers",
            params.len(),
            grads.len(),
            velocity.len()
        )));
    }
    for (i, ((p, g), v)) in params.iter().zip(grads).zip(velocity.iter()).enumerate() {
        if g.len() != p.numel() || v.len() != p.numel() {
            return Err(Error::ShapeMismatch {
                op: "sgd_update",
                left: p.shape().to_vec(),
                right: vec![g.len(), v.len()],
            });
        }
        if let Some(bad) = g.iter().find(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("gradient of parameter {i} ({bad})")));
        }
    }
    for ((p, g), v) in params.iter_mut().zip(grads).zip(velocity.iter_mut()) {
        for ((w, &gi), vi) in p.data_mut().iter_mut().zip(g).zip(v.iter_mut()) {
            let gd = gi + weight_decay * *w;
            *vi = momentum * *vi + gd;
            *w -= rate * *vi;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(p: f64) -> Vec<Tensor> {
        vec![Tensor::from_vec(vec![p])]
    }

    #[test]
    fn scalar_momentum_trace() {
        let mut p = one(1.0);
        let mut v = vec![vec![0.0]];
        sgd_update(&mut p, &[vec![1.0]], &mut v, 0.1, 0.9, 0.0).unwrap();
        assert_eq!(v[0][0], 1.0);
        assert!((p[0].data()[0] - 0.9).abs() < 1e-15);
        sgd_update(&mut p, &[vec![1.0]], &mut v, 0.1, 0.9, 0.0).unwrap();
        assert!((v[0][0] - 1.9).abs() < 1e-15);
        assert!((p[0].data()[0] - 0.71).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_and_decay() {
        let mut p = one(2.0);
        let mut v = vec![vec![0.0]];
        sgd_update(&mut p, &[vec![0.0]], &mut v, 0.5, 0.9, 0.0).unwrap();
        assert_eq!(p[0].data()[0], 2.0);
        sgd_update(&mut p, &[vec![0.0]], &mut v, 1.0, 0.0, 0.1).unwrap();
        assert!((p[0].data()[0] - 1.8).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_aborts_untouched() {
        let mut p = vec![Tensor::from_vec(vec![1.0, 2.0])];
        let mut v = vec![vec![0.5, 0.5]];
        let err = sgd_update(&mut p, &[vec![1.0, f64::NAN]], &mut v, 0.1, 0.9, 0.0).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
        assert_eq!(p[0].data(), &[1.0, 2.0]);
        assert_eq!(v[0], vec![0.5, 0.5]);
    }
}
