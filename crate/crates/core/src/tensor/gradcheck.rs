use super::{Graph, Tensor, Var};
use crate::error::{Error, Result};

/// Compares the reverse-mode gradient of a scalar function against central
/// differences with step `h`, returning the worst coordinate's
/// `|analytic − numeric| / max(1e-8, |analytic| + |numeric|)`.
///
/// `f` builds the function on a fresh graph from the leaf it is handed; it
/// is called once with gradients enabled and `2·numel` times without.
pub fn gradient_check<F>(f: F, x: &Tensor, h: f64) -> Result<f64>
where
    F: Fn(&mut Graph, Var) -> Result<Var>,
{
    let eval = |t: &Tensor| -> Result<f64> {
        let mut g = Graph::new();
        let v = g.constant(t.clone());
        let out = f(&mut g, v)?;
        let y = g.item(out)?;
        if !y.is_finite() {
            return Err(Error::NonFinite("gradient_check objective".into()));
        }
        Ok(y)
    };

    let mut g = Graph::new();
    let mut leaf = x.clone();
    leaf.set_requires_grad(true);
    let v = g.leaf(&leaf);
    let out = f(&mut g, v)?;
    if !g.item(out)?.is_finite() {
        return Err(Error::NonFinite("gradient_check objective".into()));
    }
    g.backward(out)?;
    let analytic = g.grad(v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; x.numel()]);

    let mut worst = 0.0f64;
    let mut probe = x.clone();
    for i in 0..x.numel() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let up = eval(&probe)?;
        probe.data_mut()[i] = orig - h;
        let down = eval(&probe)?;
        probe.data_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        let a = analytic[i];
        let err = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
        worst = worst.max(err);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random(shape: &[usize], seed: u64) -> Tensor {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn sum_is_exact() {
        let err = gradient_check(|g, x| g.sum(x, None), &random(&[5], 1), 1e-5).unwrap();
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn softmax_jacobian_at_zero() {
        // One weighted output per class probes every Jacobian row.
        for row in 0..2 {
            let err = gradient_check(
                |g, x| {
                    let s = g.softmax(x, 0)?;
                    let pick = g.select(s, row)?;
                    g.sum(pick, None)
                },
                &Tensor::new(&[2, 1], vec![0.0, 0.0]).unwrap(),
                1e-5,
            )
            .unwrap();
            assert!(err < 1e-6, "{err}");
        }
    }

    #[test]
    fn elementwise_ops() {
        let x = random(&[6], 2);
        let pos = Tensor::from_vec(x.data().iter().map(|v| v.abs() + 0.5).collect());
        type Build = fn(&mut Graph, Var) -> Result<Var>;
        let cases: Vec<(&str, Build, &Tensor)> = vec![
            ("exp", |g, x| { let e = g.exp(x); g.sum(e, None) }, &x),
            ("ln", |g, x| { let e = g.ln(x); g.sum(e, None) }, &pos),
            ("log2", |g, x| { let e = g.log2(x); g.sum(e, None) }, &pos),
            ("sqrt", |g, x| { let e = g.sqrt(x); g.sum(e, None) }, &pos),
            ("div", |g, x| { let e = g.exp(x); let d = g.div(x, e)?; g.sum(d, None) }, &x),
            ("sub-neg-scale", |g, x| {
                let n = g.neg(x);
                let s = g.scale(n, 3.0);
                let e = g.exp(x);
                let d = g.sub(s, e)?;
                let q = g.mul(d, d)?;
                g.sum(q, None)
            }, &x),
            ("log_softmax", |g, x| {
                let r = g.reshape(x, &[3, 2])?;
                let l = g.log_softmax(r, 0)?;
                let w = g.constant(Tensor::new(&[3, 2], vec![1.0, -2.0, 0.5, 3.0, -1.0, 0.25]).unwrap());
                let p = g.mul(l, w)?;
                g.sum(p, None)
            }, &x),
            ("leaky", |g, x| { let e = g.leaky_relu(x, 0.01); let q = g.mul(e, e)?; g.sum(q, None) }, &x),
            ("clamp", |g, x| { let e = g.clamp_min(x, 0.05); let q = g.mul(e, x)?; g.sum(q, None) }, &x),
            ("mean-axis", |g, x| {
                let r = g.reshape(x, &[2, 3])?;
                let m = g.mean(r, Some(&[1]))?;
                let q = g.mul(m, m)?;
                g.sum(q, None)
            }, &x),
        ];
        for (name, f, input) in cases {
            let err = gradient_check(f, input, 1e-5).unwrap();
            assert!(err < 1e-6, "{name}: {err}");
        }
    }

    #[test]
    fn shared_subexpressions_accumulate() {
        let err = gradient_check(
            |g, x| {
                let e = g.exp(x);
                let a = g.mul(e, x)?;
                let b = g.add(a, e)?;
                let c = g.mul(b, e)?;
                g.sum(c, None)
            },
            &random(&[4], 9),
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn conv_kernel_and_input_gradients() {
        let input = random(&[2, 4, 4, 4], 4);
        let kernel = random(&[3, 2, 3, 3, 3], 5);
        let weights = random(&[3, 2, 2, 2], 6);
        for stride in [1, 2] {
            let [ref k2, ref w2] = [kernel.clone(), weights.clone()];
            let err = gradient_check(
                |g, k| {
                    let x = g.constant(input.clone());
                    let y = g.conv3d(x, k, None, stride, 1)?;
                    let w = if stride == 1 {
                        g.constant(random(&[3, 4, 4, 4], 7))
                    } else {
                        g.constant(w2.clone())
                    };
                    let p = g.mul(y, w)?;
                    g.sum(p, None)
                },
                k2,
                1e-5,
            )
            .unwrap();
            assert!(err < 1e-4, "kernel stride {stride}: {err}");
        }
        let err = gradient_check(
            |g, x| {
                let k = g.constant(kernel.clone());
                let b = g.constant(Tensor::from_vec(vec![0.1, -0.2, 0.3]));
                let y = g.conv3d(x, k, Some(b), 2, 1)?;
                let w = g.constant(weights.clone());
                let p = g.mul(y, w)?;
                let q = g.mul(p, p)?;
                g.sum(q, None)
            },
            &input,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-4, "input: {err}");
    }

    #[test]
    fn structural_ops_gradients() {
        let err = gradient_check(
            |g, x| {
                let u = g.upsample2(x)?;
                let c = g.concat(&[u, u])?;
                let s = g.select(c, 1)?;
                let e = g.expand(s, 2)?;
                let w = g.constant(random(&[2, 2, 4, 2], 11));
                let p = g.mul(e, w)?;
                let q = g.mul(p, p)?;
                g.sum(q, None)
            },
            &random(&[2, 1, 2, 1], 10),
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn non_finite_objective_is_an_error() {
        let x = Tensor::from_vec(vec![1000.0]);
        let r = gradient_check(|g, x| { let e = g.exp(x); let e = g.exp(e); g.sum(e, None) }, &x, 1e-5);
        assert!(matches!(r, Err(Error::NonFinite(_))));
    }
}
