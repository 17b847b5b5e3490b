//! Build a small expression on a graph, run one backward pass, and confirm
//! the gradient against central differences.

use duoseg::tensor::{gradient_check, Graph, Tensor};

fn main() -> duoseg::Result<()> {
    let x = Tensor::new(&[2, 3], vec![0.5, -1.0, 2.0, 0.1, 0.3, -0.7])?.with_grad();

    let mut g = Graph::new();
    let xv = g.leaf(&x);
    let p = g.softmax(xv, 0)?;
    let lp = g.ln(p);
    let prod = g.mul(p, lp)?;
    let s = g.sum(prod, None)?;
    let h = g.neg(s);
    g.backward(h)?;

    println!("entropy (nats) = {:.6}", g.item(h)?);
    println!("d/dx = {:?}", g.grad(xv).unwrap());

    // A graph is single-use: a second backward is refused.
    assert!(g.backward(h).is_err());

    let err = gradient_check(
        |g, v| {
            let p = g.softmax(v, 0)?;
            let lp = g.ln(p);
            let prod = g.mul(p, lp)?;
            let s = g.sum(prod, None)?;
            Ok(g.neg(s))
        },
        &x,
        1e-5,
    )?;
    println!("max relative error vs finite differences: {err:.2e}");
    Ok(())
}
