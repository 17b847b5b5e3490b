use crate::error::{Error, Result};
use crate::tensor::{Graph, Var};

/// `1 − cos(p_s, p_t)` between two probability fields, flattened.
pub fn consistency_regularization(g: &mut Graph, probs_s: Var, probs_t: Var) -> Result<Var> {
    if g.shape(probs_s) != g.shape(probs_t) {
        return Err(Error::ShapeMismatch {
            op: "consistency_regularization",
            left: g.shape(probs_s).to_vec(),
            right: g.shape(probs_t).to_vec(),
        });
    }
    let norm_sq = |g: &Graph, v: Var| g.data(v).iter().map(|x| x * x).sum::<f64>();
    if norm_sq(g, probs_s) == 0.0 || norm_sq(g, probs_t) == 0.0 {
        return Err(Error::invalid("consistency_regularization: zero-norm prediction"));
    }
    let n = g.data(probs_s).len();
    let s = g.reshape(probs_s, &[n])?;
    let t = g.reshape(probs_t, &[n])?;
    let st = g.mul(s, t)?;
    let dot = g.sum(st, None)?;
    let ss = g.mul(s, s)?;
    let ss = g.sum(ss, None)?;
    let ns = g.sqrt(ss);
    let tt = g.mul(t, t)?;
    let tt = g.sum(tt, None)?;
    let nt = g.sqrt(tt);
    let den = g.mul(ns, nt)?;
    let cos = g.div(dot, den)?;
    let neg = g.neg(cos);
    let d = g.add_scalar(neg, 1.0);
    // rounding can push cos a hair above 1 for identical inputs
    Ok(g.clamp_min(d, 0.0))
}
