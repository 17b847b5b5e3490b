use super::spatial_dims;
use crate::error::{Error, Result};
use crate::tensor::{Graph, Tensor, Var};

/// Per-voxel `Σ_c p_t(c)·ln(p_t(c) / p_s(c))` in nats, shape `[X, Y, Z]`.
pub fn kl_divergence(g: &mut Graph, probs_s: Var, probs_t: Var) -> Result<Var> {
    spatial_dims(g.shape(probs_s), "kl_divergence")?;
    if g.shape(probs_s) != g.shape(probs_t) {
        return Err(Error::ShapeMismatch {
            op: "kl_divergence",
            left: g.shape(probs_s).to_vec(),
            right: g.shape(probs_t).to_vec(),
        });
    }
    let ln_t = g.ln(probs_t);
    let ln_s = g.ln(probs_s);
    let ratio = g.sub(ln_t, ln_s)?;
    let weighted = g.mul(probs_t, ratio)?;
    let kl = g.sum(weighted, Some(&[0]))?;
    // near-equal inputs can round a few ulps below zero
    Ok(g.clamp_min(kl, 0.0))
}

/// Uncertainty-weighted distillation of the student towards the teacher.
///
/// Per voxel, `L_p = CE(softmax(s), softmax(t / temperature))` against the
/// sharpened teacher, and `L = exp(−KL)·L_p + KL` with `KL` between the
/// plain softmax fields. The teacher side is detached: gradients flow to
/// `logits_s` only. Returns the mean over voxels.
pub fn uncertainty_weighted_loss(g: &mut Graph, logits_s: Var, logits_t: Var, temperature: f64) -> Result<Var> {
    if !(temperature > 0.0) {
        return Err(Error::invalid(format!("temperature must be positive, got {temperature}")));
    }
    let dims = spatial_dims(g.shape(logits_s), "uncertainty_weighted_loss")?;
    if g.shape(logits_s) != g.shape(logits_t) {
        return Err(Error::ShapeMismatch {
            op: "uncertainty_weighted_loss",
            left: g.shape(logits_s).to_vec(),
            right: g.shape(logits_t).to_vec(),
        });
    }
    let shape = [2, dims[0], dims[1], dims[2]];
    let t_logits = Tensor::new(&shape, g.data(logits_t).to_vec())?;

    let mut scaled = t_logits.clone();
    scaled.data_mut().iter_mut().for_each(|v| *v /= temperature);
    let scaled = g.constant(scaled);
    let sharpened = g.softmax(scaled, 0)?;
    let t_plain = g.constant(t_logits);
    let probs_t = g.softmax(t_plain, 0)?;

    let logp_s = g.log_softmax(logits_s, 0)?;
    let prod = g.mul(sharpened, logp_s)?;
    let lp = g.sum(prod, Some(&[0]))?;
    let lp = g.neg(lp);

    let probs_s = g.softmax(logits_s, 0)?;
    let kl = kl_divergence(g, probs_s, probs_t)?;
    let neg_kl = g.neg(kl);
    let weight = g.exp(neg_kl);
    let weighted = g.mul(weight, lp)?;
    let per_voxel = g.add(weighted, kl)?;
    g.mean(per_voxel, None)
}
