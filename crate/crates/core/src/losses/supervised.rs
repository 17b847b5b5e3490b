use super::{cross_entropy_map, one_hot, spatial_dims};
use crate::error::{Error, Result};
use crate::tensor::{Graph, Tensor, Var};

/// Smoothing added to numerator and denominator of the soft Dice ratio.
pub const DICE_EPS: f64 = 1e-5;

/// Mean voxel cross-entropy plus soft Dice loss on the foreground channel.
///
/// `label` is a `[X, Y, Z]` tensor of zeros and ones. The Dice term is
/// `1 − (2·Σ p·y + ε) / (Σ p + Σ y + ε)` with `p` the foreground softmax.
pub fn supervised_loss(g: &mut Graph, logits: Var, label: &Tensor) -> Result<Var> {
    let dims = spatial_dims(g.shape(logits), "supervised_loss logits")?;
    if label.shape() != dims {
        return Err(Error::ShapeMismatch {
            op: "supervised_loss",
            left: g.shape(logits).to_vec(),
            right: label.shape().to_vec(),
        });
    }
    if let Some(bad) = label.data().iter().find(|&&v| v != 0.0 && v != 1.0) {
        return Err(Error::invalid(format!("label value {bad} is not in {{0, 1}}")));
    }

    let target = one_hot(g, dims, label.data().iter().map(|&v| Some(v as usize)));
    let ce_map = cross_entropy_map(g, logits, target)?;
    let ce = g.mean(ce_map, None)?;

    let probs = g.softmax(logits, 0)?;
    let fg = g.select(probs, 1)?;
    let y = g.constant(label.clone());
    let inter_map = g.mul(fg, y)?;
    let inter = g.sum(inter_map, None)?;
    let num = g.scale(inter, 2.0);
    let num = g.add_scalar(num, DICE_EPS);
    let psum = g.sum(fg, None)?;
    let ysum: f64 = label.data().iter().sum();
    let den = g.add_scalar(psum, ysum + DICE_EPS);
    let dice = g.div(num, den)?;
    let dice_loss = g.neg(dice);
    let dice_loss = g.add_scalar(dice_loss, 1.0);

    g.add(ce, dice_loss)
}
