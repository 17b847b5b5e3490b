//! Every term of the training objective, plus the entropy filter, the
//! uncertainty weighting, class prototypes, and the contrastive weight schedule.
//!
//! Prediction tensors are `[C, X, Y, Z]` with `C == 2` (background,
//! foreground). Differentiable terms are built on a caller-supplied
//! [`Graph`](crate::tensor::Graph) so that one backward pass covers the whole
//! objective.

mod consistency;
mod contrastive;
mod entropy;
mod report;
mod schedule;
mod supervised;
mod uncertainty;

pub use consistency::consistency_regularization;
pub use contrastive::{
    compute_prototypes, contrastive_loss, normalize_embeddings, ContrastiveLoss, ContrastiveMode, PrototypeSet,
};
pub use entropy::{build_pseudo_mask, pseudo_supervised_loss, voxel_entropy, PseudoLabelMask, IGNORE};
pub use report::{total_loss, LossReport, LossTerms};
pub use schedule::lambda_schedule;
pub use supervised::{supervised_loss, DICE_EPS};
pub use uncertainty::{kl_divergence, uncertainty_weighted_loss};

use crate::error::{Error, Result};
use crate::tensor::{Graph, Tensor, Var};

/// Number of segmentation classes.
pub const CLASSES: usize = 2;

/// Entropy guard inside `log2(p + ε)`.
pub const ENTROPY_EPS: f64 = 1e-12;

pub(crate) fn spatial_dims(shape: &[usize], what: &str) -> Result<[usize; 3]> {
    if shape.len() != 4 || shape[0] != CLASSES {
        return Err(Error::invalid(format!(
            "{what}: expected [{CLASSES}, X, Y, Z], got {shape:?}"
        )));
    }
    Ok([shape[1], shape[2], shape[3]])
}

/// Constant one-hot `[C, X, Y, Z]` target; voxels with `None` get all zeros.
pub(crate) fn one_hot(g: &mut Graph, dims: [usize; 3], labels: impl Iterator<Item = Option<usize>>) -> Var {
    let n = dims.iter().product::<usize>();
    let mut data = vec![0.0; CLASSES * n];
    for (i, l) in labels.enumerate() {
        if let Some(c) = l {
            data[c * n + i] = 1.0;
        }
    }
    g.constant(Tensor::new(&[CLASSES, dims[0], dims[1], dims[2]], data).expect("one-hot shape"))
}

/// Per-voxel `−Σ_c target_c · log_softmax(logits)_c`, shape `[X, Y, Z]`.
pub(crate) fn cross_entropy_map(g: &mut Graph, logits: Var, target: Var) -> Result<Var> {
    let logp = g.log_softmax(logits, 0)?;
    let prod = g.mul(target, logp)?;
    let s = g.sum(prod, Some(&[0]))?;
    Ok(g.neg(s))
}
