use super::{PseudoLabelMask, IGNORE};
use crate::error::{Error, Result};
use crate::tensor::{Graph, Tensor, Var};

/// How the three distance terms of the prototype loss are combined.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContrastiveMode {
    /// `d(v, c_f) + d(v, c_b) + d(c_f, c_b)`, all terms added.
    #[default]
    Additive,
    /// `max(0, d(v, c_own) − d(v, c_other) − d(c_f, c_b))`: pull towards the
    /// voxel's argmax prototype, push from the other, reward separation.
    Margin,
}

/// Foreground and background prototypes: mean embeddings of reliable voxels.
#[derive(Clone, Debug, PartialEq)]
pub struct PrototypeSet {
    pub foreground: Vec<f64>,
    pub background: Vec<f64>,
    pub fg_support: usize,
    pub bg_support: usize,
}

impl PrototypeSet {
    pub fn fg_valid(&self) -> bool {
        self.fg_support > 0
    }

    pub fn bg_valid(&self) -> bool {
        self.bg_support > 0
    }

    pub fn is_valid(&self) -> bool {
        self.fg_valid() && self.bg_valid()
    }

    /// Squared Euclidean distance between the two prototypes.
    pub fn separation(&self) -> f64 {
        sq_dist(&self.foreground, &self.background)
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

fn feature_dims(shape: &[usize]) -> Result<(usize, [usize; 3])> {
    if shape.len() != 4 {
        return Err(Error::invalid(format!("expected [F, X, Y, Z] features, got {shape:?}")));
    }
    Ok((shape[0], [shape[1], shape[2], shape[3]]))
}

/// Unit-length embedding per voxel: `f / ‖f‖` along the feature axis.
pub fn normalize_embeddings(g: &mut Graph, features: Var) -> Result<Var> {
    let (f, _) = feature_dims(g.shape(features))?;
    let sq = g.mul(features, features)?;
    let norm_sq = g.sum(sq, Some(&[0]))?;
    let norm = g.sqrt(norm_sq);
    let norm = g.expand(norm, f)?;
    g.div(features, norm)
}

/// Per-class mean embedding over the mask's reliable voxels.
///
/// A class with no reliable voxel gets a zero vector and zero support.
pub fn compute_prototypes(embeddings: &Tensor, mask: &PseudoLabelMask) -> Result<PrototypeSet> {
    let (f, dims) = feature_dims(embeddings.shape())?;
    if dims != mask.dims {
        return Err(Error::ShapeMismatch {
            op: "compute_prototypes",
            left: embeddings.shape().to_vec(),
            right: mask.dims.to_vec(),
        });
    }
    let n = mask.len();
    let d = embeddings.data();
    let mut sums = [vec![0.0; f], vec![0.0; f]];
    let mut counts = [0usize; 2];
    for (i, &l) in mask.labels.iter().enumerate() {
        if l == IGNORE {
            continue;
        }
        let c = l as usize;
        counts[c] += 1;
        for k in 0..f {
            sums[c][k] += d[k * n + i];
        }
    }
    let [mut bg, mut fg] = sums;
    for (v, c) in [(&mut bg, counts[0]), (&mut fg, counts[1])] {
        if c > 0 {
            v.iter_mut().for_each(|x| *x /= c as f64);
        }
    }
    Ok(PrototypeSet {
        foreground: fg,
        background: bg,
        fg_support: counts[1],
        bg_support: counts[0],
    })
}

/// Prototype-alignment loss and whether it was skipped.
#[derive(Clone, Copy, Debug)]
pub struct ContrastiveLoss {
    pub loss: Var,
    /// True when a prototype had no support or no voxel was uncertain.
    pub skipped: bool,
}

fn distance_map(g: &mut Graph, emb: Var, proto: Tensor) -> Result<Var> {
    let c = g.constant(proto);
    let diff = g.sub(emb, c)?;
    let sq = g.mul(diff, diff)?;
    g.sum(sq, Some(&[0]))
}

/// Aligns embeddings of uncertain (ignored) voxels with the class prototypes.
///
/// Distances are squared Euclidean; prototypes enter as constants, so
/// gradients flow only into `embeddings`. Averaged over uncertain voxels.
pub fn contrastive_loss(
    g: &mut Graph,
    embeddings: Var,
    mask: &PseudoLabelMask,
    prototypes: &PrototypeSet,
    mode: ContrastiveMode,
) -> Result<ContrastiveLoss> {
    let (f, dims) = feature_dims(g.shape(embeddings))?;
    if dims != mask.dims {
        return Err(Error::ShapeMismatch {
            op: "contrastive_loss",
            left: g.shape(embeddings).to_vec(),
            right: mask.dims.to_vec(),
        });
    }
    if prototypes.foreground.len() != f || prototypes.background.len() != f {
        return Err(Error::invalid(format!(
            "prototype dimension {} does not match feature dimension {f}",
            prototypes.foreground.len()
        )));
    }
    let n = mask.len();
    let uncertain = n - mask.valid_count;
    if !prototypes.is_valid() || uncertain == 0 {
        return Ok(ContrastiveLoss {
            loss: g.scalar(0.0),
            skipped: true,
        });
    }
    let shape = g.shape(embeddings).to_vec();
    let (fg, bg) = (&prototypes.foreground[..], &prototypes.background[..]);
    let broadcast = |pick: &dyn Fn(usize) -> bool| {
        let mut data = vec![0.0; f * n];
        for i in 0..n {
            let p = if pick(i) { fg } else { bg };
            for k in 0..f {
                data[k * n + i] = p[k];
            }
        }
        Tensor::new(&shape, data)
    };
    let sep = prototypes.separation();

    let per_voxel = match mode {
        ContrastiveMode::Additive => {
            let d_f = distance_map(g, embeddings, broadcast(&|_| true)?)?;
            let d_b = distance_map(g, embeddings, broadcast(&|_| false)?)?;
            let s = g.add(d_f, d_b)?;
            g.add_scalar(s, sep)
        }
        ContrastiveMode::Margin => {
            let own = broadcast(&|i| mask.argmax[i] == 1)?;
            let other = broadcast(&|i| mask.argmax[i] != 1)?;
            let d_own = distance_map(g, embeddings, own)?;
            let d_other = distance_map(g, embeddings, other)?;
            let diff = g.sub(d_own, d_other)?;
            let diff = g.add_scalar(diff, -sep);
            g.clamp_min(diff, 0.0)
        }
    };
    let weights: Vec<f64> = mask.labels.iter().map(|&l| if l == IGNORE { 1.0 } else { 0.0 }).collect();
    let w = g.constant(Tensor::new(&dims, weights)?);
    let masked = g.mul(per_voxel, w)?;
    let total = g.sum(masked, None)?;
    Ok(ContrastiveLoss {
        loss: g.scale(total, 1.0 / uncertain as f64),
        skipped: false,
    })
}
