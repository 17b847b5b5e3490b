use super::{cross_entropy_map, one_hot, ENTROPY_EPS};
use crate::error::{Error, Result};
use crate::stats::quantile_linear;
use crate::tensor::{Graph, Tensor, Var};

/// Label value marking a filtered (unreliable) voxel.
pub const IGNORE: u8 = u8::MAX;

/// Entropy-filtered pseudo-labels for one prediction.
#[derive(Clone, Debug, PartialEq)]
pub struct PseudoLabelMask {
    pub dims: [usize; 3],
    /// Argmax class, or [`IGNORE`] where entropy exceeds `tau`.
    pub labels: Vec<u8>,
    /// Argmax class at every voxel, including ignored ones.
    pub argmax: Vec<u8>,
    /// Per-voxel entropy in bits.
    pub entropy: Vec<f64>,
    pub valid_count: usize,
    /// Threshold in bits.
    pub tau: f64,
}

impl PseudoLabelMask {
    /// Builds the mask from precomputed entropies and argmax classes.
    ///
    /// `tau` is the linear-interpolation `keep_quantile` quantile of
    /// `entropy`; voxels with entropy `<= tau` keep their label.
    pub fn from_entropy(dims: [usize; 3], entropy: Vec<f64>, argmax: Vec<u8>, keep_quantile: f64) -> Result<Self> {
        if !(keep_quantile > 0.0 && keep_quantile <= 1.0) {
            return Err(Error::invalid(format!("keep_quantile {keep_quantile} outside (0, 1]")));
        }
        let n: usize = dims.iter().product();
        if entropy.len() != n || argmax.len() != n {
            return Err(Error::ShapeMismatch {
                op: "pseudo mask",
                left: dims.to_vec(),
                right: vec![entropy.len(), argmax.len()],
            });
        }
        let tau = quantile_linear(&entropy, keep_quantile).ok_or_else(|| Error::invalid("empty prediction"))?;
        let labels: Vec<u8> = entropy
            .iter()
            .zip(&argmax)
            .map(|(&h, &c)| if h <= tau { c } else { IGNORE })
            .collect();
        let valid_count = labels.iter().filter(|&&l| l != IGNORE).count();
        Ok(Self {
            dims,
            labels,
            argmax,
            entropy,
            valid_count,
            tau,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn valid_fraction(&self) -> f64 {
        self.valid_count as f64 / self.labels.len() as f64
    }

    pub fn is_valid(&self, i: usize) -> bool {
        self.labels[i] != IGNORE
    }
}

fn check_probs(probs: &Tensor) -> Result<(usize, [usize; 3])> {
    let s = probs.shape();
    if s.len() != 4 {
        return Err(Error::invalid(format!("expected [C, X, Y, Z] probabilities, got {s:?}")));
    }
    let (c, n) = (s[0], s[1] * s[2] * s[3]);
    let d = probs.data();
    if let Some(v) = d.iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::invalid(format!("probability {v} is negative or NaN")));
    }
    for i in 0..n {
        let total: f64 = (0..c).map(|k| d[k * n + i]).sum();
        if (total - 1.0).abs() > 1e-6 {
            return Err(Error::invalid(format!("class probabilities at voxel {i} sum to {total}")));
        }
    }
    Ok((c, [s[1], s[2], s[3]]))
}

/// Per-voxel `−Σ_c p(c)·log2(p(c) + ε)` in bits, shape `[X, Y, Z]`.
pub fn voxel_entropy(probs: &Tensor) -> Result<Tensor> {
    let (c, dims) = check_probs(probs)?;
    let n: usize = dims.iter().product();
    let d = probs.data();
    let h = (0..n)
        .map(|i| {
            -(0..c)
                .map(|k| {
                    let p = d[k * n + i];
                    p * (p + ENTROPY_EPS).log2()
                })
                .sum::<f64>()
        })
        .collect();
    Tensor::new(&dims, h)
}

/// Pseudo-labels from a probability field, ignoring the most uncertain
/// `1 − keep_quantile` share of voxels.
pub fn build_pseudo_mask(probs: &Tensor, keep_quantile: f64) -> Result<PseudoLabelMask> {
    if !(keep_quantile > 0.0 && keep_quantile <= 1.0) {
        return Err(Error::invalid(format!("keep_quantile {keep_quantile} outside (0, 1]")));
    }
    let entropy = voxel_entropy(probs)?;
    let (c, dims) = check_probs(probs)?;
    let n: usize = dims.iter().product();
    let d = probs.data();
    let argmax = (0..n)
        .map(|i| {
            let mut best = 0;
            for k in 1..c {
                if d[k * n + i] > d[best * n + i] {
                    best = k;
                }
            }
            best as u8
        })
        .collect();
    PseudoLabelMask::from_entropy(dims, entropy.into_data(), argmax, keep_quantile)
}

/// Mean cross-entropy of `logits` against the mask's labels over valid voxels.
///
/// An all-ignored mask yields a constant zero.
pub fn pseudo_supervised_loss(g: &mut Graph, logits: Var, mask: &PseudoLabelMask) -> Result<Var> {
    let dims = super::spatial_dims(g.shape(logits), "pseudo_supervised_loss logits")?;
    if dims != mask.dims {
        return Err(Error::ShapeMismatch {
            op: "pseudo_supervised_loss",
            left: g.shape(logits).to_vec(),
            right: mask.dims.to_vec(),
        });
    }
    if mask.valid_count == 0 {
        return Ok(g.scalar(0.0));
    }
    let target = one_hot(g, dims, mask.labels.iter().map(|&l| (l != IGNORE).then_some(l as usize)));
    let ce = cross_entropy_map(g, logits, target)?;
    let total = g.sum(ce, None)?;
    Ok(g.scale(total, 1.0 / mask.valid_count as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn probs_from(p_fg: &[f64], dims: [usize; 3]) -> Tensor {
        let mut data: Vec<f64> = p_fg.iter().map(|p| 1.0 - p).collect();
        data.extend_from_slice(p_fg);
        Tensor::new(&[2, dims[0], dims[1], dims[2]], data).unwrap()
    }

    #[test]
    fn entropy_reference_values() {
        let h = voxel_entropy(&probs_from(&[0.0, 0.5, 0.1], [3, 1, 1])).unwrap();
        assert!(h.data()[0].abs() < 1e-9);
        assert!((h.data()[1] - 1.0).abs() < 1e-9);
        // −0.9·log2 0.9 − 0.1·log2 0.1
        assert!((h.data()[2] - 0.4690).abs() < 5e-5, "{}", h.data()[2]);
    }

    #[test]
    fn entropy_rejects_negative_probabilities() {
        let t = Tensor::new(&[2, 1, 1, 1], vec![1.5, -0.5]).unwrap();
        assert!(voxel_entropy(&t).is_err());
    }

    #[test]
    fn binary_entropy_peaks_at_uniform() {
        let ps: Vec<f64> = (0..=100).map(|i| i as f64 / 100.0).collect();
        let h = voxel_entropy(&probs_from(&ps, [101, 1, 1])).unwrap();
        let (imax, hmax) = h
            .data()
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |b, (i, &v)| if v > b.1 { (i, v) } else { b });
        assert_eq!(imax, 50);
        assert!((hmax - 1.0).abs() < 1e-9);
        assert!(h.data()[0].abs() < 1e-9 && h.data()[100].abs() < 1e-9);
    }

    #[test]
    fn ten_voxel_line_keeps_eight() {
        let entropy: Vec<f64> = (0..10).map(|i| i as f64 / 10.0).collect();
        let m = PseudoLabelMask::from_entropy([10, 1, 1], entropy, vec![1; 10], 0.8).unwrap();
        assert!((m.tau - 0.72).abs() < 1e-12);
        assert_eq!(m.valid_count, 8);
        assert!(m.labels[..8].iter().all(|&l| l == 1));
        assert!(m.labels[8..].iter().all(|&l| l == IGNORE));
    }

    #[test]
    fn constant_entropy_keeps_everything() {
        let m = build_pseudo_mask(&probs_from(&[1.0; 8], [2, 2, 2]), 0.8).unwrap();
        assert!(m.tau.abs() < 1e-9);
        assert_eq!(m.valid_count, 8);
        assert!(m.labels.iter().all(|&l| l == 1));
    }

    #[test]
    fn keep_quantile_range_checked() {
        let p = probs_from(&[0.3; 8], [2, 2, 2]);
        assert!(build_pseudo_mask(&p, 0.0).is_err());
        assert!(build_pseudo_mask(&p, 1.2).is_err());
        assert!(build_pseudo_mask(&p, 1.0).is_ok());
    }

    fn random_logits(rng: &mut impl Rng, dims: [usize; 3]) -> Tensor {
        let n: usize = 2 * dims.iter().product::<usize>();
        Tensor::new(&[2, dims[0], dims[1], dims[2]], (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect()).unwrap()
    }

    #[test]
    fn pseudo_loss_cases() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let dims = [3, 3, 3];
        let mask = PseudoLabelMask::from_entropy(
            dims,
            (0..27).map(|_| rng.gen_range(0.0..1.0)).collect(),
            (0..27).map(|_| rng.gen_range(0..2)).collect(),
            0.8,
        )
        .unwrap();

        // Saturated agreement.
        let mut data = vec![0.0; 54];
        for i in 0..27 {
            let s = if mask.argmax[i] == 1 { 20.0 } else { -20.0 };
            data[i] = -s;
            data[27 + i] = s;
        }
        let mut g = Graph::new();
        let l = g.constant(Tensor::new(&[2, 3, 3, 3], data).unwrap());
        let loss = pseudo_supervised_loss(&mut g, l, &mask).unwrap();
        assert!(g.item(loss).unwrap() < 1e-6);

        // Hand-computed masked mean.
        let logits = random_logits(&mut rng, dims);
        let d = logits.data();
        let mut total = 0.0;
        for i in 0..27 {
            if mask.is_valid(i) {
                let (a, b) = (d[i], d[27 + i]);
                let lse = (a.exp() + b.exp()).ln();
                total += lse - if mask.labels[i] == 1 { b } else { a };
            }
        }
        let mut g = Graph::new();
        let l = g.constant(logits);
        let loss = pseudo_supervised_loss(&mut g, l, &mask).unwrap();
        assert!((g.item(loss).unwrap() - total / mask.valid_count as f64).abs() < 1e-9);

        // Empty valid set.
        let mut empty = mask.clone();
        empty.labels.iter_mut().for_each(|l| *l = IGNORE);
        empty.valid_count = 0;
        let mut g = Graph::new();
        let l = g.constant(random_logits(&mut rng, dims));
        let loss = pseudo_supervised_loss(&mut g, l, &empty).unwrap();
        assert_eq!(g.item(loss).unwrap(), 0.0);
    }
}
