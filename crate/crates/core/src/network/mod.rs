//! Two small, structurally different 3-D encoder-decoders.
//!
//! Both share one layout: `levels` resolution levels with `base·2^l`
//! channels, stride-2 convolutions going down, nearest-neighbour upsampling
//! plus skip concatenation coming up, and a zero-initialised 1×1×1
//! classifier on top of a `feature_dim`-channel penultimate map. With
//! `residual` set, every block adds a shortcut (identity when channel
//! counts agree, a 1×1×1 projection otherwise).

mod checkpoint;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointManifest, TensorEntry};

use crate::error::{Error, Result};
use crate::tensor::{Graph, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const LEAKY_SLOPE: f64 = 0.01;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetConfig {
    pub base_channels: usize,
    pub levels: usize,
    pub residual: bool,
    pub in_channels: usize,
    pub out_classes: usize,
    pub feature_dim: usize,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self::student()
    }
}

impl NetConfig {
    pub fn student() -> Self {
        Self {
            base_channels: 4,
            levels: 3,
            residual: false,
            in_channels: 1,
            out_classes: 2,
            feature_dim: 8,
        }
    }

    pub fn teacher() -> Self {
        Self {
            residual: true,
            ..Self::student()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.out_classes != 2 {
            return Err(Error::invalid(format!("out_classes must be 2, got {}", self.out_classes)));
        }
        if self.levels == 0 || self.levels > 6 {
            return Err(Error::invalid(format!("levels must be in 1..=6, got {}", self.levels)));
        }
        if self.base_channels == 0 || self.in_channels == 0 || self.feature_dim == 0 {
            return Err(Error::invalid("channel counts must be positive"));
        }
        Ok(())
    }

    /// Spatial extents must be multiples of this.
    pub fn divisor(&self) -> usize {
        1 << (self.levels - 1)
    }

    fn channels(&self, level: usize) -> usize {
        self.base_channels << level
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Shortcut {
    None,
    Identity,
    Project(usize),
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Block {
    weight: usize,
    bias: usize,
    stride: usize,
    shortcut: Shortcut,
}

/// One encoder-decoder with its parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    cfg: NetConfig,
    names: Vec<String>,
    params: Vec<Tensor>,
    encoder: Vec<Block>,
    down: Vec<Block>,
    decoder: Vec<Block>,
    classifier: Block,
}

struct Builder<'a> {
    names: Vec<String>,
    params: Vec<Tensor>,
    rng: &'a mut ChaCha8Rng,
}

impl Builder<'_> {
    fn uniform(&mut self, name: String, shape: &[usize], bound: f64) -> usize {
        let n = shape.iter().product();
        let data = (0..n).map(|_| self.rng.gen_range(-bound..=bound)).collect();
        self.push(name, Tensor::new(shape, data).expect("layer shape"))
    }

    fn push(&mut self, name: String, t: Tensor) -> usize {
        self.names.push(name);
        self.params.push(t);
        self.params.len() - 1
    }

    fn conv(&mut self, name: &str, ci: usize, co: usize, k: usize, stride: usize, residual: bool) -> Block {
        let fan_in = (ci * k * k * k) as f64;
        let weight = self.uniform(format!("{name}.weight"), &[co, ci, k, k, k], (6.0 / fan_in).sqrt());
        let bias = self.push(format!("{name}.bias"), Tensor::zeros(&[co]));
        let shortcut = match (residual, ci == co) {
            (false, _) => Shortcut::None,
            (true, true) => Shortcut::Identity,
            (true, false) => Shortcut::Project(self.uniform(
                format!("{name}.shortcut"),
                &[co, ci, 1, 1, 1],
                (6.0 / ci as f64).sqrt(),
            )),
        };
        Block {
            weight,
            bias,
            stride,
            shortcut,
        }
    }
}

impl Network {
    pub fn new(cfg: NetConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        cfg.validate()?;
        let mut b = Builder {
            names: Vec::new(),
            params: Vec::new(),
            rng,
        };
        let res = cfg.residual;
        let mut encoder = vec![b.conv("enc0", cfg.in_channels, cfg.channels(0), 3, 1, res)];
        let mut down = Vec::new();
        for l in 1..cfg.levels {
            down.push(b.conv(&format!("down{l}"), cfg.channels(l - 1), cfg.channels(l), 3, 2, false));
            encoder.push(b.conv(&format!("enc{l}"), cfg.channels(l), cfg.channels(l), 3, 1, res));
        }
        let mut decoder = Vec::new();
        let mut prev = cfg.channels(cfg.levels - 1);
        for l in (0..cfg.levels - 1).rev() {
            let out = if l == 0 { cfg.feature_dim } else { cfg.channels(l) };
            decoder.push(b.conv(&format!("dec{l}"), prev + cfg.channels(l), out, 3, 1, res));
            prev = out;
        }
        if cfg.levels == 1 {
            // Single level: the penultimate map is a block on top of enc0.
            decoder.push(b.conv("dec0", cfg.channels(0), cfg.feature_dim, 3, 1, res));
        }
        let weight = b.push("classifier.weight".into(), Tensor::zeros(&[cfg.out_classes, cfg.feature_dim, 1, 1, 1]));
        let bias = b.push("classifier.bias".into(), Tensor::zeros(&[cfg.out_classes]));
        let classifier = Block {
            weight,
            bias,
            stride: 1,
            shortcut: Shortcut::None,
        };
        Ok(Self {
            cfg,
            names: b.names,
            params: b.params,
            encoder,
            down,
            decoder,
            classifier,
        })
    }

    pub fn config(&self) -> &NetConfig {
        &self.cfg
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn param_names(&self) -> &[String] {
        &self.names
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::numel).sum()
    }

    /// Records every parameter on `g`; differentiable when `trainable`.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> Vec<Var> {
        self.params
            .iter()
            .map(|p| {
                if trainable {
                    let mut t = p.clone();
                    t.set_requires_grad(true);
                    g.leaf(&t)
                } else {
                    g.constant(p.clone())
                }
            })
            .collect()
    }

    pub fn check_input(&self, shape: &[usize]) -> Result<()> {
        if shape.len() != 4 || shape[0] != self.cfg.in_channels {
            return Err(Error::invalid(format!(
                "network input must be [{}, X, Y, Z], got {shape:?}",
                self.cfg.in_channels
            )));
        }
        let d = self.cfg.divisor();
        if shape[1..].iter().any(|&e| e % d != 0 || e == 0) {
            return Err(Error::invalid(format!(
                "spatial extents {:?} must be divisible by {d}",
                &shape[1..]
            )));
        }
        Ok(())
    }

    fn block(&self, g: &mut Graph, p: &[Var], b: &Block, x: Var, activate: bool) -> Result<Var> {
        let pad = if g.shape(p[b.weight])[2] == 3 { 1 } else { 0 };
        let mut y = g.conv3d(x, p[b.weight], Some(p[b.bias]), b.stride, pad)?;
        match b.shortcut {
            Shortcut::None => {}
            Shortcut::Identity => y = g.add(y, x)?,
            Shortcut::Project(w) => {
                let s = g.conv3d(x, p[w], None, 1, 0)?;
                y = g.add(y, s)?;
            }
        }
        Ok(if activate { g.leaky_relu(y, LEAKY_SLOPE) } else { y })
    }

    /// Forward pass with parameters already bound by [`Network::bind`].
    ///
    /// Returns `(logits [2, X, Y, Z], features [F, X, Y, Z])`.
    pub fn forward_bound(&self, g: &mut Graph, params: &[Var], input: Var) -> Result<(Var, Var)> {
        self.check_input(g.shape(input))?;
        let mut skips = Vec::with_capacity(self.cfg.levels);
        let mut x = self.block(g, params, &self.encoder[0], input, true)?;
        skips.push(x);
        for (down, enc) in self.down.iter().zip(&self.encoder[1..]) {
            x = self.block(g, params, down, x, true)?;
            x = self.block(g, params, enc, x, true)?;
            skips.push(x);
        }
        if self.cfg.levels == 1 {
            x = self.block(g, params, &self.decoder[0], x, true)?;
        } else {
            for (dec, skip) in self.decoder.iter().zip(skips[..self.cfg.levels - 1].iter().rev()) {
                let up = g.upsample2(x)?;
                let cat = g.concat(&[up, *skip])?;
                x = self.block(g, params, dec, cat, true)?;
            }
        }
        let logits = self.block(g, params, &self.classifier, x, false)?;
        Ok((logits, x))
    }

    /// Inference forward on a fresh graph; returns `(logits, features)` values.
    pub fn predict(&self, input: &Tensor) -> Result<(Tensor, Tensor)> {
        let mut g = Graph::new();
        let p = self.bind(&mut g, false);
        let x = g.constant(input.clone());
        let (l, f) = self.forward_bound(&mut g, &p, x)?;
        Ok((g.value(l), g.value(f)))
    }

    pub(crate) fn from_parts(cfg: NetConfig, rng_seed: u64, params: Vec<Tensor>) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let mut net = Self::new(cfg, &mut rng)?;
        if params.len() != net.params.len() {
            return Err(Error::invalid(format!(
                "expected {} parameter tensors, found {}",
                net.params.len(),
                params.len()
            )));
        }
        for (slot, p) in net.params.iter_mut().zip(params) {
            if slot.shape() != p.shape() {
                return Err(Error::ShapeMismatch {
                    op: "load parameters",
                    left: slot.shape().to_vec(),
                    right: p.shape().to_vec(),
                });
            }
            *slot = p;
        }
        Ok(net)
    }
}

/// Student/teacher pair with disjoint parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct DualNet {
    pub student: Network,
    pub teacher: Network,
}

/// Builds both networks deterministically from `seed`.
pub fn build_dual(cfg_s: NetConfig, cfg_t: NetConfig, seed: u64) -> Result<DualNet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let student = Network::new(cfg_s, &mut rng)?;
    rng.set_stream(2);
    let teacher = Network::new(cfg_t, &mut rng)?;
    Ok(DualNet { student, teacher })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conv_params(ci: usize, co: usize, k: usize) -> usize {
        co * ci * k * k * k + co
    }

    /// Hand count for base 4, three levels, feature dim 8.
    fn expected_count(residual: bool) -> usize {
        let plain = conv_params(1, 4, 3)      // enc0
            + conv_params(4, 8, 3)            // down1
            + conv_params(8, 8, 3)            // enc1
            + conv_params(8, 16, 3)           // down2
            + conv_params(16, 16, 3)          // enc2
            + conv_params(16 + 8, 8, 3)       // dec1
            + conv_params(8 + 4, 8, 3)        // dec0
            + conv_params(8, 2, 1); // classifier
        let shortcuts = 4     // enc0 1→4
            + 24 * 8          // dec1 24→8
            + 12 * 8; // dec0 12→8
        plain + if residual { shortcuts } else { 0 }
    }

    #[test]
    fn parameter_counts() {
        let d = build_dual(NetConfig::student(), NetConfig::teacher(), 0).unwrap();
        assert_eq!(d.student.param_count(), expected_count(false));
        assert_eq!(d.student.param_count(), 20930);
        assert_eq!(d.teacher.param_count(), expected_count(true));
        assert_eq!(d.teacher.param_count(), 21222);
    }

    #[test]
    fn deterministic_and_distinct() {
        let a = build_dual(NetConfig::student(), NetConfig::teacher(), 42).unwrap();
        let b = build_dual(NetConfig::student(), NetConfig::teacher(), 42).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.student.param_count(), a.teacher.param_count());
        let c = build_dual(NetConfig::student(), NetConfig::student(), 42).unwrap();
        assert_ne!(c.student.params(), c.teacher.params());
    }

    #[test]
    fn zero_classifier_gives_zero_logits() {
        let d = build_dual(NetConfig::student(), NetConfig::teacher(), 1).unwrap();
        for extent in [16, 32] {
            let x = Tensor::full(&[1, extent, extent, extent], 0.3);
            for net in [&d.student, &d.teacher] {
                let (l, f) = net.predict(&x).unwrap();
                assert_eq!(l.shape(), &[2, extent, extent, extent]);
                assert_eq!(f.shape(), &[8, extent, extent, extent]);
                assert!(l.data().iter().all(|&v| v == 0.0));
                assert!(f.is_finite());
            }
        }
    }

    #[test]
    fn indivisible_extent_names_divisor() {
        let d = build_dual(NetConfig::student(), NetConfig::teacher(), 1).unwrap();
        let err = d.student.predict(&Tensor::zeros(&[1, 6, 8, 8])).unwrap_err();
        assert!(err.to_string().contains("divisible by 4"), "{err}");
    }

    #[test]
    fn invalid_config_rejected() {
        let cfg = NetConfig {
            out_classes: 3,
            ..NetConfig::student()
        };
        assert!(build_dual(cfg, NetConfig::teacher(), 0).is_err());
    }
}
