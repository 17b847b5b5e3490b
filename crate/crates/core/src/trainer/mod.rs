//! Momentum SGD, the step-decay schedule, the mixed labeled/unlabeled
//! update, and sliding-window inference.

mod inference;
mod iteration;
mod run;
mod sgd;

pub use inference::{sliding_window_logits, sliding_window_predict, window_starts, Ensemble, Segmenter, WindowedLogits};
pub use iteration::{clip_grads, train_iteration, TrainState};
pub use run::{run_training, HistoryRow, TrainOutcome, TrainingData};
pub use sgd::sgd_update;

use crate::error::{Error, Result};
use crate::losses::ContrastiveMode;
use serde::{Deserialize, Serialize};

/// Which objective a run optimises.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    /// All terms, labeled and unlabeled.
    #[default]
    Full,
    /// Supervised terms of both networks only; unlabeled crops are unused.
    Supervised,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Ablation {
    pub use_une: bool,
    pub use_reg: bool,
}

impl Default for Ablation {
    fn default() -> Self {
        Self {
            use_une: true,
            use_reg: true,
        }
    }
}

/// Default gradient-norm ceiling; see [`TrainConfig::grad_clip`].
pub const GRAD_CLIP: f64 = 10.0;

/// Optimisation hyperparameters. Every iteration draws exactly one labeled
/// and one unlabeled crop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr0: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub decay_every: usize,
    pub decay_factor: f64,
    pub total_iters: usize,
    /// Sharpening temperature for the distillation target.
    pub temperature: f64,
    pub keep_quantile: f64,
    pub contrastive_mode: ContrastiveMode,
    pub ablation: Ablation,
    pub objective: Objective,
    /// Training crop extents.
    pub crop: [usize; 3],
    pub seed: u64,
    /// Rescales each network's gradient to at most this global L2 norm.
    /// `None` leaves gradients untouched.
    pub grad_clip: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr0: 0.01,
            momentum: 0.9,
            weight_decay: 1e-4,
            decay_every: 250,
            decay_factor: 10.0,
            total_iters: 600,
            temperature: 0.5,
            keep_quantile: 0.8,
            contrastive_mode: ContrastiveMode::default(),
            ablation: Ablation::default(),
            objective: Objective::Full,
            crop: [16; 3],
            seed: 0,
            grad_clip: Some(GRAD_CLIP),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, why: String| Err(Error::invalid(format!("train.{key}: {why}")));
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return bad("lr0", format!("must be positive, got {}", self.lr0));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum", format!("must lie in [0, 1), got {}", self.momentum));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay", format!("must be >= 0, got {}", self.weight_decay));
        }
        if self.total_iters == 0 {
            return bad("total_iters", "must be positive".into());
        }
        if self.decay_every == 0 {
            return bad("decay_every", "must be positive".into());
        }
        if !(self.decay_factor >= 1.0 && self.decay_factor.is_finite()) {
            return bad("decay_factor", format!("must be >= 1, got {}", self.decay_factor));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return bad("temperature", format!("must be positive, got {}", self.temperature));
        }
        if !(0.0..=1.0).contains(&self.keep_quantile) {
            return bad("keep_quantile", format!("must lie in [0, 1], got {}", self.keep_quantile));
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0 && c.is_finite()) {
                return bad("grad_clip", format!("must be positive, got {c}"));
            }
        }
        if self.crop.iter().any(|&c| c == 0 || c % 4 != 0) {
            return bad("crop", format!("extents must be positive multiples of 4, got {:?}", self.crop));
        }
        Ok(())
    }
}

/// `lr0 / decay_factor^floor(t / decay_every)`.
pub fn learning_rate_at(t: usize, cfg: &TrainConfig) -> f64 {
    cfg.lr0 / cfg.decay_factor.powi((t / cfg.decay_every) as i32)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_decay() {
        let cfg = TrainConfig {
            decay_every: 2500,
            total_iters: 6000,
            ..TrainConfig::default()
        };
        assert_eq!(learning_rate_at(0, &cfg), 0.01);
        assert_eq!(learning_rate_at(2499, &cfg), 0.01);
        assert!((learning_rate_at(2500, &cfg) - 0.001).abs() < 1e-18);
        assert!((learning_rate_at(5000, &cfg) - 0.0001).abs() < 1e-18);
    }

    #[test]
    fn defaults_validate_and_reject_bad_keys() {
        TrainConfig::default().validate().unwrap();
        let e = TrainConfig { momentum: 1.0, ..TrainConfig::default() }.validate().unwrap_err();
        assert!(e.to_string().contains("train.momentum"));
        assert!(serde_json::from_str::<TrainConfig>(r#"{"lr": 0.1}"#).is_err());
        let c: TrainConfig = serde_json::from_str(r#"{"ablation": {"use_une": false}}"#).unwrap();
        assert!(!c.ablation.use_une && c.ablation.use_reg);
    }
}
