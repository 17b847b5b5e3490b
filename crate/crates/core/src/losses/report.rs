use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Scalar values of the seven objective terms for one iteration.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub sup_student: f64,
    pub sup_teacher: f64,
    pub unsup_student: f64,
    pub unsup_teacher: f64,
    pub consistency: f64,
    pub uncertainty: f64,
    pub contrastive: f64,
}

impl LossTerms {
    /// `sup_s + sup_t + λ·(contrastive + consistency + uncertainty) + unsup_s + unsup_t`.
    pub fn compose(&self, lambda_c: f64) -> f64 {
        self.sup_student
            + self.sup_teacher
            + lambda_c * (self.contrastive + self.consistency + self.uncertainty)
            + self.unsup_student
            + self.unsup_teacher
    }

    fn named(&self) -> [(&'static str, f64); 7] {
        [
            ("sup_student", self.sup_student),
            ("sup_teacher", self.sup_teacher),
            ("unsup_student", self.unsup_student),
            ("unsup_teacher", self.unsup_teacher),
            ("consistency", self.consistency),
            ("uncertainty", self.uncertainty),
            ("contrastive", self.contrastive),
        ]
    }
}

/// Per-iteration breakdown of the objective.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub terms: LossTerms,
    pub lambda_c: f64,
    pub total: f64,
    /// Fraction of non-ignored voxels in the student and teacher masks.
    pub valid_fractions: [f64; 2],
    pub contrastive_skipped: bool,
    /// Student and teacher gradient norms before clipping.
    pub grad_norms: [f64; 2],
}

/// Composes the terms into the total objective, rejecting non-finite parts.
pub fn total_loss(terms: LossTerms, lambda_c: f64) -> Result<LossReport> {
    for (name, v) in terms.named() {
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("loss term {name} = {v}")));
        }
    }
    if !lambda_c.is_finite() {
        return Err(Error::NonFinite(format!("lambda_c = {lambda_c}")));
    }
    Ok(LossReport {
        terms,
        lambda_c,
        total: terms.compose(lambda_c),
        ..LossReport::default()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn composition() {
        assert_eq!(total_loss(LossTerms::default(), 1.0).unwrap().total, 0.0);
        let ones = LossTerms {
            sup_student: 1.0,
            sup_teacher: 1.0,
            unsup_student: 1.0,
            unsup_teacher: 1.0,
            consistency: 1.0,
            uncertainty: 1.0,
            contrastive: 1.0,
        };
        assert!((total_loss(ones, 0.1).unwrap().total - 4.3).abs() < 1e-12);
    }

    #[test]
    fn ablated_terms_drop_out() {
        // Neither uncertainty nor consistency: the fourth ablation row.
        let t = LossTerms {
            sup_student: 0.7,
            sup_teacher: 0.6,
            unsup_student: 0.2,
            unsup_teacher: 0.3,
            contrastive: 0.5,
            ..LossTerms::default()
        };
        let r = total_loss(t, 2.0).unwrap();
        assert!((r.total - (0.7 + 0.6 + 0.2 + 0.3 + 2.0 * 0.5)).abs() < 1e-12);
    }

    #[test]
    fn non_finite_term_named() {
        let t = LossTerms {
            uncertainty: f64::NAN,
            ..LossTerms::default()
        };
        match total_loss(t, 1.0) {
            Err(Error::NonFinite(msg)) => assert!(msg.contains("uncertainty")),
            other => panic!("{other:?}"),
        }
    }
}
