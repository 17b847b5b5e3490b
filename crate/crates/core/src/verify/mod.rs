//! Self-checks shipped with the library: finite-difference gradient checks
//! of every objective term and brute-force equivalence oracles for the
//! mask filter, the surface metrics, and sliding-window averaging.

mod gradients;
pub mod oracles;

pub use gradients::{gradient_suite, GRADIENT_STEP, GRADIENT_TOLERANCE};
pub use oracles::oracle_suite;

use std::fmt;

/// Outcome of one named check.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: String,
    /// Largest observed error (or mismatch count for exact oracles).
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl CheckResult {
    pub fn within(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            passed: value.is_finite() && value < tolerance,
        }
    }

    /// Passes only when `mismatches` is zero.
    pub fn exact(name: impl Into<String>, mismatches: usize) -> Self {
        Self {
            name: name.into(),
            value: mismatches as f64,
            tolerance: 0.0,
            passed: mismatches == 0,
        }
    }

    pub fn failed(name: impl Into<String>, why: &str) -> Self {
        Self {
            name: format!("{} ({why})", name.into()),
            value: f64::NAN,
            tolerance: 0.0,
            passed: false,
        }
    }
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        if self.tolerance == 0.0 {
            write!(f, "{tag}  {:<48} mismatches {}", self.name, self.value)
        } else {
            write!(f, "{tag}  {:<48} {:.3e} (< {:.0e})", self.name, self.value, self.tolerance)
        }
    }
}

pub fn all_passed(results: &[CheckResult]) -> bool {
    results.iter().all(|r| r.passed)
}
