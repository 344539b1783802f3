//! Numerical certificates for the properties the convergence analysis uses.
//!
//! Each check evaluates an inequality `lhs <= rhs` on many instances and
//! returns a [`CheckReport`]. `worst_margin` is the smallest relative slack
//! `(rhs - lhs) / (|lhs| + |rhs|)` seen; it is negative exactly when some
//! instance had `lhs > rhs` before tolerance.

mod descent;
mod robustness;
mod smoothness;

use serde::{Deserialize, Serialize};

pub use descent::check_descent;
pub use robustness::{check_nnm_pairing, check_robustness, leverage, RobustnessOptions};
pub use smoothness::{
    check_gradient, check_l0l1, check_lemma2, heterogeneity_at, measure_heterogeneity, L0L1Options,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub instances: usize,
    pub violations: usize,
    pub worst_margin: f64,
    /// Whether violations make the check fail (diagnostic checks only report).
    pub asserted: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa_empirical: Option<f64>,
    pub parameters: serde_json::Value,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        !self.asserted || self.violations == 0
    }
}

/// Running tally of `lhs <= rhs (+ tol)` evaluations.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Tally {
    pub instances: usize,
    pub violations: usize,
    pub worst_margin: f64,
}

impl Default for Tally {
    fn default() -> Self {
        Tally {
            instances: 0,
            violations: 0,
            worst_margin: f64::INFINITY,
        }
    }
}

impl Tally {
    /// Records one instance; it is a violation when `lhs - rhs > tol`.
    pub fn record(&mut self, lhs: f64, rhs: f64, tol: f64) {
        self.instances += 1;
        let denom = lhs.abs() + rhs.abs();
        let margin = if denom > 0.0 {
            (rhs - lhs) / denom
        } else {
            0.0
        };
        if margin < self.worst_margin || margin.is_nan() {
            self.worst_margin = margin;
        }
        let excess = lhs - rhs;
        if excess.is_nan() || excess > tol {
            self.violations += 1;
        }
    }

    pub fn merge(&mut self, other: &Tally) {
        self.instances += other.instances;
        self.violations += other.violations;
        if other.worst_margin < self.worst_margin || other.worst_margin.is_nan() {
            self.worst_margin = other.worst_margin;
        }
    }

    pub fn report(self, name: &str, asserted: bool, parameters: serde_json::Value) -> CheckReport {
        CheckReport {
            name: name.to_string(),
            instances: self.instances,
            violations: self.violations,
            worst_margin: if self.instances == 0 {
                0.0
            } else {
                self.worst_margin
            },
            asserted,
            kappa_empirical: None,
            parameters,
        }
    }
}

/// Seed for trial `trial` of a check keyed by `seed`.
pub(crate) fn trial_seed(seed: u64, trial: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (trial as u64).wrapping_add(0x632B_E59B_D9B4_E019)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tally_counts_violations_with_tolerance() {
        let mut t = Tally::default();
        t.record(1.0, 2.0, 0.0);
        t.record(2.0, 2.0, 0.0);
        t.record(2.0 + 1e-12, 2.0, 1e-9);
        t.record(3.0, 2.0, 1e-9);
        assert_eq!(t.instances, 4);
        assert_eq!(t.violations, 1);
        assert!((t.worst_margin + 0.2).abs() < 1e-15);
    }

    #[test]
    fn nan_is_a_violation() {
        let mut t = Tally::default();
        t.record(f64::NAN, 1.0, 1.0);
        assert_eq!(t.violations, 1);
    }
}
