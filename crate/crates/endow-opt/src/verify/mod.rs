//! Statistical and algebraic certification of the closed-form solution:
//! budget constraint, duality gap, first-order condition, replication
//! convergence, the martingale-representation identity, and dominance of
//! the optimal rule over a challenger family.
//!
//! Tolerance discipline: algebraic identities are checked at fixed relative
//! tolerances (1e−10…1e−12); every statistical check states its tolerance
//! as 3 standard errors and reports the effective path count. A statistical
//! check never passes silently when fewer than half the paths survive, or
//! when more than 1% of paths were excluded.

mod checks;

pub use checks::{
    bridge_check, budget_check, budget_profile, convergence_study, dominance_suite,
    dominance_test, duality_gap, duality_gap_mc, duality_mc_suite, foc_check,
    kstar_identity_check, replication_check, run_battery, two_route_check, weak_duality_check,
    ConvergenceReport, DualityMcChecks, KstarChecks, RungStats, VerifyOptions,
};

use serde::Serialize;

use crate::model::ProblemSpec;
use crate::simulate::GridConfig;

/// Relative tolerance for exact (non-statistical) residual checks.
pub const EXACT_TOLERANCE: f64 = 1e-10;

/// Statistical tolerances are k·SE with k = 3 throughout.
pub const SE_MULTIPLIER: f64 = 3.0;

/// Fraction of excluded paths above which a statistical check auto-fails.
pub const MAX_EXCLUDED_FRACTION: f64 = 0.01;

/// A Monte Carlo point estimate with its standard error and the pass
/// verdict against the stated criterion.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
    /// Paths that actually entered the estimate (violations excluded).
    pub n_effective: usize,
    pub pass: bool,
    /// Human-readable statement of the pass criterion.
    pub criterion: String,
}

/// An exact residual record for a closed-form identity.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExactCheck {
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl ExactCheck {
    pub fn new(residual: f64, tolerance: f64) -> Self {
        ExactCheck {
            residual,
            tolerance,
            pass: residual.is_finite() && residual.abs() <= tolerance,
        }
    }
}

/// One named entry of a verification report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    #[serde(flatten)]
    pub outcome: CheckOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CheckOutcome {
    Exact {
        #[serde(flatten)]
        check: ExactCheck,
    },
    Statistical {
        #[serde(flatten)]
        estimate: Estimate,
        excluded: usize,
        floored: usize,
    },
    Ladder {
        rungs: Vec<RungStats>,
        pass: bool,
    },
}

impl CheckOutcome {
    pub fn pass(&self) -> bool {
        match self {
            CheckOutcome::Exact { check } => check.pass,
            CheckOutcome::Statistical { estimate, .. } => estimate.pass,
            CheckOutcome::Ladder { pass, .. } => *pass,
        }
    }
}

/// Self-contained verification report: echoes the inputs (spec, grid,
/// RNG identity) so that re-running reproduces it bit-identically.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub spec: ProblemSpec,
    pub grid: GridConfig,
    pub rng: String,
    pub checks: Vec<CheckResult>,
    pub overall_pass: bool,
}

impl VerificationReport {
    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Mean and standard error over the non-NaN entries, in storage order.
/// Two-pass so the result is deterministic for a fixed ordering.
pub(crate) fn mean_se(values: &[f64]) -> (f64, f64, usize) {
    let mut n = 0usize;
    let mut sum = 0.0f64;
    for &v in values {
        if !v.is_nan() {
            n += 1;
            sum += v;
        }
    }
    if n == 0 {
        return (f64::NAN, f64::NAN, 0);
    }
    let mean = sum / n as f64;
    if n == 1 {
        return (mean, 0.0, 1);
    }
    let mut ssq = 0.0f64;
    for &v in values {
        if !v.is_nan() {
            let d = v - mean;
            ssq += d * d;
        }
    }
    let var = ssq / (n - 1) as f64;
    (mean, (var / n as f64).sqrt(), n)
}

/// Shared gating: enough surviving paths and few enough exclusions.
pub(crate) fn sample_healthy(n_effective: usize, n_paths: usize) -> bool {
    let excluded = n_paths - n_effective;
    n_effective * 2 >= n_paths
        && (excluded as f64) <= MAX_EXCLUDED_FRACTION * n_paths as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_se_skips_nan_and_matches_hand_values() {
        let values = [1.0, 2.0, f64::NAN, 3.0];
        let (mean, se, n) = mean_se(&values);
        assert_eq!(n, 3);
        assert!((mean - 2.0).abs() < 1e-15);
        assert!((se - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn mean_se_degenerate_cases() {
        let (_, _, n) = mean_se(&[f64::NAN]);
        assert_eq!(n, 0);
        let (mean, se, n) = mean_se(&[5.0]);
        assert_eq!((mean, se, n), (5.0, 0.0, 1));
    }

    #[test]
    fn sample_health_gates() {
        assert!(sample_healthy(100, 100));
        assert!(sample_healthy(99, 100));
        assert!(!sample_healthy(98, 100)); // >1% excluded
        assert!(!sample_healthy(40, 100)); // under half
    }

    #[test]
    fn exact_check_rejects_non_finite_residuals() {
        assert!(!ExactCheck::new(f64::NAN, 1e-10).pass);
        assert!(!ExactCheck::new(f64::INFINITY, 1e-10).pass);
        assert!(ExactCheck::new(-5e-11, 1e-10).pass);
    }
}
