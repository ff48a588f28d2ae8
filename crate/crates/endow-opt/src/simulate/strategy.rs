//! Feedback trading strategies: risky fraction as a function of
//! (time, wealth, income rate).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::closedform::{self, EvalError};
use crate::model::ProblemSpec;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StrategyError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("table strategy has no knot at or before t = {t}")]
    TableLookup { t: f64 },
    #[error("invalid table strategy: {reason}")]
    InvalidTable { reason: &'static str },
}

/// How a perturbed strategy deviates from its base.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbMode {
    /// π = base + ε.
    Additive,
    /// π = π_M + (1 + ε)·(base − π_M): scales the deviation from the Merton
    /// fraction, i.e. the β-shift term when the base is the optimal rule.
    ScaleShift,
}

/// A feedback rule (t, wealth, endow) → risky fraction. Deterministic in
/// its inputs and defined for all wealth > 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Strategy {
    /// Fixed fraction regardless of state.
    Constant { fraction: f64 },
    /// π_M = θ/(γσ), the no-endowment optimum.
    Merton,
    /// π* = π_M + β(t)(π_M − η/σ)·E/X.
    Optimal,
    /// Perturbation of another rule; see [`PerturbMode`].
    Perturbed {
        base: Box<Strategy>,
        epsilon: f64,
        mode: PerturbMode,
    },
    /// Externally tabulated fractions, piecewise constant from the left:
    /// the fraction at `t` is the entry of the latest knot with time ≤ t.
    /// Knot times must start at 0 and increase strictly.
    Table { times: Vec<f64>, fractions: Vec<f64> },
}

impl Strategy {
    /// Fixed built-in challenger family used by the dominance suite.
    pub fn challenger_family(spec: &ProblemSpec) -> Vec<Strategy> {
        let pi_m = closedform::merton_fraction(spec);
        vec![
            Strategy::Merton,
            Strategy::Constant { fraction: 0.0 },
            Strategy::Constant {
                fraction: pi_m + 0.25,
            },
            Strategy::Constant {
                fraction: pi_m - 0.25,
            },
            Strategy::Perturbed {
                base: Box::new(Strategy::Optimal),
                epsilon: 0.2,
                mode: PerturbMode::ScaleShift,
            },
            Strategy::Perturbed {
                base: Box::new(Strategy::Optimal),
                epsilon: -0.2,
                mode: PerturbMode::ScaleShift,
            },
        ]
    }

    /// Structural validity checks beyond serde (table shape).
    pub fn validate(&self) -> Result<(), StrategyError> {
        match self {
            Strategy::Table { times, fractions } => {
                if times.is_empty() {
                    return Err(StrategyError::InvalidTable {
                        reason: "table must have at least one knot",
                    });
                }
                if times.len() != fractions.len() {
                    return Err(StrategyError::InvalidTable {
                        reason: "times and fractions must have equal length",
                    });
                }
                if times[0] != 0.0 {
                    return Err(StrategyError::InvalidTable {
                        reason: "first knot must be at t = 0",
                    });
                }
                if times.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(StrategyError::InvalidTable {
                        reason: "knot times must be strictly increasing",
                    });
                }
                if times.iter().chain(fractions.iter()).any(|v| !v.is_finite()) {
                    return Err(StrategyError::InvalidTable {
                        reason: "knots must be finite",
                    });
                }
                Ok(())
            }
            Strategy::Perturbed { base, .. } => base.validate(),
            _ => Ok(()),
        }
    }

    /// Evaluates the risky fraction at (t, wealth, endow). Requires
    /// wealth > 0 wherever the rule actually depends on wealth.
    pub fn fraction(
        &self,
        spec: &ProblemSpec,
        t: f64,
        wealth: f64,
        endow: f64,
    ) -> Result<f64, StrategyError> {
        match self {
            Strategy::Constant { fraction } => Ok(*fraction),
            Strategy::Merton => Ok(closedform::merton_fraction(spec)),
            Strategy::Optimal => Ok(closedform::optimal_fraction(spec, t, wealth, endow)?),
            Strategy::Perturbed {
                base,
                epsilon,
                mode,
            } => {
                let raw = base.fraction(spec, t, wealth, endow)?;
                match mode {
                    PerturbMode::Additive => Ok(raw + epsilon),
                    PerturbMode::ScaleShift => {
                        let pi_m = closedform::merton_fraction(spec);
                        Ok(pi_m + (1.0 + epsilon) * (raw - pi_m))
                    }
                }
            }
            Strategy::Table { times, fractions } => {
                let idx = times.partition_point(|&knot| knot <= t);
                if idx == 0 {
                    return Err(StrategyError::TableLookup { t });
                }
                Ok(fractions[idx - 1])
            }
        }
    }

    /// Short stable label used in report check names.
    pub fn label(&self) -> String {
        match self {
            Strategy::Constant { fraction } => format!("constant({fraction})"),
            Strategy::Merton => "merton".into(),
            Strategy::Optimal => "optimal".into(),
            Strategy::Perturbed {
                base,
                epsilon,
                mode,
            } => {
                let mode = match mode {
                    PerturbMode::Additive => "additive",
                    PerturbMode::ScaleShift => "scale_shift",
                };
                format!("perturbed({},eps={epsilon},{mode})", base.label())
            }
            Strategy::Table { times, .. } => format!("table({} knots)", times.len()),
        }
    }
}
