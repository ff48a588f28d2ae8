//! JSON run configuration.
//!
//! Units: rates per year, volatilities per √year, times in years, `e0` an
//! income rate (currency per year). Unknown keys are rejected at every
//! level so typos fail loudly; a valid config round-trips losslessly
//! through `emit` / `parse`.

use serde::{Deserialize, Serialize};

use crate::model::{self, AgentParams, EndowmentParams, MarketParams, ProblemSpec};
use crate::simulate::{GridConfig, Strategy};

/// Top-level configuration for every subcommand. The market / endowment /
/// agent / grid blocks are always required; the remaining blocks feed
/// individual subcommands and default sensibly when absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub market: MarketParams,
    pub endowment: EndowmentParams,
    pub agent: AgentParams,
    pub grid: GridConfig,
    /// Strategy for `simulate` (default: optimal).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy: Option<Strategy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub price: Option<PriceConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub surface: Option<SurfaceConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verify: Option<VerifyConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

/// Time grid for the `price` table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriceConfig {
    /// Number of evenly spaced times in [0, T], endpoints included (≥ 2).
    pub n_points: usize,
}

impl Default for PriceConfig {
    fn default() -> Self {
        PriceConfig { n_points: 11 }
    }
}

/// Grids for the `strategy` surface table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceConfig {
    /// Number of evenly spaced times in [0, T], endpoints included (≥ 2).
    pub n_times: usize,
    /// Endowment-to-wealth ratios to tabulate.
    pub ratios: Vec<f64>,
}

impl Default for SurfaceConfig {
    fn default() -> Self {
        SurfaceConfig {
            n_times: 11,
            ratios: vec![0.0, 0.25, 0.5, 1.0, 2.0],
        }
    }
}

/// Options for the `simulate` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    /// Where to write the per-path CSV dump (`path,t,W,E,H,X`); omitted
    /// means no dump.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dump: Option<String>,
}

/// Options for the `verify` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    /// Replication step ladder; ascending, every entry dividing the last.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ladder: Option<Vec<usize>>,
}

/// Options for the `sweep` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Axes swept in cartesian product; each must be non-empty.
    pub axes: Vec<SweepAxis>,
    /// When set, adds a Monte Carlo Merton-welfare column per point using
    /// the main grid (slow; off by default).
    #[serde(default)]
    pub merton_welfare_mc: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    pub axis: AxisName,
    pub values: Vec<f64>,
}

/// Sweepable parameters. `Theta` adjusts `lambda_excess = theta·sigma`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisName {
    Gamma,
    Eta,
    Theta,
    E0,
    #[serde(rename = "T")]
    Horizon,
}

impl AxisName {
    pub fn label(&self) -> &'static str {
        match self {
            AxisName::Gamma => "gamma",
            AxisName::Eta => "eta",
            AxisName::Theta => "theta",
            AxisName::E0 => "e0",
            AxisName::Horizon => "T",
        }
    }
}

impl RunConfig {
    /// Validates the parameter blocks into a [`ProblemSpec`].
    pub fn to_spec(&self) -> Result<ProblemSpec, model::ValidationError> {
        model::validate(self.market, self.endowment, self.agent)
    }

    /// Applies one sweep-axis value, returning the modified raw blocks.
    pub fn with_axis(
        &self,
        axis: AxisName,
        value: f64,
    ) -> (MarketParams, EndowmentParams, AgentParams) {
        let mut market = self.market;
        let mut endowment = self.endowment;
        let mut agent = self.agent;
        match axis {
            AxisName::Gamma => agent.gamma = value,
            AxisName::Eta => endowment.eta = value,
            AxisName::Theta => market.lambda_excess = value * market.sigma,
            AxisName::E0 => endowment.e0 = value,
            AxisName::Horizon => agent.horizon = value,
        }
        (market, endowment, agent)
    }

    pub fn parse(json: &str) -> Result<RunConfig, serde_json::Error> {
        serde_json::from_str(json)
    }

    pub fn emit(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialization is infallible")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn default_config() -> RunConfig {
        RunConfig {
            market: MarketParams {
                r: 0.02,
                lambda_excess: 0.04,
                sigma: 0.2,
            },
            endowment: EndowmentParams {
                mu: 0.03,
                eta: 0.1,
                e0: 0.5,
            },
            agent: AgentParams {
                gamma: 3.0,
                x0: 1.0,
                horizon: 10.0,
            },
            grid: GridConfig {
                n_steps: 512,
                n_paths: 100_000,
                seed: 7,
            },
            strategy: None,
            price: None,
            surface: None,
            simulate: None,
            verify: None,
            sweep: None,
        }
    }

    #[test]
    fn round_trip_preserves_config() {
        let mut config = default_config();
        config.strategy = Some(crate::simulate::Strategy::Constant { fraction: 0.75 });
        config.sweep = Some(SweepConfig {
            axes: vec![SweepAxis {
                axis: AxisName::Eta,
                values: vec![0.05, 0.1, 0.15],
            }],
            merton_welfare_mc: false,
        });
        let emitted = config.emit();
        let parsed = RunConfig::parse(&emitted).unwrap();
        assert_eq!(parsed, config);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let json = r#"{
            "market": {"r": 0.0, "lambda_excess": 0.0, "sigma": 0.2, "typo": 1},
            "endowment": {"mu": 0.0, "eta": 0.1, "e0": 1.0},
            "agent": {"gamma": 2.0, "x0": 1.0, "horizon_T": 1.0},
            "grid": {"n_steps": 8, "n_paths": 8, "seed": 1}
        }"#;
        assert!(RunConfig::parse(json).is_err());
        let json = r#"{
            "market": {"r": 0.0, "lambda_excess": 0.0, "sigma": 0.2},
            "endowment": {"mu": 0.0, "eta": 0.1, "e0": 1.0},
            "agent": {"gamma": 2.0, "x0": 1.0, "horizon_T": 1.0},
            "grid": {"n_steps": 8, "n_paths": 8, "seed": 1},
            "unexpected": {}
        }"#;
        assert!(RunConfig::parse(json).is_err());
    }

    #[test]
    fn horizon_uses_capital_t_key() {
        let config = default_config();
        let emitted = config.emit();
        assert!(emitted.contains("\"horizon_T\": 10.0"));
    }

    #[test]
    fn theta_axis_rescales_excess_return() {
        let config = default_config();
        let (market, _, _) = config.with_axis(AxisName::Theta, 0.5);
        assert!((market.lambda_excess - 0.1).abs() < 1e-15);
    }

    proptest! {
        // Lossless round-trip over representative numeric configs.
        #[test]
        fn round_trip_random_configs(
            r in -0.05f64..0.1,
            sigma in 0.05f64..0.8,
            eta in 0.01f64..0.5,
            e0 in 0.01f64..10.0,
            gamma in 0.2f64..8.0,
            seed in any::<u64>(),
        ) {
            let mut config = default_config();
            config.market.r = r;
            config.market.sigma = sigma;
            config.endowment.eta = eta;
            config.endowment.e0 = e0;
            config.agent.gamma = gamma;
            config.grid.seed = seed;
            let parsed = RunConfig::parse(&config.emit()).unwrap();
            prop_assert_eq!(parsed, config);
        }
    }
}
