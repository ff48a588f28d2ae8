//! Parameter containers, validation, and derived market quantities.
//!
//! Conventions: all rates are annualized, volatilities are per √year, and
//! time is measured in years. `e0` is an income *rate* (currency per year);
//! it enters the wealth dynamics as `E_t dt`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Black–Scholes market: risk-free rate, excess return of the risky asset,
/// and risky-asset volatility.
///
/// The excess return is named `lambda_excess` (not `lambda`) to keep it
/// apart from the dual problem's Lagrange multiplier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketParams {
    /// Risk-free rate (per year).
    pub r: f64,
    /// Excess return of the risky asset over the risk-free rate (per year).
    pub lambda_excess: f64,
    /// Risky-asset volatility (per √year, > 0).
    pub sigma: f64,
}

/// Geometric-Brownian income stream, perfectly correlated with the risky asset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndowmentParams {
    /// Income drift (per year).
    pub mu: f64,
    /// Income volatility (per √year, > 0).
    pub eta: f64,
    /// Initial income rate (currency per year, > 0).
    pub e0: f64,
}

/// Investor preferences and initial conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentParams {
    /// Constant relative risk aversion, in (0,1) ∪ (1,∞).
    pub gamma: f64,
    /// Initial wealth (currency, > 0).
    pub x0: f64,
    /// Investment horizon (years, > 0).
    #[serde(rename = "horizon_T")]
    pub horizon: f64,
}

/// Validation failure for raw parameter inputs. Each variant carries a
/// distinct code naming the offending field; see [`ValidationError::code`].
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValidationError {
    #[error("{field} must be finite, got {value}")]
    NonFinite { field: &'static str, value: f64 },
    #[error("sigma must be > 0, got {0}")]
    SigmaNotPositive(f64),
    #[error("eta must be > 0, got {0}")]
    EtaNotPositive(f64),
    #[error("e0 must be > 0, got {0}")]
    E0NotPositive(f64),
    #[error("x0 must be > 0, got {0}")]
    X0NotPositive(f64),
    #[error("horizon_T must be > 0, got {0}")]
    HorizonNotPositive(f64),
    #[error("gamma must be > 0, got {0}")]
    GammaNotPositive(f64),
    #[error("gamma = 1 (log utility) is not supported; gamma must lie in (0,1) or (1,inf)")]
    GammaExcluded,
}

impl ValidationError {
    /// Stable machine-readable code, e.g. `"SigmaNotPositive"` or `"NonFinite(mu)"`.
    pub fn code(&self) -> String {
        match self {
            ValidationError::NonFinite { field, .. } => format!("NonFinite({field})"),
            ValidationError::SigmaNotPositive(_) => "SigmaNotPositive".into(),
            ValidationError::EtaNotPositive(_) => "EtaNotPositive".into(),
            ValidationError::E0NotPositive(_) => "E0NotPositive".into(),
            ValidationError::X0NotPositive(_) => "X0NotPositive".into(),
            ValidationError::HorizonNotPositive(_) => "HorizonNotPositive".into(),
            ValidationError::GammaNotPositive(_) => "GammaNotPositive".into(),
            ValidationError::GammaExcluded => "GammaExcluded".into(),
        }
    }
}

/// Fully validated problem instance with the derived market quantities
/// `theta` (market price of risk) and `kappa` (income drift gap) computed
/// once at construction so every consumer sees bit-identical values.
///
/// Immutable after construction; safe to share across threads.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProblemSpec {
    market: MarketParams,
    endowment: EndowmentParams,
    agent: AgentParams,
    theta: f64,
    kappa: f64,
}

impl ProblemSpec {
    pub fn market(&self) -> &MarketParams {
        &self.market
    }

    pub fn endowment(&self) -> &EndowmentParams {
        &self.endowment
    }

    pub fn agent(&self) -> &AgentParams {
        &self.agent
    }

    pub fn r(&self) -> f64 {
        self.market.r
    }

    pub fn lambda_excess(&self) -> f64 {
        self.market.lambda_excess
    }

    pub fn sigma(&self) -> f64 {
        self.market.sigma
    }

    pub fn mu(&self) -> f64 {
        self.endowment.mu
    }

    pub fn eta(&self) -> f64 {
        self.endowment.eta
    }

    pub fn e0(&self) -> f64 {
        self.endowment.e0
    }

    pub fn gamma(&self) -> f64 {
        self.agent.gamma
    }

    pub fn x0(&self) -> f64 {
        self.agent.x0
    }

    pub fn horizon(&self) -> f64 {
        self.agent.horizon
    }

    /// Market price of risk θ = lambda_excess / sigma.
    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Income drift gap κ = mu − r − eta·theta. This combination drives both
    /// the income-stream price and the horizon weight β.
    pub fn kappa(&self) -> f64 {
        self.kappa
    }
}

fn require_finite(field: &'static str, value: f64) -> Result<(), ValidationError> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(ValidationError::NonFinite { field, value })
    }
}

/// Market price of risk for a ready-validated market.
pub fn market_price_of_risk(market: &MarketParams) -> f64 {
    market.lambda_excess / market.sigma
}

/// Validates raw inputs and assembles a [`ProblemSpec`] with derived
/// quantities populated.
///
/// Total over finite inputs: every tuple either yields a spec satisfying all
/// invariants or a typed error; there are no panic paths.
pub fn validate(
    market: MarketParams,
    endowment: EndowmentParams,
    agent: AgentParams,
) -> Result<ProblemSpec, ValidationError> {
    require_finite("r", market.r)?;
    require_finite("lambda_excess", market.lambda_excess)?;
    require_finite("sigma", market.sigma)?;
    require_finite("mu", endowment.mu)?;
    require_finite("eta", endowment.eta)?;
    require_finite("e0", endowment.e0)?;
    require_finite("gamma", agent.gamma)?;
    require_finite("x0", agent.x0)?;
    require_finite("horizon_T", agent.horizon)?;

    if market.sigma <= 0.0 {
        return Err(ValidationError::SigmaNotPositive(market.sigma));
    }
    if endowment.eta <= 0.0 {
        return Err(ValidationError::EtaNotPositive(endowment.eta));
    }
    if endowment.e0 <= 0.0 {
        return Err(ValidationError::E0NotPositive(endowment.e0));
    }
    if agent.x0 <= 0.0 {
        return Err(ValidationError::X0NotPositive(agent.x0));
    }
    if agent.horizon <= 0.0 {
        return Err(ValidationError::HorizonNotPositive(agent.horizon));
    }
    if agent.gamma <= 0.0 {
        return Err(ValidationError::GammaNotPositive(agent.gamma));
    }
    if agent.gamma == 1.0 {
        return Err(ValidationError::GammaExcluded);
    }

    let theta = market_price_of_risk(&market);
    let kappa = endowment.mu - market.r - endowment.eta * theta;

    Ok(ProblemSpec {
        market,
        endowment,
        agent,
        theta,
        kappa,
    })
}
