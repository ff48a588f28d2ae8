//! Optimal investment with a perfectly correlated random income stream in a
//! Black–Scholes market, for power-utility preferences.
//!
//! The optimal risky fraction has the closed form
//!
//! ```text
//! pi*(t) = pi_M + beta(t) * (pi_M - eta/sigma) * E_t / X_t
//! ```
//!
//! where `pi_M = theta/(gamma*sigma)` is the classic constant fraction
//! without income, and `beta(t) = (exp{kappa*(T-t)} - 1)/kappa` with
//! `kappa = mu - r - eta*theta` weights the remaining income horizon.
//!
//! The crate provides:
//!
//! - [`model`]: validated parameter containers and derived quantities;
//! - [`closedform`]: every analytic formula (income-stream price, dual
//!   objects, optimal terminal wealth, the optimal wealth process, the
//!   feedback rule);
//! - [`simulate`]: reproducible path generation with exact state sampling
//!   and an Euler–Maruyama wealth integrator for arbitrary feedback rules;
//! - [`verify`]: a certification battery (budget constraint, duality gap,
//!   first-order condition, replication convergence, martingale
//!   representation, dominance over a challenger family);
//! - [`cli`]: the `endow-opt` command line (price / strategy / simulate /
//!   verify / sweep) with JSON configs and JSON/CSV outputs.

pub mod cli;
pub mod closedform;
pub mod model;
pub mod simulate;
pub mod verify;
