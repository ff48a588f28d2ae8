//! Wealth-path integration: Euler–Maruyama under a feedback strategy, and
//! the discretization-free optimal path evaluated from the closed form.

use rayon::prelude::*;

use crate::closedform::{self, EvalError, EvalResult};
use crate::model::ProblemSpec;

use super::{PathEnsemble, PathState, SimError, Strategy};

/// One simulated wealth trajectory on the grid.
///
/// If the integrator ever produces a non-positive (or non-finite) wealth,
/// the path is frozen: the offending index is recorded and every level from
/// there on is NaN. Frozen paths must be excluded from utility estimates;
/// clamping instead would silently bias them.
#[derive(Debug, Clone)]
pub struct WealthPath {
    /// Wealth at each grid point; NaN from the first violation onward.
    pub levels: Vec<f64>,
    /// Grid index of the first non-positive wealth, if any.
    pub first_violation_index: Option<usize>,
}

impl WealthPath {
    pub fn positivity_violated(&self) -> bool {
        self.first_violation_index.is_some()
    }

    /// Realized terminal wealth (NaN when the path was frozen).
    pub fn terminal(&self) -> f64 {
        *self.levels.last().expect("wealth path is never empty")
    }

    /// Terminal wealth of a clean path, `None` if frozen.
    pub fn valid_terminal(&self) -> Option<f64> {
        if self.positivity_violated() {
            None
        } else {
            Some(self.terminal())
        }
    }
}

/// Euler–Maruyama step for the wealth dynamics
/// dX = ((r + σθπ)X + E)dt + σπX dW with π = strategy(t, X, E).
///
/// The income rate enters at the left grid point, matching the increment
/// convention of the scheme.
pub fn integrate_path(
    spec: &ProblemSpec,
    ensemble: &PathEnsemble,
    state: &PathState,
    strategy: &Strategy,
    path: usize,
) -> Result<WealthPath, SimError> {
    let n = ensemble.n_steps();
    let dt = ensemble.dt();
    let times = ensemble.times();
    let dw = ensemble.path_increments(path);
    let r = spec.r();
    let sigma = spec.sigma();
    let theta = spec.theta();

    let mut levels = Vec::with_capacity(n + 1);
    let mut x = spec.x0();
    levels.push(x);

    for k in 0..n {
        let pi = strategy
            .fraction(spec, times[k], x, state.e[k])
            .map_err(|source| SimError::Strategy {
                path,
                step: k,
                source,
            })?;
        let drift = ((r + sigma * theta * pi) * x + state.e[k]) * dt;
        let diffusion = sigma * pi * x * dw[k];
        x += drift + diffusion;
        if !(x.is_finite() && x > 0.0) {
            levels.resize(n + 1, f64::NAN);
            return Ok(WealthPath {
                levels,
                first_violation_index: Some(k + 1),
            });
        }
        levels.push(x);
    }

    Ok(WealthPath {
        levels,
        first_violation_index: None,
    })
}

/// Integrates every path of the ensemble under one strategy. Materializes
/// all trajectories; intended for modest ensembles (dumps, small studies).
/// The statistical checks stream per-path results instead.
pub fn integrate_wealth(
    spec: &ProblemSpec,
    ensemble: &PathEnsemble,
    strategy: &Strategy,
) -> Result<Vec<WealthPath>, SimError> {
    let results: Vec<Result<WealthPath, SimError>> = (0..ensemble.n_paths())
        .into_par_iter()
        .map(|path| {
            let state = ensemble.path_state(path);
            integrate_path(spec, ensemble, &state, strategy, path)
        })
        .collect();
    results.into_iter().collect()
}

/// α(t_k) and β(t_k) tabulated on a grid, so per-path closed-form wealth
/// evaluation costs one `powf` per point.
#[derive(Debug, Clone)]
pub struct OptimalGridCoeffs {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    inv_gamma: f64,
}

impl OptimalGridCoeffs {
    pub fn new(spec: &ProblemSpec, times: &[f64]) -> EvalResult<Self> {
        let mut alpha = Vec::with_capacity(times.len());
        let mut beta = Vec::with_capacity(times.len());
        for &t in times {
            alpha.push(closedform::alpha(spec, t)?);
            beta.push(closedform::beta(spec, t)?);
        }
        Ok(OptimalGridCoeffs {
            alpha,
            beta,
            inv_gamma: 1.0 / spec.gamma(),
        })
    }
}

/// Optimal wealth X*_{t_k} = α(t_k)·H_k^{−1/γ} − β(t_k)·E_k evaluated
/// pointwise from the closed form: the discretization-free benchmark.
///
/// A non-positive value is flagged but the computed levels are kept; the
/// closed form stays informative either side of a violation.
pub fn exact_optimal_path(
    state: &PathState,
    coeffs: &OptimalGridCoeffs,
) -> WealthPath {
    let n = state.h.len();
    let mut levels = Vec::with_capacity(n);
    let mut first_violation_index = None;
    for k in 0..n {
        let x = coeffs.alpha[k] * state.h[k].powf(-coeffs.inv_gamma) - coeffs.beta[k] * state.e[k];
        if first_violation_index.is_none() && !(x.is_finite() && x > 0.0) {
            first_violation_index = Some(k);
        }
        levels.push(x);
    }
    WealthPath {
        levels,
        first_violation_index,
    }
}

/// Closed-form optimal wealth for every path of the ensemble.
pub fn exact_optimal_wealth_path(
    spec: &ProblemSpec,
    ensemble: &PathEnsemble,
) -> Result<Vec<WealthPath>, EvalError> {
    let coeffs = OptimalGridCoeffs::new(spec, ensemble.times())?;
    Ok((0..ensemble.n_paths())
        .into_par_iter()
        .map(|path| {
            let state = ensemble.path_state(path);
            exact_optimal_path(&state, &coeffs)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate, AgentParams, EndowmentParams, MarketParams};
    use crate::simulate::{generate_paths, GridConfig};

    fn spec_with(r: f64, lambda_excess: f64, e0: f64) -> ProblemSpec {
        validate(
            MarketParams {
                r,
                lambda_excess,
                sigma: 0.2,
            },
            EndowmentParams {
                mu: 0.03,
                eta: 0.1,
                e0,
            },
            AgentParams {
                gamma: 3.0,
                x0: 1.0,
                horizon: 10.0,
            },
        )
        .unwrap()
    }

    #[test]
    fn zero_strategy_without_rates_is_income_quadrature() {
        // pi = 0, r = 0: X_T = x0 + sum E_{t_k} dt, deterministic given the path.
        let spec = spec_with(0.0, 0.0, 1e-9);
        let grid = GridConfig {
            n_steps: 64,
            n_paths: 3,
            seed: 123,
        };
        let ens = generate_paths(&spec, &grid).unwrap();
        let strategy = Strategy::Constant { fraction: 0.0 };
        for path in 0..3 {
            let state = ens.path_state(path);
            let wealth = integrate_path(&spec, &ens, &state, &strategy, path).unwrap();
            let riemann: f64 = state.e[..64].iter().sum::<f64>() * ens.dt();
            assert!((wealth.terminal() - (1.0 + riemann)).abs() < 1e-12);
            assert!(!wealth.positivity_violated());
        }
    }

    #[test]
    fn euler_terminal_approaches_closed_form_as_steps_grow() {
        let spec = spec_with(0.02, 0.04, 0.5);
        let fine = generate_paths(
            &spec,
            &GridConfig {
                n_steps: 256,
                n_paths: 64,
                seed: 2024,
            },
        )
        .unwrap();
        let coarse = fine.coarsen(8).unwrap(); // 32 steps
        let strategy = Strategy::Optimal;

        let mut errs = [0.0f64; 2];
        for (slot, ens) in [&coarse, &fine].into_iter().enumerate() {
            let coeffs = OptimalGridCoeffs::new(&spec, ens.times()).unwrap();
            let mut sum_sq = 0.0;
            for path in 0..ens.n_paths() {
                let state = ens.path_state(path);
                let euler = integrate_path(&spec, ens, &state, &strategy, path).unwrap();
                let target = exact_optimal_path(&state, &coeffs);
                let rel =
                    (euler.terminal() - target.terminal()) / target.terminal();
                sum_sq += rel * rel;
            }
            errs[slot] = (sum_sq / ens.n_paths() as f64).sqrt();
        }
        assert!(
            errs[1] < errs[0],
            "finer grid must replicate better: {errs:?}"
        );
    }

    #[test]
    fn exact_path_hits_initial_and_terminal_conditions() {
        let spec = spec_with(0.02, 0.04, 0.5);
        let ens = generate_paths(
            &spec,
            &GridConfig {
                n_steps: 16,
                n_paths: 8,
                seed: 77,
            },
        )
        .unwrap();
        let paths = exact_optimal_wealth_path(&spec, &ens).unwrap();
        for (path, wealth) in paths.iter().enumerate() {
            assert!((wealth.levels[0] - spec.x0()).abs() < 1e-12 * spec.x0());
            let state = ens.path_state(path);
            let xi = closedform::optimal_terminal_wealth(&spec, state.h[16]).unwrap();
            assert!((wealth.terminal() - xi).abs() < 1e-12 * xi);
            assert!(!wealth.positivity_violated());
        }
    }

    #[test]
    fn untenable_leverage_freezes_path_with_nan_tail() {
        // A huge constant fraction forces wealth through zero quickly.
        let spec = spec_with(0.02, 0.04, 0.5);
        let ens = generate_paths(
            &spec,
            &GridConfig {
                n_steps: 128,
                n_paths: 64,
                seed: 4,
            },
        )
        .unwrap();
        let strategy = Strategy::Constant { fraction: 40.0 };
        let mut violations = 0;
        for path in 0..64 {
            let state = ens.path_state(path);
            let wealth = integrate_path(&spec, &ens, &state, &strategy, path).unwrap();
            if let Some(idx) = wealth.first_violation_index {
                violations += 1;
                assert!(wealth.levels[idx].is_nan());
                assert!(wealth.terminal().is_nan());
                for level in &wealth.levels[..idx] {
                    assert!(*level > 0.0);
                }
            }
        }
        assert!(violations > 0, "expected at least one frozen path");
    }

    #[test]
    fn strategy_failure_carries_path_index() {
        let spec = spec_with(0.02, 0.04, 0.5);
        let ens = generate_paths(
            &spec,
            &GridConfig {
                n_steps: 4,
                n_paths: 2,
                seed: 1,
            },
        )
        .unwrap();
        // Table with a gap before its first knot cannot be evaluated at t=0;
        // build it unvalidated on purpose.
        let broken = Strategy::Table {
            times: vec![5.0],
            fractions: vec![0.5],
        };
        let state = ens.path_state(1);
        match integrate_path(&spec, &ens, &state, &broken, 1) {
            Err(SimError::Strategy { path, step, .. }) => {
                assert_eq!(path, 1);
                assert_eq!(step, 0);
            }
            other => panic!("expected strategy error, got {other:?}"),
        }
    }
}
