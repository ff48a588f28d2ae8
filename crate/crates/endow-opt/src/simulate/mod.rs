//! Reproducible path generation on a shared time grid and Euler–Maruyama
//! integration of the wealth dynamics under feedback strategies.
//!
//! Only the Brownian increments are stored; the state processes (W, S¹, E,
//! H, Z) are recomputed on demand from their exact log-space solutions, so
//! they carry no discretization error and no memory footprint beyond the
//! increments themselves.
//!
//! Determinism contract: identical `(spec, grid)` produce bit-identical
//! ensembles and wealth paths regardless of how many worker threads are
//! active. Every path draws from its own counter-addressable substream
//! (ChaCha12 keyed by the master seed, stream = path index), and all
//! reductions downstream run in fixed path order.

mod strategy;
mod wealth;

pub use strategy::{PerturbMode, Strategy, StrategyError};
pub use wealth::{
    exact_optimal_path, exact_optimal_wealth_path, integrate_path, integrate_wealth,
    OptimalGridCoeffs, WealthPath,
};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::closedform::EvalError;
use crate::model::ProblemSpec;

/// Identity of the random number machinery, embedded in every report so a
/// run can be reproduced bit-for-bit.
pub const RNG_IDENTITY: &str =
    "ChaCha12(rand_chacha-0.9)/master=seed_from_u64/stream=path-index/normal=rand_distr-0.5:StandardNormal";

/// Upper bound on the stored increment buffer (bytes). Paths × steps beyond
/// this are rejected rather than silently thrashing the machine.
pub const MEMORY_BUDGET_BYTES: usize = 2 * 1024 * 1024 * 1024;

/// Simulation grid: uniform steps, ensemble size, reproducibility seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Number of uniform time steps (≥ 1).
    pub n_steps: usize,
    /// Number of Monte Carlo paths (≥ 1).
    pub n_paths: usize,
    /// Master seed; each path uses substream `seed × path index`.
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("n_steps must be >= 1")]
    ZeroSteps,
    #[error("n_paths must be >= 1")]
    ZeroPaths,
    #[error("increment buffer of {requested} bytes exceeds the memory budget of {budget} bytes")]
    MemoryBudget { requested: usize, budget: usize },
    #[error("coarsening factor {factor} does not divide n_steps {n_steps}")]
    BadCoarsenFactor { factor: usize, n_steps: usize },
    #[error("time {t} is not a grid point")]
    TimeNotOnGrid { t: f64 },
    #[error("closed-form evaluation failed: {0}")]
    Eval(#[from] EvalError),
    #[error("strategy evaluation failed on path {path} at step {step}: {source}")]
    Strategy {
        path: usize,
        step: usize,
        source: StrategyError,
    },
}

/// Per-grid-point deterministic factors of the exact state solutions, so a
/// path state needs only `exp` of (volatility × W) per process.
#[derive(Debug, Clone)]
struct StateCoeffs {
    /// e0 · exp{(μ − η²/2) t_k}
    endow: Vec<f64>,
    /// exp{−(r + θ²/2) t_k}
    deflator: Vec<f64>,
    /// exp{−(θ²/2) t_k}
    density: Vec<f64>,
    /// exp{(r + λ − σ²/2) t_k}
    risky: Vec<f64>,
}

impl StateCoeffs {
    fn build(spec: &ProblemSpec, times: &[f64]) -> Result<Self, SimError> {
        let theta = spec.theta();
        let endow_rate = spec.mu() - 0.5 * spec.eta() * spec.eta();
        let deflator_rate = -(spec.r() + 0.5 * theta * theta);
        let density_rate = -0.5 * theta * theta;
        let risky_rate = spec.r() + spec.lambda_excess() - 0.5 * spec.sigma() * spec.sigma();

        let mut coeffs = StateCoeffs {
            endow: Vec::with_capacity(times.len()),
            deflator: Vec::with_capacity(times.len()),
            density: Vec::with_capacity(times.len()),
            risky: Vec::with_capacity(times.len()),
        };
        for &t in times {
            coeffs.endow.push(spec.e0() * guarded_exp(endow_rate * t)?);
            coeffs.deflator.push(guarded_exp(deflator_rate * t)?);
            coeffs.density.push(guarded_exp(density_rate * t)?);
            coeffs.risky.push(guarded_exp(risky_rate * t)?);
        }
        Ok(coeffs)
    }
}

fn guarded_exp(exponent: f64) -> Result<f64, SimError> {
    if !exponent.is_finite() || exponent.abs() > crate::closedform::EXP_ARG_LIMIT {
        return Err(SimError::Eval(EvalError::Overflow { exponent }));
    }
    Ok(exponent.exp())
}

/// Exact per-path samples of the driving state at the grid points.
#[derive(Debug, Clone)]
pub struct PathState {
    /// Brownian levels W_{t_k} (W_0 = 0).
    pub w: Vec<f64>,
    /// Income rate E_{t_k} = e0·exp{(μ − η²/2)t_k + ηW_{t_k}}.
    pub e: Vec<f64>,
    /// State-price deflator H_{t_k} = exp{−(r + θ²/2)t_k − θW_{t_k}}.
    pub h: Vec<f64>,
}

impl PathState {
    /// Cumulative trapezoid of the deflated income rate E·H along the grid;
    /// entry k approximates ∫₀^{t_k} E_s H_s ds.
    pub fn deflated_income_integral(&self, dt: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.e.len());
        let mut acc = 0.0;
        out.push(0.0);
        for k in 1..self.e.len() {
            acc += 0.5 * dt * (self.e[k - 1] * self.h[k - 1] + self.e[k] * self.h[k]);
            out.push(acc);
        }
        out
    }
}

/// [`PathState`] plus the martingale density and the risky-asset level,
/// needed only by diagnostics.
#[derive(Debug, Clone)]
pub struct PathStateFull {
    pub w: Vec<f64>,
    pub e: Vec<f64>,
    pub h: Vec<f64>,
    /// Martingale density Z_{t_k} = exp{−(θ²/2)t_k − θW_{t_k}}.
    pub z: Vec<f64>,
    /// Risky asset S¹_{t_k} = exp{(r + λ − σ²/2)t_k + σW_{t_k}}.
    pub s1: Vec<f64>,
}

/// Brownian grid shared by all state processes and wealth integrations.
///
/// Immutable once built. State accessors recompute the exact solutions from
/// the stored increments, so two ensembles with equal `(spec, grid)` agree
/// bit-for-bit in every derived quantity.
#[derive(Debug, Clone)]
pub struct PathEnsemble {
    spec: ProblemSpec,
    grid: GridConfig,
    dt: f64,
    times: Vec<f64>,
    /// Row-major increments, path i at `[i·n_steps, (i+1)·n_steps)`.
    increments: Vec<f64>,
    coeffs: StateCoeffs,
}

/// Draws the Brownian increments for every path and prepares the exact
/// state-solution coefficients.
///
/// Increments are i.i.d. N(0, dt) from per-path deterministic substreams;
/// generation is parallel over paths and bit-stable for any worker count.
pub fn generate_paths(spec: &ProblemSpec, grid: &GridConfig) -> Result<PathEnsemble, SimError> {
    if grid.n_steps == 0 {
        return Err(SimError::ZeroSteps);
    }
    if grid.n_paths == 0 {
        return Err(SimError::ZeroPaths);
    }
    let requested = grid
        .n_paths
        .checked_mul(grid.n_steps)
        .and_then(|cells| cells.checked_mul(std::mem::size_of::<f64>()))
        .ok_or(SimError::MemoryBudget {
            requested: usize::MAX,
            budget: MEMORY_BUDGET_BYTES,
        })?;
    if requested > MEMORY_BUDGET_BYTES {
        return Err(SimError::MemoryBudget {
            requested,
            budget: MEMORY_BUDGET_BYTES,
        });
    }

    let horizon = spec.horizon();
    let dt = horizon / grid.n_steps as f64;
    let times = build_times(horizon, dt, grid.n_steps);
    let coeffs = StateCoeffs::build(spec, &times)?;

    let mut increments = vec![0.0f64; grid.n_paths * grid.n_steps];
    let sqrt_dt = dt.sqrt();
    let seed = grid.seed;
    increments
        .par_chunks_mut(grid.n_steps)
        .enumerate()
        .for_each(|(path, chunk)| {
            let mut rng = path_rng(seed, path as u64);
            for dw in chunk.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *dw = z * sqrt_dt;
            }
        });

    Ok(PathEnsemble {
        spec: *spec,
        grid: *grid,
        dt,
        times,
        increments,
        coeffs,
    })
}

/// Substream RNG for one path: master key from `seed`, stream = path index.
fn path_rng(seed: u64, path: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(path);
    rng
}

fn build_times(horizon: f64, dt: f64, n_steps: usize) -> Vec<f64> {
    let mut times: Vec<f64> = (0..n_steps).map(|k| k as f64 * dt).collect();
    // The last grid point is the horizon itself, not n*dt, so closed forms
    // evaluated there sit exactly on the domain boundary.
    times.push(horizon);
    times
}

impl PathEnsemble {
    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    pub fn grid(&self) -> &GridConfig {
        &self.grid
    }

    pub fn n_paths(&self) -> usize {
        self.grid.n_paths
    }

    pub fn n_steps(&self) -> usize {
        self.grid.n_steps
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn path_increments(&self, path: usize) -> &[f64] {
        let start = path * self.grid.n_steps;
        &self.increments[start..start + self.grid.n_steps]
    }

    /// Exact state samples (W, E, H) for one path.
    pub fn path_state(&self, path: usize) -> PathState {
        let n = self.grid.n_steps;
        let dw = self.path_increments(path);
        let eta = self.spec.eta();
        let theta = self.spec.theta();

        let mut w = Vec::with_capacity(n + 1);
        let mut e = Vec::with_capacity(n + 1);
        let mut h = Vec::with_capacity(n + 1);

        let mut level = 0.0f64;
        for k in 0..=n {
            if k > 0 {
                level += dw[k - 1];
            }
            w.push(level);
            e.push(self.coeffs.endow[k] * (eta * level).exp());
            h.push(self.coeffs.deflator[k] * (-theta * level).exp());
        }
        PathState { w, e, h }
    }

    /// Exact state samples including the martingale density and risky asset.
    pub fn path_state_full(&self, path: usize) -> PathStateFull {
        let core = self.path_state(path);
        let theta = self.spec.theta();
        let sigma = self.spec.sigma();
        let z = core
            .w
            .iter()
            .zip(&self.coeffs.density)
            .map(|(&w, &c)| c * (-theta * w).exp())
            .collect();
        let s1 = core
            .w
            .iter()
            .zip(&self.coeffs.risky)
            .map(|(&w, &c)| c * (sigma * w).exp())
            .collect();
        PathStateFull {
            w: core.w,
            e: core.e,
            h: core.h,
            z,
            s1,
        }
    }

    /// Aggregates consecutive increments into a coarser grid over the same
    /// Brownian paths (common refinement). `factor` must divide `n_steps`.
    pub fn coarsen(&self, factor: usize) -> Result<PathEnsemble, SimError> {
        if factor == 0 || !self.grid.n_steps.is_multiple_of(factor) {
            return Err(SimError::BadCoarsenFactor {
                factor,
                n_steps: self.grid.n_steps,
            });
        }
        if factor == 1 {
            return Ok(self.clone());
        }
        let coarse_steps = self.grid.n_steps / factor;
        let mut increments = vec![0.0f64; self.grid.n_paths * coarse_steps];
        increments
            .par_chunks_mut(coarse_steps)
            .enumerate()
            .for_each(|(path, chunk)| {
                let fine = self.path_increments(path);
                for (j, slot) in chunk.iter_mut().enumerate() {
                    *slot = fine[j * factor..(j + 1) * factor].iter().sum();
                }
            });

        let dt = self.dt * factor as f64;
        let times = build_times(self.spec.horizon(), dt, coarse_steps);
        let coeffs = StateCoeffs::build(&self.spec, &times)?;
        Ok(PathEnsemble {
            spec: self.spec,
            grid: GridConfig {
                n_steps: coarse_steps,
                n_paths: self.grid.n_paths,
                seed: self.grid.seed,
            },
            dt,
            times,
            increments,
            coeffs,
        })
    }

    /// Applies `f` to every path in parallel and returns the results in path
    /// order. The ordered collect keeps downstream reductions bit-stable
    /// across worker counts.
    pub fn map_paths<R, F>(&self, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize, &PathState) -> R + Sync,
    {
        (0..self.grid.n_paths)
            .into_par_iter()
            .map(|path| {
                let state = self.path_state(path);
                f(path, &state)
            })
            .collect()
    }
}
