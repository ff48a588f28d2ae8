//! Implementations of the five subcommands. Each returns the rendered
//! output plus the exit disposition; file I/O stays in the dispatcher.

use std::fmt::Write as _;

use serde::Serialize;

use crate::closedform::{self, StrategyCoefficients};
use crate::model::ProblemSpec;
use crate::simulate::{
    self, generate_paths, integrate_path, GridConfig, PathEnsemble, Strategy, RNG_IDENTITY,
};
use crate::verify::{self, mean_se, VerifyOptions};

use super::config::{RunConfig, SweepConfig};
use super::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Json,
    Csv,
}

fn linspace(end: f64, n_points: usize) -> Vec<f64> {
    // Last point is exactly `end` so closed forms sit on the boundary.
    let m = n_points.max(2);
    (0..m)
        .map(|k| {
            if k == m - 1 {
                end
            } else {
                end * k as f64 / (m - 1) as f64
            }
        })
        .collect()
}

#[derive(Serialize)]
struct PriceRow {
    t: f64,
    p: f64,
}

#[derive(Serialize)]
struct PriceReport {
    spec: ProblemSpec,
    grid: GridConfig,
    rng: &'static str,
    rows: Vec<PriceRow>,
    p_terminal: f64,
}

/// `price`: the income-stream price P_t on a time grid, plus P_T.
pub fn cmd_price(config: &RunConfig, format: OutputFormat) -> Result<String, CliError> {
    let spec = config.to_spec()?;
    let n_points = config.price.clone().unwrap_or_default().n_points;
    if n_points < 2 {
        return Err(CliError::Validation(
            "price.n_points must be at least 2".into(),
        ));
    }
    let rows: Vec<PriceRow> = linspace(spec.horizon(), n_points)
        .into_iter()
        .map(|t| {
            Ok(PriceRow {
                t,
                p: closedform::endowment_price(&spec, t)?,
            })
        })
        .collect::<Result<_, CliError>>()?;
    let p_terminal = closedform::endowment_price(&spec, spec.horizon())?;

    match format {
        OutputFormat::Csv => {
            let mut out = String::from("t,P\n");
            for row in &rows {
                writeln!(out, "{},{}", row.t, row.p).unwrap();
            }
            Ok(out)
        }
        OutputFormat::Json => to_json(&PriceReport {
            spec,
            grid: config.grid,
            rng: RNG_IDENTITY,
            rows,
            p_terminal,
        }),
    }
}

#[derive(Serialize)]
struct SurfaceRow {
    t: f64,
    ratio: f64,
    beta: f64,
    pi_merton: f64,
    shift_scale: f64,
    pi_star: f64,
}

#[derive(Serialize)]
struct SurfaceReport {
    spec: ProblemSpec,
    grid: GridConfig,
    rng: &'static str,
    rows: Vec<SurfaceRow>,
}

/// `strategy`: the optimal-fraction surface over (t, endowment-to-wealth).
pub fn cmd_strategy(config: &RunConfig, format: OutputFormat) -> Result<String, CliError> {
    let spec = config.to_spec()?;
    let surface = config.surface.clone().unwrap_or_default();
    if surface.n_times < 2 {
        return Err(CliError::Validation(
            "surface.n_times must be at least 2".into(),
        ));
    }
    if surface.ratios.is_empty() {
        return Err(CliError::Validation(
            "surface.ratios must be non-empty".into(),
        ));
    }
    if surface.ratios.iter().any(|r| !r.is_finite() || *r < 0.0) {
        return Err(CliError::Validation(
            "surface.ratios must be finite and >= 0".into(),
        ));
    }

    let coeffs = StrategyCoefficients::new(&spec)?;
    let mut rows = Vec::with_capacity(surface.n_times * surface.ratios.len());
    for t in linspace(spec.horizon(), surface.n_times) {
        let beta = coeffs.beta(t)?;
        for &ratio in &surface.ratios {
            rows.push(SurfaceRow {
                t,
                ratio,
                beta,
                pi_merton: coeffs.pi_merton,
                shift_scale: coeffs.shift_scale,
                pi_star: coeffs.pi_merton + beta * coeffs.shift_scale * ratio,
            });
        }
    }

    match format {
        OutputFormat::Csv => {
            let mut out = String::from("t,ratio,beta,pi_merton,shift_scale,pi_star\n");
            for row in &rows {
                writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    row.t, row.ratio, row.beta, row.pi_merton, row.shift_scale, row.pi_star
                )
                .unwrap();
            }
            Ok(out)
        }
        OutputFormat::Json => to_json(&SurfaceReport {
            spec,
            grid: config.grid,
            rng: RNG_IDENTITY,
            rows,
        }),
    }
}

#[derive(Serialize)]
struct Moments {
    mean: f64,
    std: f64,
    min: f64,
    max: f64,
    n: usize,
}

#[derive(Serialize)]
struct SimulateSummary {
    spec: ProblemSpec,
    grid: GridConfig,
    rng: &'static str,
    strategy: Strategy,
    violations: usize,
    floored: usize,
    terminal_wealth: Moments,
    mean_utility: verify::Estimate,
    #[serde(skip_serializing_if = "Option::is_none")]
    replication_rel_rms: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    dump: Option<String>,
}

/// `simulate`: integrate the configured strategy over the ensemble, emit a
/// JSON summary and optionally a per-path CSV dump.
pub fn cmd_simulate(config: &RunConfig) -> Result<String, CliError> {
    let spec = config.to_spec()?;
    let strategy = config.strategy.clone().unwrap_or(Strategy::Optimal);
    strategy.validate().map_err(|e| CliError::Validation(e.to_string()))?;
    let ensemble = generate_paths(&spec, &config.grid)?;
    let is_optimal = matches!(strategy, Strategy::Optimal);
    let terminal_idx = ensemble.n_steps();

    struct Row {
        terminal: f64,
        utility: f64,
        floored: bool,
        rel_sq: f64,
    }

    let rows: Vec<Result<Row, simulate::SimError>> = ensemble.map_paths(|path, state| {
        let wealth = integrate_path(&spec, &ensemble, state, &strategy, path)?;
        let terminal = wealth.valid_terminal().unwrap_or(f64::NAN);
        let (utility, floored) = match wealth.valid_terminal() {
            Some(x) => {
                let clamped = x.max(f64::MIN_POSITIVE);
                match closedform::utility(&spec, clamped) {
                    Ok(u) => (u, clamped != x),
                    Err(_) => (f64::NAN, false),
                }
            }
            None => (f64::NAN, false),
        };
        let rel_sq = if is_optimal && !terminal.is_nan() {
            let target = closedform::optimal_terminal_wealth(&spec, state.h[terminal_idx])?;
            let rel = (terminal - target) / target;
            rel * rel
        } else {
            f64::NAN
        };
        Ok(Row {
            terminal,
            utility,
            floored,
            rel_sq,
        })
    });

    let mut terminals = Vec::with_capacity(rows.len());
    let mut utilities = Vec::with_capacity(rows.len());
    let mut rel_sqs = Vec::with_capacity(rows.len());
    let mut floored = 0usize;
    for row in rows {
        let row = row?;
        terminals.push(row.terminal);
        utilities.push(row.utility);
        rel_sqs.push(row.rel_sq);
        if row.floored {
            floored += 1;
        }
    }

    let (t_mean, t_se, t_n) = mean_se(&terminals);
    let t_std = t_se * (t_n as f64).sqrt();
    let (t_min, t_max) = terminals
        .iter()
        .filter(|v| !v.is_nan())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let violations = ensemble.n_paths() - t_n;

    let (u_mean, u_se, u_n) = mean_se(&utilities);
    let mean_utility = verify::Estimate {
        value: u_mean,
        std_error: u_se,
        n_effective: u_n,
        pass: true,
        criterion: "diagnostic only".into(),
    };

    let replication_rel_rms = if is_optimal {
        let (mean_sq, _, _) = mean_se(&rel_sqs);
        Some(mean_sq.sqrt())
    } else {
        None
    };

    let dump = match config.simulate.as_ref().and_then(|s| s.dump.clone()) {
        Some(path) => {
            write_dump(&spec, &ensemble, &strategy, &path)?;
            Some(path)
        }
        None => None,
    };

    to_json(&SimulateSummary {
        spec,
        grid: config.grid,
        rng: RNG_IDENTITY,
        strategy,
        violations,
        floored,
        terminal_wealth: Moments {
            mean: t_mean,
            std: t_std,
            min: t_min,
            max: t_max,
            n: t_n,
        },
        mean_utility,
        replication_rel_rms,
        dump,
    })
}

/// Per-path CSV dump: `path,t,W,E,H,X`, one row per path × grid point.
/// Written sequentially in path order so the bytes are reproducible.
fn write_dump(
    spec: &ProblemSpec,
    ensemble: &PathEnsemble,
    strategy: &Strategy,
    path: &str,
) -> Result<(), CliError> {
    use std::io::Write as _;
    let file = std::fs::File::create(path)
        .map_err(|e| CliError::Io(format!("cannot create dump file {path}: {e}")))?;
    let mut writer = std::io::BufWriter::new(file);
    let io_err = |e: std::io::Error| CliError::Io(format!("while writing {path}: {e}"));
    writeln!(writer, "path,t,W,E,H,X").map_err(io_err)?;
    let times = ensemble.times();
    for index in 0..ensemble.n_paths() {
        let state = ensemble.path_state(index);
        let wealth = integrate_path(spec, ensemble, &state, strategy, index)?;
        for (k, &t) in times.iter().enumerate() {
            writeln!(
                writer,
                "{index},{t},{},{},{},{}",
                state.w[k], state.e[k], state.h[k], wealth.levels[k]
            )
            .map_err(io_err)?;
        }
    }
    writer.flush().map_err(io_err)
}

/// `verify`: run the whole battery and render the report. The caller turns
/// `overall_pass = false` into exit code 2.
pub fn cmd_verify(
    config: &RunConfig,
    lambda_scale: f64,
) -> Result<(String, bool), CliError> {
    let spec = config.to_spec()?;
    let options = VerifyOptions {
        ladder: config
            .verify
            .clone()
            .unwrap_or_default()
            .ladder
            .unwrap_or_else(|| VerifyOptions::default().ladder),
        lambda_scale,
        replication_rms_bound: None,
    };
    let report = verify::run_battery(&spec, &config.grid, &options)?;
    Ok((to_json(&report)?, report.overall_pass))
}

#[derive(Serialize)]
struct SweepRow {
    gamma: f64,
    eta: f64,
    theta: f64,
    e0: f64,
    #[serde(rename = "T")]
    horizon: f64,
    pi_merton: f64,
    shift_scale: f64,
    beta0: f64,
    p_terminal: f64,
    primal_value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    merton_welfare_mc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    merton_welfare_se: Option<f64>,
}

#[derive(Serialize)]
struct SweepReport {
    grid: GridConfig,
    rng: &'static str,
    rows: Vec<SweepRow>,
}

/// `sweep`: closed-form summary columns over a cartesian product of axis
/// values — plot-ready long format.
pub fn cmd_sweep(config: &RunConfig, format: OutputFormat) -> Result<String, CliError> {
    let sweep: &SweepConfig = config
        .sweep
        .as_ref()
        .ok_or_else(|| CliError::Validation("sweep block missing from config".into()))?;
    if sweep.axes.is_empty() {
        return Err(CliError::Validation("sweep.axes must be non-empty".into()));
    }
    for axis in &sweep.axes {
        if axis.values.is_empty() {
            return Err(CliError::Validation(format!(
                "sweep axis {} has no values",
                axis.axis.label()
            )));
        }
    }

    // Cartesian product in row-major order of the declared axes.
    let mut combos: Vec<Vec<f64>> = vec![vec![]];
    for axis in &sweep.axes {
        let mut next = Vec::with_capacity(combos.len() * axis.values.len());
        for combo in &combos {
            for &v in &axis.values {
                let mut extended = combo.clone();
                extended.push(v);
                next.push(extended);
            }
        }
        combos = next;
    }

    let mut rows = Vec::with_capacity(combos.len());
    for combo in combos {
        let mut market = config.market;
        let mut endowment = config.endowment;
        let mut agent = config.agent;
        for (axis, &value) in sweep.axes.iter().zip(&combo) {
            let cfg = RunConfig {
                market,
                endowment,
                agent,
                ..config.clone()
            };
            (market, endowment, agent) = cfg.with_axis(axis.axis, value);
        }
        let spec = crate::model::validate(market, endowment, agent)?;
        let coeffs = StrategyCoefficients::new(&spec)?;
        let beta0 = coeffs.beta(0.0)?;
        let p_terminal = closedform::endowment_price(&spec, spec.horizon())?;
        let primal = closedform::primal_value(&spec)?;

        let (welfare, welfare_se) = if sweep.merton_welfare_mc {
            let (value, se) = merton_welfare(&spec, &config.grid)?;
            (Some(value), Some(se))
        } else {
            (None, None)
        };

        rows.push(SweepRow {
            gamma: spec.gamma(),
            eta: spec.eta(),
            theta: spec.theta(),
            e0: spec.e0(),
            horizon: spec.horizon(),
            pi_merton: coeffs.pi_merton,
            shift_scale: coeffs.shift_scale,
            beta0,
            p_terminal,
            primal_value: primal,
            merton_welfare_mc: welfare,
            merton_welfare_se: welfare_se,
        });
    }

    match format {
        OutputFormat::Csv => {
            let mc = sweep.merton_welfare_mc;
            let mut out = String::from(
                "gamma,eta,theta,e0,T,pi_merton,shift_scale,beta0,p_terminal,primal_value",
            );
            if mc {
                out.push_str(",merton_welfare_mc,merton_welfare_se");
            }
            out.push('\n');
            for row in &rows {
                write!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{}",
                    row.gamma,
                    row.eta,
                    row.theta,
                    row.e0,
                    row.horizon,
                    row.pi_merton,
                    row.shift_scale,
                    row.beta0,
                    row.p_terminal,
                    row.primal_value
                )
                .unwrap();
                if mc {
                    write!(
                        out,
                        ",{},{}",
                        row.merton_welfare_mc.unwrap(),
                        row.merton_welfare_se.unwrap()
                    )
                    .unwrap();
                }
                out.push('\n');
            }
            Ok(out)
        }
        OutputFormat::Json => to_json(&SweepReport {
            grid: config.grid,
            rng: RNG_IDENTITY,
            rows,
        }),
    }
}

/// Monte Carlo E[U(X_T)] under the Merton rule on a fresh ensemble.
fn merton_welfare(spec: &ProblemSpec, grid: &GridConfig) -> Result<(f64, f64), CliError> {
    let ensemble = generate_paths(spec, grid)?;
    let rows: Vec<Result<f64, simulate::SimError>> = ensemble.map_paths(|path, state| {
        let wealth = integrate_path(spec, &ensemble, state, &Strategy::Merton, path)?;
        Ok(match wealth.valid_terminal() {
            Some(x) => closedform::utility(spec, x.max(f64::MIN_POSITIVE))
                .unwrap_or(f64::NAN),
            None => f64::NAN,
        })
    });
    let mut utilities = Vec::with_capacity(rows.len());
    for row in rows {
        utilities.push(row?);
    }
    let (mean, se, _) = mean_se(&utilities);
    Ok((mean, se))
}

fn to_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    let mut rendered = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Io(format!("serialization failed: {e}")))?;
    rendered.push('\n');
    Ok(rendered)
}
