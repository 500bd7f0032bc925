//! Experiment runs and their tabular output.

use std::fs;
use std::path::Path;

use serde::Serialize;
use wassbound::coupling::{coupling_bounds, run_coupled_pairs, CoupledPairTrace, CouplingConfig};
use wassbound::gaussian::{w2_squared_gaussian, GaussianChainDynamics, GaussianDist};
use wassbound::mcmc::{convergence_bounds_at, mixing_time, run_ensemble, EnsembleConfig, Target};

use crate::config::{
    ChainExperiment, ExperimentConfig, InitialConfig, KernelConfig, ScalingConfig, TargetConfig,
};
use crate::error::{config_err, CliError, Result};

pub const TRAJECTORY_HEADER: [&str; 9] = [
    "t",
    "upper",
    "upper_ci_lo",
    "upper_ci_hi",
    "lower_sq",
    "lower_ci_lo",
    "lower_ci_hi",
    "exact",
    "coupling",
];

/// One row of `trajectory.csv`. Every column is on the squared scale; the
/// coupling column is the square of the coupling bound on `W2`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub t: usize,
    pub upper: f64,
    pub upper_ci: (f64, f64),
    pub lower_sq: f64,
    pub lower_ci: (f64, f64),
    pub exact: Option<f64>,
    pub coupling: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainRunOutput {
    pub rows: Vec<TrajectoryRow>,
    pub acceptance_rate: Option<f64>,
    pub traces: Option<Vec<CoupledPairTrace>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub experiment: String,
    pub n_chains: usize,
    pub reference_iteration: usize,
    pub asymptote_size: usize,
    pub acceptance_rate: Option<f64>,
    pub meeting_times: Option<Vec<usize>>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn format_trajectory_csv(rows: &[TrajectoryRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| CliError::Data(e.to_string());
    w.write_record(TRAJECTORY_HEADER).map_err(err)?;
    for r in rows {
        w.write_record([
            r.t.to_string(),
            r.upper.to_string(),
            r.upper_ci.0.to_string(),
            r.upper_ci.1.to_string(),
            r.lower_sq.to_string(),
            r.lower_ci.0.to_string(),
            r.lower_ci.1.to_string(),
            opt(r.exact),
            opt(r.coupling),
        ])
        .map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Data(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("CSV output is UTF-8"))
}

fn initial_gaussian(initial: &InitialConfig, target: &Target) -> Option<GaussianDist> {
    match initial {
        InitialConfig::ScaledTarget { factor } => target.gaussian_dist()?.with_scaled_cov(*factor).ok(),
        InitialConfig::Isotropic { variance } => GaussianDist::isotropic(target.dim(), *variance).ok(),
        _ => None,
    }
}

/// Exact `W2²(π_t, π_∞)` for Gibbs and ULA on Gaussian targets from a
/// Gaussian start; `None` otherwise.
pub fn exact_trajectory(cfg: &ChainExperiment, target: &Target, times: &[usize]) -> Result<Option<Vec<f64>>> {
    let (Some(dist), Some(pi0)) = (target.gaussian_dist(), initial_gaussian(&cfg.initial, target)) else {
        return Ok(None);
    };
    let dynamics = match cfg.kernel {
        KernelConfig::Gibbs => GaussianChainDynamics::gibbs_single_site(dist),
        KernelConfig::Ula { step } => GaussianChainDynamics::ula(dist, step),
        _ => return Ok(None),
    }
    .map_err(config_err)?;
    let values = times
        .iter()
        .map(|&t| w2_squared_gaussian(&dynamics.marginal_at(&pi0, t)?, dynamics.stationary()))
        .collect::<wassbound::Result<Vec<f64>>>()
        .map_err(config_err)?;
    Ok(Some(values))
}

fn run_traces(cfg: &ChainExperiment, target: &Target) -> Result<Option<Vec<CoupledPairTrace>>> {
    let Some(c) = cfg.coupling else {
        return Ok(None);
    };
    let pi0 = cfg.initial.build(&cfg.target, target)?;
    let coupling = CouplingConfig {
        lag: c.lag,
        cap: c.cap,
        seed: cfg.seed,
    };
    run_coupled_pairs(target, cfg.kernel.spec(), pi0.as_ref(), &coupling, c.pairs)
        .map(Some)
        .map_err(config_err)
}

/// Describes meeting times, including pairs that did not meet.
pub fn meeting_summary(traces: &[CoupledPairTrace]) -> String {
    let met: Vec<usize> = traces.iter().filter_map(|t| t.meeting_time).collect();
    let unmet = traces.len() - met.len();
    match (met.iter().min(), met.iter().max()) {
        (Some(lo), Some(hi)) => format!(
            "{} of {} pairs met (meeting times {lo}..={hi}); {unmet} unmet",
            met.len(),
            traces.len()
        ),
        _ => format!("none of {} pairs met; {unmet} unmet", traces.len()),
    }
}

/// Runs the ensemble, the bounds, and the optional exact and coupling columns.
pub fn run_chain_experiment(cfg: &ChainExperiment) -> Result<ChainRunOutput> {
    let window = cfg.validate()?;
    let target = cfg.target.build()?;
    let pi0 = cfg.initial.build(&cfg.target, &target)?;
    let ensemble_cfg = EnsembleConfig {
        n_chains: cfg.n_chains,
        horizon: cfg.horizon,
        thin: cfg.thin,
        seed: cfg.seed,
    };
    let ensemble = run_ensemble(&target, cfg.kernel.spec(), pi0.as_ref(), &ensemble_cfg).map_err(config_err)?;
    let times = cfg.report_times();
    let traj = convergence_bounds_at(&ensemble, cfg.reference_iteration, &window, cfg.alpha, &times)
        .map_err(config_err)?;
    let exact = exact_trajectory(cfg, &target, &times)?;
    let traces = run_traces(cfg, &target)?;
    let coupling = match &traces {
        Some(tr) => Some(
            coupling_bounds(tr, &times)
                .map_err(|e| CliError::Numerical(format!("{e}: {}", meeting_summary(tr))))?
                .into_iter()
                .map(|b| b * b)
                .collect::<Vec<f64>>(),
        ),
        None => None,
    };

    let rows = (0..times.len())
        .map(|k| {
            let ci = |b: &wassbound::wasserstein::BoundEstimate| b.ci.expect("intervals attached");
            TrajectoryRow {
                t: times[k],
                upper: traj.upper[k].value,
                upper_ci: ci(&traj.upper[k]),
                lower_sq: traj.lower_sq[k].value,
                lower_ci: ci(&traj.lower_sq[k]),
                exact: exact.as_ref().map(|e| e[k]),
                coupling: coupling.as_ref().map(|c| c[k]),
            }
        })
        .collect();
    Ok(ChainRunOutput {
        rows,
        acceptance_rate: ensemble.acceptance_rate(),
        traces,
    })
}

fn check_experiment_kind(config: &ExperimentConfig) -> Result<()> {
    match config {
        ExperimentConfig::GibbsAr1(c) => {
            if !matches!(c.target, TargetConfig::Ar1Circulant { .. }) || c.kernel != KernelConfig::Gibbs {
                return Err(CliError::Config("gibbs_ar1 needs an ar1_circulant target and the gibbs kernel".into()));
            }
        }
        ExperimentConfig::StochasticVolatility(c) => {
            if !matches!(c.target, TargetConfig::StochasticVolatility { .. }) {
                return Err(CliError::Config("stochastic_volatility needs a stochastic_volatility target".into()));
            }
        }
        ExperimentConfig::CouplingBaseline(c) => {
            if c.coupling.is_none() {
                return Err(CliError::Config("coupling_baseline needs a coupling section".into()));
            }
        }
        _ => {}
    }
    Ok(())
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn experiment_name(config: &ExperimentConfig) -> &'static str {
    match config {
        ExperimentConfig::EstimateFromSamples(_) => "estimate_from_samples",
        ExperimentConfig::GibbsAr1(_) => "gibbs_ar1",
        ExperimentConfig::UlaMalaScaling(_) => "ula_mala_scaling",
        ExperimentConfig::StochasticVolatility(_) => "stochastic_volatility",
        ExperimentConfig::CouplingBaseline(_) => "coupling_baseline",
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable") + "\n"
}

/// `run`: writes `trajectory.csv` and `summary.json` (or the scaling tables,
/// or `estimate.json`) into `out_dir`.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<()> {
    check_experiment_kind(config)?;
    fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    match config {
        ExperimentConfig::EstimateFromSamples(c) => {
            let report = crate::estimate::estimate_files(&c.nu, &c.mu, &c.mu_prime, c.alpha)?;
            write(&out_dir.join("estimate.json"), to_json(&report))
        }
        ExperimentConfig::UlaMalaScaling(c) => {
            let tables = run_scaling(c)?;
            for (name, rows) in &tables.trajectories {
                write(&out_dir.join(format!("{name}.csv")), format_trajectory_csv(rows)?)?;
            }
            write(&out_dir.join("mixing_times.csv"), format_mixing_csv(&tables.mixing)?)
        }
        ExperimentConfig::GibbsAr1(c) | ExperimentConfig::StochasticVolatility(c) | ExperimentConfig::CouplingBaseline(c) => {
            let output = run_chain_experiment(c)?;
            write(&out_dir.join("trajectory.csv"), format_trajectory_csv(&output.rows)?)?;
            let summary = RunSummary {
                experiment: experiment_name(config).into(),
                n_chains: c.n_chains,
                reference_iteration: c.reference_iteration,
                asymptote_size: c.asymptote.window().iterations().map_err(config_err)?.len(),
                acceptance_rate: output.acceptance_rate,
                meeting_times: output
                    .traces
                    .as_ref()
                    .map(|tr| tr.iter().filter_map(|t| t.meeting_time).collect()),
            };
            write(&out_dir.join("summary.json"), to_json(&summary))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct TraceRecord<'a> {
    pair: usize,
    lag: usize,
    meeting_time: Option<usize>,
    distance_sq_trace: &'a [f64],
}

/// `coupling`: writes `coupling.csv` (`t,coupling,coupling_sq`: the bound on
/// `W2` and its square) and `traces.json`. Refuses to write the bound when a
/// pair has not met.
pub fn run_coupling(config: &ExperimentConfig, out_dir: &Path) -> Result<()> {
    let c = match config {
        ExperimentConfig::GibbsAr1(c) | ExperimentConfig::StochasticVolatility(c) | ExperimentConfig::CouplingBaseline(c) => c,
        _ => return Err(CliError::Config("the coupling command needs a chain experiment".into())),
    };
    check_experiment_kind(config)?;
    if c.coupling.is_none() {
        return Err(CliError::Config("the configuration has no coupling section".into()));
    }
    c.validate()?;
    let target = c.target.build()?;
    let traces = run_traces(c, &target)?.expect("coupling section present");
    let times = c.report_times();
    let values = coupling_bounds(&traces, &times).map_err(|e| {
        CliError::Numerical(format!("{e}; refusing to write a truncated bound: {}", meeting_summary(&traces)))
    })?;
    fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| CliError::Data(e.to_string());
    w.write_record(["t", "coupling", "coupling_sq"]).map_err(err)?;
    for (t, v) in times.iter().zip(&values) {
        w.write_record([t.to_string(), v.to_string(), (v * v).to_string()]).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Data(e.to_string()))?;
    write(&out_dir.join("coupling.csv"), bytes)?;
    let records: Vec<TraceRecord> = traces
        .iter()
        .enumerate()
        .map(|(pair, t)| TraceRecord {
            pair,
            lag: t.lag,
            meeting_time: t.meeting_time,
            distance_sq_trace: &t.distance_sq_trace,
        })
        .collect();
    write(&out_dir.join("traces.json"), to_json(&records))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixingRow {
    pub d: usize,
    pub sampler: String,
    pub step: f64,
    pub acceptance_rate: Option<f64>,
    pub upper: Option<usize>,
    pub lower_sq: Option<usize>,
    pub exact: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingTables {
    pub trajectories: Vec<(String, Vec<TrajectoryRow>)>,
    pub mixing: Vec<MixingRow>,
}

pub fn run_scaling(cfg: &ScalingConfig) -> Result<ScalingTables> {
    if cfg.dimensions.is_empty() {
        return Err(CliError::Config("dimensions must be nonempty".into()));
    }
    let mut trajectories = Vec::new();
    let mut mixing = Vec::new();
    for &d in &cfg.dimensions {
        for (name, run) in [("mala", &cfg.mala), ("ula", &cfg.ula)] {
            let step = run.step_rule.step(d);
            let kernel = if name == "mala" {
                KernelConfig::Mala { step }
            } else {
                KernelConfig::Ula { step }
            };
            let exp = run.experiment(cfg, d, kernel);
            let out = run_chain_experiment(&exp)?;
            let times: Vec<usize> = out.rows.iter().map(|r| r.t).collect();
            let upper: Vec<f64> = out.rows.iter().map(|r| r.upper).collect();
            let lower: Vec<f64> = out.rows.iter().map(|r| r.lower_sq).collect();
            let exact: Option<Vec<f64>> = out.rows.iter().map(|r| r.exact).collect();
            mixing.push(MixingRow {
                d,
                sampler: name.into(),
                step,
                acceptance_rate: out.acceptance_rate,
                upper: mixing_time(&times, &upper, cfg.threshold),
                lower_sq: mixing_time(&times, &lower, cfg.threshold),
                exact: exact.and_then(|e| mixing_time(&times, &e, cfg.threshold)),
            });
            trajectories.push((format!("{name}_d{d}"), out.rows));
        }
    }
    Ok(ScalingTables { trajectories, mixing })
}

pub fn format_mixing_csv(rows: &[MixingRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| CliError::Data(e.to_string());
    w.write_record(["d", "sampler", "step", "acceptance_rate", "upper", "lower_sq", "exact"])
        .map_err(err)?;
    let o = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.d.to_string(),
            r.sampler.clone(),
            r.step.to_string(),
            opt(r.acceptance_rate),
            o(r.upper),
            o(r.lower_sq),
            o(r.exact),
        ])
        .map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Data(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("CSV output is UTF-8"))
}
