//! Experiment execution and result files.

use std::path::{Path, PathBuf};

use freqalloc_core::allocation::{
    initial_assignment, run_to_convergence, Scheduler, SimState, UpdateRecord,
};
use freqalloc_core::dynamics::{
    relaxation_experiment, simulate_time_varying, variance_experiment, DynamicsPrediction,
    VarianceEstimate,
};
use freqalloc_core::interference::{
    aggregate_interference, worst_case_interference, ActivityState, Assignment, InterferenceCache,
};
use freqalloc_core::metrics::{capacity, capacity_comparison, db_gap, shannon_capacity, LinkParams};
use freqalloc_core::oracle::{asymptotic_lower_bound, bound_report, reference_assignment, BoundReport};
use freqalloc_core::topology::Topology;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, ExperimentKind, TopologySpec, ValidationReport};
use crate::error::CliError;
use crate::output::{
    fmt_f64, fmt_opt_f64, pretty_json, sha256_hex, trace_row, write_file, Csv, CODE_VERSION, TRACE_HEADER,
};

/// Environment variable that replaces `outputs.dir`.
pub const OUT_DIR_ENV: &str = "FREQALLOC_OUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub kind: String,
    pub point: usize,
    pub replica: Option<usize>,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub name: String,
    pub code_version: &'static str,
    pub config_hash: String,
    pub experiment: ExperimentKind,
    pub status: &'static str,
    pub failures: Vec<Failure>,
    pub validation: ValidationReport,
    pub results: Results,
}

#[derive(Debug, Clone, Serialize)]
#[serde(untagged)]
pub enum Results {
    Static(Vec<StaticPoint>),
    Relaxation(RelaxationSummary),
    Variance(Vec<VariancePoint>),
}

#[derive(Debug, Clone, Serialize)]
pub struct StaticPoint {
    pub clusters: usize,
    pub dim: usize,
    pub reference_label: Option<String>,
    pub reference_normalized: Option<f64>,
    pub reference_capacity: Option<f64>,
    pub worst_normalized: f64,
    /// `I_w / (r N)`.
    pub upper_bound_normalized: f64,
    /// Per-cluster asymptotic lower bound (linear arrays).
    pub lower_bound_normalized: Option<f64>,
    pub mean_normalized: Option<f64>,
    pub mean_capacity: Option<f64>,
    pub mean_db_gap: Option<f64>,
    pub min_capacity_fraction: Option<f64>,
    pub max_updates: Option<u64>,
    /// Largest observed update count over `N`.
    pub max_updates_per_cluster: Option<f64>,
    pub replicas: Vec<StaticReplica>,
}

#[derive(Debug, Clone, Serialize)]
pub struct NoisePoint {
    pub noise_power: f64,
    pub capacity_fraction: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct StaticReplica {
    pub replica: usize,
    pub seed: u64,
    pub updates: u64,
    pub switches: u64,
    pub converged_time: f64,
    pub initial_aggregate: f64,
    pub converged_aggregate: f64,
    pub normalized: f64,
    pub db_gap_to_reference: Option<f64>,
    pub normalized_capacity: f64,
    pub capacity_fraction: Option<f64>,
    pub noise_grid: Vec<NoisePoint>,
    pub bounds: BoundReport,
    pub bands: Vec<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RelaxationSummary {
    pub clusters: usize,
    pub alpha: f64,
    pub tau: f64,
    pub rho: f64,
    pub rho_hat: f64,
    pub worst_normalized: f64,
    pub final_normalized: f64,
    pub replicas: usize,
    pub sample_step: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct VariancePoint {
    pub switching_rate: f64,
    pub alpha: f64,
    pub prediction: DynamicsPrediction,
    pub empirical: VarianceEstimate,
    pub ratio: Option<f64>,
}

/// Files written by a run and the parsed summary.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub summary: Summary,
}

fn core_err(e: freqalloc_core::Error) -> CliError {
    CliError::runtime(e.to_string())
}

/// Echo of the config with defaults filled in; the hash is taken over these bytes.
pub fn resolved_config(cfg: &ExperimentConfig, clusters: Option<usize>) -> ExperimentConfig {
    let mut out = cfg.clone();
    out.link = Some(cfg.link_params());
    if let Some(n) = clusters {
        out.sample_step = Some(cfg.resolved_step(n));
        if cfg.is_dynamic() {
            out.warmup = Some(cfg.resolved_warmup(n));
        }
    }
    out
}

/// Validates, runs and writes every output file of `cfg`.
///
/// `base_dir` resolves file-based topologies; `out_dir` replaces
/// `outputs.dir` when given. Bound violations and non-convergence are
/// written to the summary before the runtime error is returned.
pub fn run_experiment(cfg: &ExperimentConfig, base_dir: &Path, out_dir: Option<&Path>) -> Result<RunOutput, CliError> {
    cfg.validate()?;
    let file_clusters = match cfg.topology {
        TopologySpec::File { .. } => Some(cfg.topology.build(cfg.p0, cfg.eta, cfg.base_seed, base_dir)?.len()),
        _ => None,
    };
    let validation = cfg.validate_with(file_clusters)?;
    let resolved = resolved_config(cfg, validation.derived.clusters);
    let echo = pretty_json(&resolved);
    let config_hash = sha256_hex(echo.as_bytes());

    let mut trace = Csv::new(TRACE_HEADER);
    let mut failures = Vec::new();
    let (series, results) = match cfg.experiment {
        ExperimentKind::Static | ExperimentKind::SizeSweep => {
            let (series, points) = run_static(cfg, base_dir, &mut trace, &mut failures)?;
            (series, Results::Static(points))
        }
        ExperimentKind::Relaxation => {
            let (series, summary) = run_relaxation(cfg, base_dir, &mut trace)?;
            (series, Results::Relaxation(summary))
        }
        ExperimentKind::VarianceSweep => {
            let (series, points) = run_variance(cfg, base_dir, &mut trace)?;
            (series, Results::Variance(points))
        }
    };

    let summary = Summary {
        name: cfg.name.clone(),
        code_version: CODE_VERSION,
        config_hash,
        experiment: cfg.experiment,
        status: if failures.is_empty() { "ok" } else { "failed" },
        failures,
        validation,
        results,
    };

    let dir = out_dir.map(Path::to_path_buf).unwrap_or_else(|| cfg.outputs.dir.clone());
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let files = vec![
        (dir.join(&cfg.outputs.config_echo), echo),
        (dir.join(&cfg.outputs.trace_csv), trace.into_string()),
        (dir.join(&cfg.outputs.series_csv), series.into_string()),
        (dir.join(&cfg.outputs.summary_json), pretty_json(&summary)),
    ];
    for (path, text) in &files {
        write_file(path, text)?;
    }
    let paths: Vec<PathBuf> = files.into_iter().map(|(p, _)| p).collect();
    if !summary.failures.is_empty() {
        let message = summary
            .failures
            .iter()
            .map(|f| match f.replica {
                Some(k) => format!("{} (point {}, replica {}): {}", f.kind, f.point, k, f.detail),
                None => format!("{} (point {}): {}", f.kind, f.point, f.detail),
            })
            .collect::<Vec<_>>()
            .join("\n");
        return Err(CliError::Runtime {
            message,
            record: Some(paths[3].display().to_string()),
        });
    }
    Ok(RunOutput {
        dir,
        files: paths,
        summary,
    })
}

fn trace_limit(cfg: &ExperimentConfig) -> usize {
    cfg.outputs.trace_replicas.unwrap_or(cfg.replicas).min(cfg.replicas)
}

struct ConvergedRun {
    summary: StaticReplica,
    trace: Vec<UpdateRecord>,
    /// `(time, normalized interference, normalized capacity)` after every event.
    path: Vec<(f64, f64, f64)>,
}

fn converge_replica(
    top: &Topology,
    cfg: &ExperimentConfig,
    spacing: f64,
    reference: Option<&Assignment>,
    replica: usize,
) -> Result<ConvergedRun, freqalloc_core::Error> {
    let n = top.len();
    let seed = cfg.base_seed.wrapping_add(replica as u64);
    let act = ActivityState::all_active(n);
    let initial = initial_assignment(cfg.initial_assignment, n, cfg.r, seed)?;
    let mut state = SimState::new(top, initial.clone(), act.clone(), seed)?;
    let mut scheduler = Scheduler::new(cfg.scheduler)?;
    let initial_aggregate = state.aggregate();
    let conv = run_to_convergence(&mut state, &mut scheduler, cfg.max_updates)?;
    let converged_time = state.time();
    let (asg, act) = state.into_parts();

    let link = cfg.link_params();
    let caps = shannon_capacity(top, &asg, &act, &link)?;
    let (db, fraction, noise_grid) = match reference {
        Some(reference) => {
            let i_ref = aggregate_interference(top, reference, &act);
            let db = db_gap(conv.aggregate, i_ref).ok();
            let fraction = capacity_comparison(top, &act, &asg, reference, &link)?.achieved_fraction;
            let grid = cfg
                .noise_grid
                .iter()
                .map(|&noise_power| {
                    let l = LinkParams { signal_power: link.signal_power, noise_power };
                    capacity_comparison(top, &act, &asg, reference, &l).map(|c| NoisePoint {
                        noise_power,
                        capacity_fraction: c.achieved_fraction,
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            (db, fraction, grid)
        }
        None => (None, None, Vec::new()),
    };
    let bounds = bound_report(top, &act, &asg, cfg.r, spacing)?;
    let path = replay(top, &initial, &act, &link, &conv.trace);
    Ok(ConvergedRun {
        summary: StaticReplica {
            replica,
            seed,
            updates: conv.updates,
            switches: conv.switches,
            converged_time,
            initial_aggregate,
            converged_aggregate: conv.aggregate,
            normalized: conv.aggregate / n as f64,
            db_gap_to_reference: db,
            normalized_capacity: caps.normalized,
            capacity_fraction: fraction,
            noise_grid,
            bounds,
            bands: asg.bands().to_vec(),
        },
        trace: conv.trace,
        path,
    })
}

/// Normalized interference and capacity after every update, replayed from
/// the initial assignment.
fn replay(
    top: &Topology,
    initial: &Assignment,
    act: &ActivityState,
    link: &LinkParams,
    trace: &[UpdateRecord],
) -> Vec<(f64, f64, f64)> {
    let n = top.len() as f64;
    let mut asg = initial.clone();
    let mut cache = InterferenceCache::new(top, &asg, act).expect("replay inputs are consistent");
    let cap = |cache: &InterferenceCache, asg: &Assignment| {
        (0..top.len()).map(|i| capacity(link, cache.band(i, asg.band(i)))).sum::<f64>() / n
    };
    let mut out = Vec::with_capacity(trace.len() + 1);
    let mut c = cap(&cache, &asg);
    out.push((0.0, cache.aggregate(&asg, act) / n, c));
    for rec in trace {
        if rec.switched() {
            cache.switch_band(top, &mut asg, act, rec.cluster, rec.new_band);
            c = cap(&cache, &asg);
        }
        out.push((rec.time, rec.aggregate_after / n, c));
    }
    out
}

/// Step-hold sampling of `(time, value...)` paths on `k * step` up to `end`.
fn sample_path(path: &[(f64, f64, f64)], step: f64, points: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(points);
    let mut j = 0;
    for k in 0..points {
        let t = k as f64 * step;
        while j + 1 < path.len() && path[j + 1].0 <= t {
            j += 1;
        }
        out.push((path[j].1, path[j].2));
    }
    out
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, c) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    (c > 0).then(|| s / c as f64)
}

fn run_static(
    cfg: &ExperimentConfig,
    base_dir: &Path,
    trace: &mut Csv,
    failures: &mut Vec<Failure>,
) -> Result<(Csv, Vec<StaticPoint>), CliError> {
    let specs: Vec<TopologySpec> = match (&cfg.experiment, &cfg.sweep) {
        (ExperimentKind::SizeSweep, Some(s)) => s
            .sizes
            .iter()
            .map(|&k| cfg.topology.resized(k).expect("validated sweep layout"))
            .collect(),
        _ => vec![cfg.topology.clone()],
    };
    let sweep = cfg.experiment == ExperimentKind::SizeSweep;
    let mut series = if sweep {
        Csv::new("clusters,algo,reference,worst,upper_bound,lower_bound,algo_capacity,reference_capacity")
    } else {
        Csv::new("time,interference,capacity,reference_interference,reference_capacity,worst_interference")
    };
    let link = cfg.link_params();
    let limit = trace_limit(cfg);
    let mut points = Vec::new();

    for (p, spec) in specs.iter().enumerate() {
        let top = spec.build(cfg.p0, cfg.eta, cfg.base_seed, base_dir)?;
        let n = top.len();
        let all = ActivityState::all_active(n);
        let spacing = spec.spacing().unwrap_or_else(|| top.adjacent_gaps().map_or(1.0, |g| g.0));
        let reference = reference_assignment(&top, cfg.r);
        let ref_asg = reference.as_ref().map(|(a, _)| a);
        let runs: Vec<_> = (0..cfg.replicas)
            .into_par_iter()
            .map(|k| converge_replica(&top, cfg, spacing, ref_asg, k))
            .collect();

        let mut done = Vec::new();
        for (k, run) in runs.into_iter().enumerate() {
            match run {
                Ok(run) => {
                    for v in run.summary.bounds.violations() {
                        failures.push(Failure {
                            kind: "bound_violation".into(),
                            point: p,
                            replica: Some(k),
                            detail: v,
                        });
                    }
                    done.push(run);
                }
                Err(e) => failures.push(Failure {
                    kind: match e {
                        freqalloc_core::Error::NonConvergence { .. } => "non_convergence".into(),
                        _ => "runtime".into(),
                    },
                    point: p,
                    replica: Some(k),
                    detail: e.to_string(),
                }),
            }
        }

        for run in done.iter().filter(|r| r.summary.replica < limit) {
            let index = p * cfg.replicas + run.summary.replica;
            trace_row(trace, index, 0, 0.0, None, None, None, run.summary.initial_aggregate, n);
            for rec in &run.trace {
                trace_row(
                    trace,
                    index,
                    rec.epoch + 1,
                    rec.time,
                    Some(rec.cluster),
                    Some(rec.old_band),
                    Some(rec.new_band),
                    rec.aggregate_after,
                    n,
                );
            }
        }

        let worst = worst_case_interference(&top, &all) / n as f64;
        let reference_normalized = ref_asg.map(|a| aggregate_interference(&top, a, &all) / n as f64);
        let reference_capacity = match ref_asg {
            Some(a) => Some(shannon_capacity(&top, a, &all, &link).map_err(core_err)?.normalized),
            None => None,
        };
        let lower = if top.dim() == 1 && cfg.eta > 1.0 {
            asymptotic_lower_bound(cfg.r, cfg.eta, cfg.p0, spacing).ok()
        } else {
            None
        };
        let summaries: Vec<StaticReplica> = done.iter().map(|r| r.summary.clone()).collect();
        let point = StaticPoint {
            clusters: n,
            dim: top.dim(),
            reference_label: reference.as_ref().map(|(_, k)| k.label().to_string()),
            reference_normalized,
            reference_capacity,
            worst_normalized: worst,
            upper_bound_normalized: worst / cfg.r as f64,
            lower_bound_normalized: lower,
            mean_normalized: mean(summaries.iter().map(|s| s.normalized)),
            mean_capacity: mean(summaries.iter().map(|s| s.normalized_capacity)),
            mean_db_gap: mean(summaries.iter().filter_map(|s| s.db_gap_to_reference)),
            min_capacity_fraction: summaries
                .iter()
                .filter_map(|s| s.capacity_fraction)
                .min_by(f64::total_cmp),
            max_updates: summaries.iter().map(|s| s.updates).max(),
            max_updates_per_cluster: summaries.iter().map(|s| s.updates).max().map(|u| u as f64 / n as f64),
            replicas: summaries,
        };

        if sweep {
            series.row(&[
                n.to_string(),
                fmt_opt_f64(point.mean_normalized),
                fmt_opt_f64(point.reference_normalized),
                fmt_f64(point.worst_normalized),
                fmt_f64(point.upper_bound_normalized),
                fmt_opt_f64(point.lower_bound_normalized),
                fmt_opt_f64(point.mean_capacity),
                fmt_opt_f64(point.reference_capacity),
            ]);
        } else if !done.is_empty() {
            let step = cfg.resolved_step(n);
            let end = done.iter().map(|r| r.summary.converged_time).fold(0.0, f64::max);
            let count = (end / step).ceil() as usize + 1;
            let sampled: Vec<Vec<(f64, f64)>> = done.iter().map(|r| sample_path(&r.path, step, count)).collect();
            for k in 0..count {
                series.row(&[
                    fmt_f64(k as f64 * step),
                    fmt_opt_f64(mean(sampled.iter().map(|s| s[k].0))),
                    fmt_opt_f64(mean(sampled.iter().map(|s| s[k].1))),
                    fmt_opt_f64(point.reference_normalized),
                    fmt_opt_f64(point.reference_capacity),
                    fmt_f64(worst),
                ]);
            }
        }
        points.push(point);
    }
    Ok((series, points))
}

fn write_dynamic_traces(
    top: &Topology,
    cfg: &ExperimentConfig,
    alpha: f64,
    point: usize,
    trace: &mut Csv,
) -> Result<(), CliError> {
    let dyn_cfg = cfg.dynamics(top.len(), alpha);
    let traces: Vec<_> = (0..trace_limit(cfg))
        .into_par_iter()
        .map(|k| simulate_time_varying(top, &dyn_cfg, cfg.r, cfg.base_seed.wrapping_add(k as u64)))
        .collect::<Result<_, _>>()
        .map_err(core_err)?;
    for (k, t) in traces.iter().enumerate() {
        let index = point * cfg.replicas + k;
        for e in &t.events {
            trace_row(
                trace,
                index,
                e.event_index,
                e.time,
                e.cluster,
                e.old_band,
                e.new_band,
                e.aggregate,
                e.active_count,
            );
        }
    }
    Ok(())
}

fn run_relaxation(cfg: &ExperimentConfig, base_dir: &Path, trace: &mut Csv) -> Result<(Csv, RelaxationSummary), CliError> {
    let top = cfg.topology.build(cfg.p0, cfg.eta, cfg.base_seed, base_dir)?;
    let n = top.len();
    let step = cfg.resolved_step(n);
    let dyn_cfg = cfg.dynamics(n, cfg.alpha);
    let res = relaxation_experiment(&top, &dyn_cfg, cfg.r, cfg.base_seed, step).map_err(core_err)?;
    write_dynamic_traces(&top, cfg, cfg.alpha, 0, trace)?;

    let mut series = Csv::new("time,mean,predicted,fitted");
    let curve = |rho: f64, t: f64| res.i_a + (res.i_w - res.i_a) * (-rho * t / res.tau).exp();
    for (&t, &m) in res.times.iter().zip(&res.mean) {
        series.row(&[fmt_f64(t), fmt_f64(m), fmt_f64(curve(cfg.rho, t)), fmt_f64(curve(res.rho_hat, t))]);
    }
    Ok((
        series,
        RelaxationSummary {
            clusters: n,
            alpha: cfg.alpha,
            tau: res.tau,
            rho: cfg.rho,
            rho_hat: res.rho_hat,
            worst_normalized: res.i_w,
            final_normalized: res.i_a,
            replicas: cfg.replicas,
            sample_step: step,
        },
    ))
}

fn run_variance(cfg: &ExperimentConfig, base_dir: &Path, trace: &mut Csv) -> Result<(Csv, Vec<VariancePoint>), CliError> {
    let top = cfg.topology.build(cfg.p0, cfg.eta, cfg.base_seed, base_dir)?;
    let n = top.len();
    let step = cfg.resolved_step(n);
    let mut series = Csv::new("switching_rate,alpha,lambda,margin,predicted,empirical,ratio,mean");
    let mut points = Vec::new();
    for (p, alpha) in cfg.alphas().into_iter().enumerate() {
        let dyn_cfg = cfg.dynamics(n, alpha);
        let res = variance_experiment(&top, &dyn_cfg, cfg.r, cfg.base_seed, cfg.rho, step).map_err(core_err)?;
        write_dynamic_traces(&top, cfg, alpha, p, trace)?;
        series.row(&[
            fmt_f64(res.switching_rate),
            fmt_f64(res.alpha),
            fmt_f64(res.prediction.lambda),
            fmt_f64(res.prediction.margin),
            fmt_opt_f64(res.prediction.sigma_ss_sq),
            fmt_f64(res.empirical.variance),
            fmt_opt_f64(res.ratio),
            fmt_f64(res.empirical.mean),
        ]);
        points.push(VariancePoint {
            switching_rate: res.switching_rate,
            alpha: res.alpha,
            prediction: res.prediction,
            empirical: res.empirical,
            ratio: res.ratio,
        });
    }
    Ok((series, points))
}
