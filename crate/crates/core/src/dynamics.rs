//! Time-varying activity: Markov on/off clusters driven by the Poisson
//! update clock, relaxation-rate fitting and the steady-state variance
//! prediction.
//!
//! Activity advances one Markov step per clock tick, before the ticking
//! cluster updates. Activity and scheduling draw from separate RNG streams,
//! so with `alpha = 1` a run reproduces the static Poisson-clock run of the
//! same seed event for event.

use rand::Rng;
use rand_distr::{Distribution, Geometric};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::allocation::{
    initial_assignment, stream_rng, InitialAssignment, Scheduler, SchedulerKind, SimState,
    ACTIVITY_STREAM,
};
use crate::error::{Error, Result};
use crate::interference::{worst_case_interference, ActivityState};
use crate::topology::Topology;

/// Default effective-neighbour constant for linear arrays.
pub const DEFAULT_RHO: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynamicsConfig {
    /// Mean network-wide inter-update time.
    pub delta_t: f64,
    pub alpha: f64,
    pub horizon: f64,
    pub replicas: usize,
    pub warmup: f64,
    #[serde(default)]
    pub initial: InitialAssignment,
}

impl DynamicsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta_t > 0.0 && self.delta_t.is_finite()) {
            return Err(Error::invalid("delta_t", format!("must be positive, got {}", self.delta_t)));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::invalid("alpha", format!("must lie in [0, 1], got {}", self.alpha)));
        }
        if self.replicas == 0 {
            return Err(Error::invalid("replicas", "at least one replica is required"));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::invalid("horizon", format!("must be positive, got {}", self.horizon)));
        }
        if !(self.warmup >= 0.0 && self.warmup < self.horizon) {
            return Err(Error::invalid(
                "warmup",
                format!("must lie in [0, horizon = {}), got {}", self.horizon, self.warmup),
            ));
        }
        Ok(())
    }

    /// `tau = N * delta_t`.
    pub fn tau(&self, n: usize) -> f64 {
        n as f64 * self.delta_t
    }

    /// Several relaxation times: `10 tau / rho`.
    pub fn default_warmup(n: usize, delta_t: f64, rho: f64) -> f64 {
        10.0 * n as f64 * delta_t / rho
    }

    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if 1.0 - self.alpha > 0.1 {
            w.push(format!(
                "expected toggles per slot (1 - alpha) N = {:.3} N exceed 0.1 N: the near-equilibrium assumption is strained",
                1.0 - self.alpha
            ));
        }
        w
    }
}

/// One Markov step for every cluster: stay with probability `alpha`, flip
/// otherwise.
pub fn markov_toggle_all<R: Rng + ?Sized>(act: &ActivityState, rng: &mut R) -> ActivityState {
    let mut next = act.clone();
    for i in flips(act.len(), act.alpha(), rng) {
        next.set(i, !next.is_active(i));
    }
    next
}

/// Indices that flip in one step, drawn by geometric skipping so the cost
/// is proportional to the number of flips.
fn flips<R: Rng + ?Sized>(n: usize, alpha: f64, rng: &mut R) -> Vec<usize> {
    let p = 1.0 - alpha;
    if p <= 0.0 {
        return Vec::new();
    }
    if p >= 1.0 {
        return (0..n).collect();
    }
    let geom = Geometric::new(p).expect("flip probability in (0, 1)");
    let mut out = Vec::new();
    let mut i = 0u64;
    loop {
        i = i.saturating_add(geom.sample(rng));
        if i >= n as u64 {
            return out;
        }
        out.push(i as usize);
        i += 1;
    }
}

/// Total on/off switching rate per direction: `N^2 (1 - alpha) / (2 tau)`.
pub fn lambda_from_alpha(alpha: f64, n: usize, tau: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::invalid("tau", format!("must be positive, got {tau}")));
    }
    let n = n as f64;
    Ok(n * n * (1.0 - alpha) / (2.0 * tau))
}

/// `8 (1 - alpha) / rho`; the steady-state variance is finite below 1.
pub fn stability_margin(alpha: f64, rho: f64) -> Result<f64> {
    if !(rho > 0.0) {
        return Err(Error::invalid("rho", format!("must be positive, got {rho}")));
    }
    Ok(8.0 * (1.0 - alpha) / rho)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsPrediction {
    pub rho: f64,
    pub tau: f64,
    pub lambda: f64,
    /// `16 lambda tau / (N^2 rho)`.
    pub margin: f64,
    /// `None` when `margin >= 1`.
    pub sigma_ss_sq: Option<f64>,
    pub divergent: bool,
}

/// Steady-state variance `i_a^2 * 16 lambda tau / (N^2 rho - 16 lambda tau)`.
pub fn predicted_variance(i_a: f64, lambda: f64, tau: f64, n: usize, rho: f64) -> Result<DynamicsPrediction> {
    if !(tau > 0.0) {
        return Err(Error::invalid("tau", format!("must be positive, got {tau}")));
    }
    if !(rho > 0.0) {
        return Err(Error::invalid("rho", format!("must be positive, got {rho}")));
    }
    if !(lambda >= 0.0) {
        return Err(Error::invalid("lambda", format!("must be non-negative, got {lambda}")));
    }
    if n == 0 {
        return Err(Error::invalid("n", "at least one cluster is required"));
    }
    let n2 = (n as f64).powi(2);
    let drive = 16.0 * lambda * tau;
    let margin = drive / (n2 * rho);
    let divergent = margin >= 1.0;
    let sigma_ss_sq = (!divergent).then(|| i_a * i_a * drive / (n2 * rho - drive));
    Ok(DynamicsPrediction {
        rho,
        tau,
        lambda,
        margin,
        sigma_ss_sq,
        divergent,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub event_index: u64,
    pub time: f64,
    /// `None` for the initial sample and for ticks with nobody active.
    pub cluster: Option<usize>,
    pub old_band: Option<usize>,
    pub new_band: Option<usize>,
    pub aggregate: f64,
    pub active_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTrace {
    pub n: usize,
    pub horizon: f64,
    pub events: Vec<TraceEvent>,
}

impl SimTrace {
    /// Aggregate divided by the number of clusters, held between events,
    /// sampled at `start + k * step` for every grid point up to the horizon.
    pub fn sample_normalized(&self, start: f64, step: f64) -> Vec<f64> {
        let mut sampler = GridSampler::new(start, step, self.horizon, self.n);
        for e in &self.events {
            sampler.observe(e);
        }
        sampler.finish()
    }

    pub fn final_aggregate(&self) -> f64 {
        self.events.last().map_or(0.0, |e| e.aggregate)
    }
}

/// Step-hold sampler of the normalized aggregate onto a regular time grid.
#[derive(Debug, Clone)]
pub struct GridSampler {
    start: f64,
    step: f64,
    count: usize,
    scale: f64,
    current: f64,
    values: Vec<f64>,
}

impl GridSampler {
    pub fn new(start: f64, step: f64, horizon: f64, n: usize) -> Self {
        assert!(step > 0.0, "grid step must be positive");
        let count = if horizon >= start {
            ((horizon - start) / step * (1.0 + 1e-12)).floor() as usize + 1
        } else {
            0
        };
        GridSampler {
            start,
            step,
            count,
            scale: 1.0 / n.max(1) as f64,
            current: f64::NAN,
            values: Vec::with_capacity(count),
        }
    }

    fn grid_time(&self, k: usize) -> f64 {
        self.start + k as f64 * self.step
    }

    pub fn observe(&mut self, e: &TraceEvent) {
        while self.values.len() < self.count && self.grid_time(self.values.len()) < e.time {
            self.values.push(self.current);
        }
        self.current = e.aggregate * self.scale;
    }

    pub fn finish(mut self) -> Vec<f64> {
        while self.values.len() < self.count {
            self.values.push(self.current);
        }
        self.values
    }
}

/// Runs one replica to the horizon, handing every event to `observe`.
///
/// Each Poisson tick first advances every cluster's activity one Markov
/// step, then a uniformly chosen active cluster performs its best-band
/// update. Ticks past the horizon are not applied.
pub fn simulate_time_varying_with<F: FnMut(&TraceEvent)>(
    top: &Topology,
    cfg: &DynamicsConfig,
    r: usize,
    seed: u64,
    mut observe: F,
) -> Result<()> {
    cfg.validate()?;
    let n = top.len();
    let asg = initial_assignment(cfg.initial, n, r, seed)?;
    let act = ActivityState::with_alpha(n, cfg.alpha)?;
    let mut state = SimState::new(top, asg, act, seed)?;
    let scheduler = Scheduler::new(SchedulerKind::PoissonClock { delta_t: cfg.delta_t })?;
    let mut activity_rng = stream_rng(seed, ACTIVITY_STREAM);

    let mut index = 0u64;
    observe(&TraceEvent {
        event_index: 0,
        time: 0.0,
        cluster: None,
        old_band: None,
        new_band: None,
        aggregate: state.aggregate(),
        active_count: n,
    });
    loop {
        let t = state.tick(&scheduler);
        if t > cfg.horizon {
            return Ok(());
        }
        for i in flips(n, cfg.alpha, &mut activity_rng) {
            let on = !state.activity().is_active(i);
            state.set_active(i, on);
        }
        index += 1;
        let active_count = state.activity().active_count();
        let event = if active_count == 0 {
            TraceEvent {
                event_index: index,
                time: t,
                cluster: None,
                old_band: None,
                new_band: None,
                aggregate: 0.0,
                active_count,
            }
        } else {
            let i = state.pick_cluster(&scheduler)?;
            let rec = state.apply_update(i)?;
            TraceEvent {
                event_index: index,
                time: t,
                cluster: Some(i),
                old_band: Some(rec.old_band),
                new_band: Some(rec.new_band),
                aggregate: rec.aggregate_after,
                active_count,
            }
        };
        observe(&event);
    }
}

pub fn simulate_time_varying(top: &Topology, cfg: &DynamicsConfig, r: usize, seed: u64) -> Result<SimTrace> {
    let mut events = Vec::new();
    simulate_time_varying_with(top, cfg, r, seed, |e| events.push(e.clone()))?;
    Ok(SimTrace {
        n: top.len(),
        horizon: cfg.horizon,
        events,
    })
}

/// Full traces for replicas `base_seed + k`, in replica order.
pub fn simulate_ensemble(top: &Topology, cfg: &DynamicsConfig, r: usize, base_seed: u64) -> Result<Vec<SimTrace>> {
    (0..cfg.replicas)
        .into_par_iter()
        .map(|k| simulate_time_varying(top, cfg, r, base_seed.wrapping_add(k as u64)))
        .collect()
}

/// Normalized aggregate of every replica sampled on `start + k * step`,
/// without keeping the traces.
pub fn sample_ensemble(
    top: &Topology,
    cfg: &DynamicsConfig,
    r: usize,
    base_seed: u64,
    start: f64,
    step: f64,
) -> Result<Vec<Vec<f64>>> {
    (0..cfg.replicas)
        .into_par_iter()
        .map(|k| {
            let mut sampler = GridSampler::new(start, step, cfg.horizon, top.len());
            simulate_time_varying_with(top, cfg, r, base_seed.wrapping_add(k as u64), |e| sampler.observe(e))?;
            Ok(sampler.finish())
        })
        .collect()
}

/// Point-wise mean over replicas of equally long sample series.
pub fn ensemble_mean(series: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = series
        .first()
        .ok_or_else(|| Error::Statistics("no replicas".into()))?;
    let len = first.len();
    if series.iter().any(|s| s.len() != len) {
        return Err(Error::Statistics("replica series differ in length".into()));
    }
    let k = series.len() as f64;
    Ok((0..len)
        .map(|t| series.iter().map(|s| s[t]).sum::<f64>() / k)
        .collect())
}

/// Least-squares rate of `log((v - i_a) / (i_w - i_a))` against time, over
/// the initial stretch where the bracket stays above 0.05. Returns
/// `rho = -slope * tau`.
pub fn fit_exponential_decay(times: &[f64], values: &[f64], i_a: f64, i_w: f64, tau: f64) -> Result<f64> {
    if times.len() != values.len() {
        return Err(Error::Fit("time and value series differ in length".into()));
    }
    if !(i_w > i_a) {
        return Err(Error::Fit(format!("worst case {i_w} does not exceed target {i_a}")));
    }
    let points: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .map(|(&t, &v)| (t, (v - i_a) / (i_w - i_a)))
        .take_while(|&(_, y)| y > 0.05)
        .map(|(t, y)| (t, y.ln()))
        .collect();
    if points.len() < 2 {
        return Err(Error::Fit(format!(
            "only {} point(s) above the 5% bracket; the trace starts converged",
            points.len()
        )));
    }
    let m = points.len() as f64;
    let mean_t = points.iter().map(|p| p.0).sum::<f64>() / m;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_t).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mean_t) * (p.1 - mean_y)).sum();
    if !(sxx > 0.0) {
        return Err(Error::Fit("all points share one time".into()));
    }
    Ok(-(sxy / sxx) * tau)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceEstimate {
    /// Pooled variance over every replica-time sample, replicas weighted
    /// equally: mean within-replica variance plus the variance of the
    /// replica means.
    pub variance: f64,
    pub within: f64,
    pub between: f64,
    pub mean: f64,
    pub replicas: usize,
    pub samples_per_replica: usize,
    pub estimator: String,
}

/// Pooled steady-state variance of per-replica sample series.
pub fn pooled_variance(series: &[Vec<f64>]) -> Result<VarianceEstimate> {
    if series.len() < 2 {
        return Err(Error::Statistics(format!("{} replica(s); at least 2 needed", series.len())));
    }
    let len = series[0].len();
    if len == 0 || series.iter().any(|s| s.len() != len) {
        return Err(Error::Statistics("replica series are empty or differ in length".into()));
    }
    let means: Vec<f64> = series.iter().map(|s| s.iter().sum::<f64>() / len as f64).collect();
    let within = series
        .iter()
        .zip(&means)
        .map(|(s, m)| s.iter().map(|v| (v - m).powi(2)).sum::<f64>() / len as f64)
        .sum::<f64>()
        / series.len() as f64;
    let grand = means.iter().sum::<f64>() / means.len() as f64;
    let between = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / means.len() as f64;
    Ok(VarianceEstimate {
        variance: within + between,
        within,
        between,
        mean: grand,
        replicas: series.len(),
        samples_per_replica: len,
        estimator: "per-replica time means first; variance = mean within-replica variance + variance of replica means (population form, equal replica weights) of the normalized aggregate sampled on a regular grid after warmup".into(),
    })
}

/// Steady-state variance of the normalized aggregate after `warmup`,
/// sampled every `step`.
pub fn empirical_steady_state_variance(traces: &[SimTrace], warmup: f64, step: f64) -> Result<VarianceEstimate> {
    if let Some(t) = traces.iter().find(|t| t.horizon <= warmup) {
        return Err(Error::Statistics(format!("horizon {} does not exceed warmup {warmup}", t.horizon)));
    }
    let series: Vec<Vec<f64>> = traces.iter().map(|t| t.sample_normalized(warmup, step)).collect();
    pooled_variance(&series)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelaxationResult {
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    /// Normalized all-co-band aggregate (the starting level).
    pub i_w: f64,
    /// Mean normalized aggregate at the horizon.
    pub i_a: f64,
    pub tau: f64,
    pub rho_hat: f64,
}

/// Ensemble-mean decay of the normalized aggregate from the all-band-1
/// start with static activity, and its fitted relaxation constant.
pub fn relaxation_experiment(
    top: &Topology,
    cfg: &DynamicsConfig,
    r: usize,
    base_seed: u64,
    step: f64,
) -> Result<RelaxationResult> {
    let series = sample_ensemble(top, cfg, r, base_seed, 0.0, step)?;
    let mean = ensemble_mean(&series)?;
    let times: Vec<f64> = (0..mean.len()).map(|k| k as f64 * step).collect();
    let n = top.len();
    let i_w = worst_case_interference(top, &ActivityState::all_active(n)) / n as f64;
    let i_a = *mean.last().ok_or_else(|| Error::Statistics("empty grid".into()))?;
    let tau = cfg.tau(n);
    let rho_hat = fit_exponential_decay(&times, &mean, i_a, i_w, tau)?;
    Ok(RelaxationResult {
        times,
        mean,
        i_w,
        i_a,
        tau,
        rho_hat,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceResult {
    pub alpha: f64,
    pub switching_rate: f64,
    pub empirical: VarianceEstimate,
    pub prediction: DynamicsPrediction,
    /// Empirical over predicted variance; `None` when the prediction diverges.
    pub ratio: Option<f64>,
}

/// Steady-state variance of the normalized aggregate against the
/// prediction evaluated at the empirical steady-state mean.
pub fn variance_experiment(
    top: &Topology,
    cfg: &DynamicsConfig,
    r: usize,
    base_seed: u64,
    rho: f64,
    step: f64,
) -> Result<VarianceResult> {
    let series = sample_ensemble(top, cfg, r, base_seed, cfg.warmup, step)?;
    let empirical = pooled_variance(&series)?;
    let n = top.len();
    let tau = cfg.tau(n);
    let lambda = lambda_from_alpha(cfg.alpha, n, tau)?;
    let prediction = predicted_variance(empirical.mean, lambda, tau, n, rho)?;
    let ratio = prediction
        .sigma_ss_sq
        .filter(|&p| p > 0.0)
        .map(|p| empirical.variance / p);
    Ok(VarianceResult {
        alpha: cfg.alpha,
        switching_rate: 1.0 - cfg.alpha,
        empirical,
        prediction,
        ratio,
    })
}
