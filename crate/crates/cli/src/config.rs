//! Experiment configuration: a single JSON document.

use std::path::{Path, PathBuf};

use freqalloc_core::allocation::{stream_rng, InitialAssignment, SchedulerKind};
use freqalloc_core::dynamics::{lambda_from_alpha, stability_margin, DynamicsConfig, DEFAULT_RHO};
use freqalloc_core::metrics::LinkParams;
use freqalloc_core::topology::{
    make_hexagonal_lattice, make_random_linear_array, make_rectangular_lattice,
    make_uniform_linear_array, Topology,
};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Issue};

/// Generator stream used to place clusters of a random linear array.
pub const TOPOLOGY_STREAM: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// Replicas converged from the initial assignment on one topology.
    Static,
    /// Static convergence repeated over a list of array sizes.
    SizeSweep,
    /// Ensemble-mean decay of the aggregate under the Poisson clock.
    Relaxation,
    /// Steady-state variance against the prediction over switching rates.
    VarianceSweep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TopologySpec {
    UniformLinear { n: usize, d: f64 },
    RandomLinear { n: usize, d: f64, min_sep: f64 },
    Rectangular { rows: usize, cols: usize, d: f64 },
    Hexagonal { rows: usize, cols: usize, d: f64 },
    /// Positions document on disk, relative paths resolved against the config.
    File { path: PathBuf },
}

impl TopologySpec {
    /// Same layout family at another size: `n` for arrays, the side of a
    /// square lattice otherwise.
    pub fn resized(&self, size: usize) -> Option<TopologySpec> {
        Some(match *self {
            TopologySpec::UniformLinear { d, .. } => TopologySpec::UniformLinear { n: size, d },
            TopologySpec::RandomLinear { d, min_sep, .. } => TopologySpec::RandomLinear { n: size, d, min_sep },
            TopologySpec::Rectangular { d, .. } => TopologySpec::Rectangular { rows: size, cols: size, d },
            TopologySpec::Hexagonal { d, .. } => TopologySpec::Hexagonal { rows: size, cols: size, d },
            TopologySpec::File { .. } => return None,
        })
    }

    /// Reference spacing for the analytic bounds.
    pub fn spacing(&self) -> Option<f64> {
        match *self {
            TopologySpec::UniformLinear { d, .. }
            | TopologySpec::RandomLinear { d, .. }
            | TopologySpec::Rectangular { d, .. }
            | TopologySpec::Hexagonal { d, .. } => Some(d),
            TopologySpec::File { .. } => None,
        }
    }

    pub fn build(&self, p0: f64, eta: f64, seed: u64, base_dir: &Path) -> Result<Topology, CliError> {
        let top = match self {
            TopologySpec::UniformLinear { n, d } => make_uniform_linear_array(*n, *d),
            TopologySpec::RandomLinear { n, d, min_sep } => {
                make_random_linear_array(*n, *d, *min_sep, &mut stream_rng(seed, TOPOLOGY_STREAM))
            }
            TopologySpec::Rectangular { rows, cols, d } => make_rectangular_lattice(*rows, *cols, *d),
            TopologySpec::Hexagonal { rows, cols, d } => make_hexagonal_lattice(*rows, *cols, *d),
            TopologySpec::File { path } => {
                let full = base_dir.join(path);
                let text = std::fs::read_to_string(&full).map_err(|e| CliError::io(&full, e))?;
                Topology::from_json(&text)
            }
        };
        top.and_then(|t| t.with_path_loss(p0, eta))
            .map_err(|e| CliError::single("topology", e.to_string()))
    }

    fn cluster_count(&self) -> Option<usize> {
        match *self {
            TopologySpec::UniformLinear { n, .. } | TopologySpec::RandomLinear { n, .. } => Some(n),
            TopologySpec::Rectangular { rows, cols, .. } | TopologySpec::Hexagonal { rows, cols, .. } => {
                Some(rows * cols)
            }
            TopologySpec::File { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sizes: Vec<usize>,
    /// Values of `1 - alpha`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub switching_rates: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    pub dir: PathBuf,
    #[serde(default = "default_trace")]
    pub trace_csv: String,
    #[serde(default = "default_summary")]
    pub summary_json: String,
    #[serde(default = "default_echo")]
    pub config_echo: String,
    #[serde(default = "default_series")]
    pub series_csv: String,
    /// Replicas per experiment point written to the trace; all when absent.
    #[serde(default)]
    pub trace_replicas: Option<usize>,
}

fn default_trace() -> String {
    "trace.csv".into()
}
fn default_summary() -> String {
    "summary.json".into()
}
fn default_echo() -> String {
    "config.json".into()
}
fn default_series() -> String {
    "series.csv".into()
}
fn default_eta() -> f64 {
    2.0
}
fn default_p0() -> f64 {
    1.0
}
fn default_alpha() -> f64 {
    1.0
}
fn default_replicas() -> usize {
    1
}
fn default_rho() -> f64 {
    DEFAULT_RHO
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub experiment: ExperimentKind,
    pub topology: TopologySpec,
    pub r: usize,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default = "default_p0")]
    pub p0: f64,
    #[serde(default)]
    pub initial_assignment: InitialAssignment,
    pub scheduler: SchedulerKind,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub horizon: Option<f64>,
    /// Defaults to `10 tau / rho`.
    #[serde(default)]
    pub warmup: Option<f64>,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    pub base_seed: u64,
    #[serde(default = "default_rho")]
    pub rho: f64,
    /// Defaults to signal `p0`, noise `p0 / 10`.
    #[serde(default)]
    pub link: Option<LinkParams>,
    /// Extra noise powers at which capacity fractions are reported.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub noise_grid: Vec<f64>,
    /// Grid spacing of the sampled series; defaults to `tau / 20`.
    #[serde(default)]
    pub sample_step: Option<f64>,
    /// Update guard per convergence run; defaults to `10 N^(eta+2)`.
    #[serde(default)]
    pub max_updates: Option<u64>,
    #[serde(default)]
    pub sweep: Option<Sweep>,
    pub outputs: Outputs,
}

/// Parses a config, reporting syntax and type errors with line and column.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, CliError> {
    serde_json::from_str(text).map_err(|e| {
        CliError::Validation(vec![Issue {
            field: format!("line {} column {}", e.line(), e.column()),
            message: e.to_string(),
        }])
    })
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_config(&text)
}

/// Quantities derived from a valid config.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Derived {
    pub clusters: Option<usize>,
    pub tau: Option<f64>,
    pub warmup: Option<f64>,
    pub sample_step: Option<f64>,
    pub points: Vec<DerivedPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DerivedPoint {
    pub alpha: f64,
    pub lambda: f64,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub derived: Derived,
    pub warnings: Vec<String>,
}

fn positive(issues: &mut Vec<Issue>, field: &str, v: f64) {
    if !(v > 0.0 && v.is_finite()) {
        issues.push(Issue::new(field, format!("must be positive and finite, got {v}")));
    }
}

impl ExperimentConfig {
    pub fn link_params(&self) -> LinkParams {
        self.link.unwrap_or_else(|| LinkParams::for_p0(self.p0))
    }

    pub fn is_dynamic(&self) -> bool {
        matches!(self.experiment, ExperimentKind::Relaxation | ExperimentKind::VarianceSweep)
    }

    /// Cluster count per experiment point (a single entry unless sweeping sizes).
    fn sizes(&self, file_clusters: Option<usize>) -> Vec<Option<usize>> {
        if let TopologySpec::File { .. } = self.topology {
            return vec![file_clusters];
        }
        match (&self.experiment, &self.sweep) {
            (ExperimentKind::SizeSweep, Some(s)) => s
                .sizes
                .iter()
                .map(|&k| self.topology.resized(k).and_then(|t| t.cluster_count()))
                .collect(),
            _ => vec![self.topology.cluster_count()],
        }
    }

    fn tau_for(&self, n: usize) -> f64 {
        n as f64 * self.scheduler.delta_t()
    }

    /// Alphas simulated, one per experiment point.
    pub fn alphas(&self) -> Vec<f64> {
        match (&self.experiment, &self.sweep) {
            (ExperimentKind::VarianceSweep, Some(s)) => s.switching_rates.iter().map(|q| 1.0 - q).collect(),
            _ => vec![self.alpha],
        }
    }

    pub fn resolved_warmup(&self, n: usize) -> f64 {
        self.warmup
            .unwrap_or_else(|| DynamicsConfig::default_warmup(n, self.scheduler.delta_t(), self.rho))
    }

    pub fn resolved_step(&self, n: usize) -> f64 {
        self.sample_step.unwrap_or_else(|| self.tau_for(n) / 20.0)
    }

    pub fn dynamics(&self, n: usize, alpha: f64) -> DynamicsConfig {
        DynamicsConfig {
            delta_t: self.scheduler.delta_t(),
            alpha,
            horizon: self.horizon.unwrap_or(0.0),
            replicas: self.replicas,
            warmup: self.resolved_warmup(n),
            initial: self.initial_assignment,
        }
    }

    /// Structural and semantic checks; every problem is reported, not just the first.
    pub fn validate(&self) -> Result<ValidationReport, CliError> {
        self.validate_with(None)
    }

    /// As [`validate`](Self::validate), with the cluster count of a
    /// file-based topology already known.
    pub fn validate_with(&self, file_clusters: Option<usize>) -> Result<ValidationReport, CliError> {
        let mut issues = Vec::new();
        let mut warnings = Vec::new();

        if self.name.trim().is_empty() {
            issues.push(Issue::new("name", "must not be empty"));
        }
        match &self.topology {
            TopologySpec::UniformLinear { n, d } => {
                if *n == 0 {
                    issues.push(Issue::new("topology.n", "must be at least 1"));
                }
                positive(&mut issues, "topology.d", *d);
            }
            TopologySpec::RandomLinear { n, d, min_sep } => {
                if *n == 0 {
                    issues.push(Issue::new("topology.n", "must be at least 1"));
                }
                positive(&mut issues, "topology.d", *d);
                positive(&mut issues, "topology.min_sep", *min_sep);
                if min_sep > d {
                    issues.push(Issue::new("topology.min_sep", format!("must not exceed d = {d}")));
                }
            }
            TopologySpec::Rectangular { rows, cols, d } | TopologySpec::Hexagonal { rows, cols, d } => {
                if *rows == 0 {
                    issues.push(Issue::new("topology.rows", "must be at least 1"));
                }
                if *cols == 0 {
                    issues.push(Issue::new("topology.cols", "must be at least 1"));
                }
                positive(&mut issues, "topology.d", *d);
            }
            TopologySpec::File { path } => {
                if path.as_os_str().is_empty() {
                    issues.push(Issue::new("topology.path", "must not be empty"));
                }
                if self.experiment == ExperimentKind::SizeSweep {
                    issues.push(Issue::new("topology.kind", "size sweeps need a generated layout"));
                }
            }
        }
        if self.r == 0 {
            issues.push(Issue::new("r", "at least one band is required"));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            issues.push(Issue::new("eta", format!("must be positive, got {}", self.eta)));
        }
        positive(&mut issues, "p0", self.p0);
        positive(&mut issues, "scheduler.delta_t", self.scheduler.delta_t());
        if !(0.0..=1.0).contains(&self.alpha) {
            issues.push(Issue::new("alpha", format!("must lie in [0, 1], got {}", self.alpha)));
        }
        if self.replicas == 0 {
            issues.push(Issue::new("replicas", "at least one replica is required"));
        }
        positive(&mut issues, "rho", self.rho);
        if let Some(link) = self.link {
            positive(&mut issues, "link.signal_power", link.signal_power);
            positive(&mut issues, "link.noise_power", link.noise_power);
        }
        for (k, &v) in self.noise_grid.iter().enumerate() {
            positive(&mut issues, &format!("noise_grid[{k}]"), v);
        }
        if let Some(s) = self.sample_step {
            positive(&mut issues, "sample_step", s);
        }
        if self.max_updates == Some(0) {
            issues.push(Issue::new("max_updates", "must be at least 1"));
        }
        if self.outputs.dir.as_os_str().is_empty() {
            issues.push(Issue::new("outputs.dir", "must not be empty"));
        }
        let names = [
            ("outputs.trace_csv", &self.outputs.trace_csv),
            ("outputs.summary_json", &self.outputs.summary_json),
            ("outputs.config_echo", &self.outputs.config_echo),
            ("outputs.series_csv", &self.outputs.series_csv),
        ];
        for (field, name) in names {
            if name.is_empty() || name.contains(['/', '\\']) {
                issues.push(Issue::new(field, "must be a plain file name"));
            }
        }
        for (i, (fa, a)) in names.iter().enumerate() {
            if names[..i].iter().any(|(_, b)| b == a) {
                issues.push(Issue::new(*fa, format!("duplicates another output name \"{a}\"")));
            }
        }
        if self.outputs.trace_replicas == Some(0) {
            issues.push(Issue::new("outputs.trace_replicas", "must be at least 1 when given"));
        }

        let sweep = self.sweep.clone().unwrap_or_default();
        match self.experiment {
            ExperimentKind::Static | ExperimentKind::SizeSweep => {
                if self.alpha != 1.0 {
                    issues.push(Issue::new("alpha", "static experiments keep every cluster active (alpha = 1)"));
                }
                if self.horizon.is_some() {
                    warnings.push("horizon is ignored by static experiments".into());
                }
                if self.experiment == ExperimentKind::SizeSweep {
                    if sweep.sizes.is_empty() {
                        issues.push(Issue::new("sweep.sizes", "a size sweep needs at least one size"));
                    }
                    if sweep.sizes.contains(&0) {
                        issues.push(Issue::new("sweep.sizes", "sizes must be at least 1"));
                    }
                } else if !sweep.sizes.is_empty() {
                    issues.push(Issue::new("sweep.sizes", "only used by size_sweep experiments"));
                }
                if !sweep.switching_rates.is_empty() {
                    issues.push(Issue::new("sweep.switching_rates", "only used by variance_sweep experiments"));
                }
            }
            ExperimentKind::Relaxation | ExperimentKind::VarianceSweep => {
                if !matches!(self.scheduler, SchedulerKind::PoissonClock { .. }) {
                    issues.push(Issue::new("scheduler.kind", "time-varying experiments run on the poisson_clock"));
                }
                match self.horizon {
                    None => issues.push(Issue::new("horizon", "required for time-varying experiments")),
                    Some(h) => positive(&mut issues, "horizon", h),
                }
                if let Some(w) = self.warmup {
                    if !(w >= 0.0 && self.horizon.is_none_or(|h| w < h)) {
                        issues.push(Issue::new("warmup", format!("must lie in [0, horizon), got {w}")));
                    }
                }
                if !sweep.sizes.is_empty() {
                    issues.push(Issue::new("sweep.sizes", "only used by size_sweep experiments"));
                }
                if self.experiment == ExperimentKind::VarianceSweep {
                    if sweep.switching_rates.is_empty() {
                        issues.push(Issue::new("sweep.switching_rates", "a variance sweep needs at least one rate"));
                    }
                    for (k, &q) in sweep.switching_rates.iter().enumerate() {
                        if !(0.0..=1.0).contains(&q) {
                            issues.push(Issue::new(
                                format!("sweep.switching_rates[{k}]"),
                                format!("must lie in [0, 1], got {q}"),
                            ));
                        }
                    }
                    if self.alpha != 1.0 {
                        warnings.push("alpha is ignored; each sweep point sets 1 - switching_rate".into());
                    }
                } else if !sweep.switching_rates.is_empty() {
                    issues.push(Issue::new("sweep.switching_rates", "only used by variance_sweep experiments"));
                }
            }
        }
        if self.experiment == ExperimentKind::Static && self.outputs.trace_replicas.is_some_and(|t| t > self.replicas) {
            warnings.push("outputs.trace_replicas exceeds replicas".into());
        }

        let sizes = self.sizes(file_clusters);
        if sizes.iter().flatten().any(|&n| self.r > n) {
            warnings.push(format!("r = {} exceeds the number of clusters at some point", self.r));
        }
        if !issues.is_empty() {
            return Err(CliError::Validation(issues));
        }

        let clusters = sizes.last().copied().flatten();
        let mut points = Vec::new();
        let (mut tau, mut warmup, mut step) = (None, None, None);
        if let Some(n) = clusters {
            tau = Some(self.tau_for(n));
            step = Some(self.resolved_step(n));
            if self.is_dynamic() {
                let w = self.resolved_warmup(n);
                if self.horizon.is_some_and(|h| w >= h) {
                    return Err(CliError::single(
                        "warmup",
                        format!("default warmup {w} is not below the horizon"),
                    ));
                }
                warmup = Some(w);
                for alpha in self.alphas() {
                    let lambda = lambda_from_alpha(alpha, n, self.tau_for(n))
                        .map_err(|e| CliError::single("alpha", e.to_string()))?;
                    let margin = stability_margin(alpha, self.rho)
                        .map_err(|e| CliError::single("rho", e.to_string()))?;
                    if margin >= 1.0 {
                        warnings.push(format!(
                            "alpha = {alpha}: stability margin {margin} >= 1, predicted variance diverges"
                        ));
                    }
                    warnings.extend(self.dynamics(n, alpha).warnings());
                    points.push(DerivedPoint { alpha, lambda, margin });
                }
            }
        }
        Ok(ValidationReport {
            derived: Derived {
                clusters,
                tau,
                warmup,
                sample_step: step,
                points,
            },
            warnings,
        })
    }
}
