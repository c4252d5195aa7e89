//! Configs reproducing the published figure data.

use std::path::PathBuf;

use freqalloc_core::allocation::{InitialAssignment, SchedulerKind};
use freqalloc_core::dynamics::DEFAULT_RHO;

use crate::config::{ExperimentConfig, ExperimentKind, Outputs, Sweep, TopologySpec};

pub const PRESETS: [&str; 8] = ["fig2a", "fig2b", "fig2c", "fig3", "fig4a", "fig4b", "fig5", "fig6"];

const BASE_SEED: u64 = 1;
/// `tau = 1` for a hundred clusters.
const DELTA_T: f64 = 0.01;

fn base(name: &str, experiment: ExperimentKind, topology: TopologySpec, r: usize, replicas: usize) -> ExperimentConfig {
    ExperimentConfig {
        name: name.to_string(),
        experiment,
        topology,
        r,
        eta: 2.0,
        p0: 1.0,
        initial_assignment: InitialAssignment::AllFirst,
        scheduler: SchedulerKind::PoissonClock { delta_t: DELTA_T },
        alpha: 1.0,
        horizon: None,
        warmup: None,
        replicas,
        base_seed: BASE_SEED,
        rho: DEFAULT_RHO,
        link: None,
        noise_grid: Vec::new(),
        sample_step: None,
        max_updates: None,
        sweep: None,
        outputs: Outputs {
            dir: PathBuf::from("out").join(name),
            trace_csv: "trace.csv".into(),
            summary_json: "summary.json".into(),
            config_echo: "config.json".into(),
            series_csv: "series.csv".into(),
            trace_replicas: None,
        },
    }
}

fn ula(n: usize) -> TopologySpec {
    TopologySpec::UniformLinear { n, d: 1.0 }
}

fn static_capacity(name: &str, topology: TopologySpec, r: usize) -> ExperimentConfig {
    let mut c = base(name, ExperimentKind::Static, topology, r, 5);
    c.noise_grid = vec![0.01, 0.05, 0.2, 0.5];
    c.sample_step = Some(0.05);
    c
}

fn size_sweep(name: &str, topology: TopologySpec, r: usize, sizes: Vec<usize>, replicas: usize) -> ExperimentConfig {
    let mut c = base(name, ExperimentKind::SizeSweep, topology, r, replicas);
    c.sweep = Some(Sweep {
        sizes,
        switching_rates: Vec::new(),
    });
    c.outputs.trace_replicas = Some(1);
    c
}

/// The named preset, or `None` for an unknown name.
pub fn preset(name: &str) -> Option<ExperimentConfig> {
    let lattice = |hex: bool| {
        if hex {
            TopologySpec::Hexagonal { rows: 10, cols: 10, d: 1.0 }
        } else {
            TopologySpec::Rectangular { rows: 10, cols: 10, d: 1.0 }
        }
    };
    Some(match name {
        "fig2a" => static_capacity(name, ula(100), 2),
        "fig2b" => static_capacity(name, lattice(false), 4),
        "fig2c" => static_capacity(name, lattice(true), 4),
        "fig3" => size_sweep(name, ula(100), 2, (1..=10).map(|k| 10 * k).collect(), 20),
        "fig4a" => size_sweep(name, lattice(false), 4, (2..=10).collect(), 5),
        "fig4b" => size_sweep(name, lattice(true), 4, (2..=10).collect(), 5),
        "fig5" => {
            let mut c = base(name, ExperimentKind::Relaxation, ula(100), 2, 500);
            c.horizon = Some(10.0);
            c.sample_step = Some(0.01);
            c.outputs.trace_replicas = Some(1);
            c
        }
        "fig6" => {
            let mut c = base(name, ExperimentKind::VarianceSweep, ula(100), 2, 500);
            // the slowest activity chain relaxes over delta_t / (2 q) = 5 time units
            c.warmup = Some(25.0);
            c.horizon = Some(50.0);
            c.sample_step = Some(0.05);
            c.sweep = Some(Sweep {
                sizes: Vec::new(),
                switching_rates: vec![0.001, 0.002, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.3],
            });
            c.outputs.trace_replicas = Some(1);
            c
        }
        _ => return None,
    })
}
