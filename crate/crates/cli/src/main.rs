use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use freqalloc_cli::config::TopologySpec;
use freqalloc_cli::output::pretty_json;
use freqalloc_cli::presets::{preset, PRESETS};
use freqalloc_cli::{load_config, run_experiment, CliError, OUT_DIR_ENV};

#[derive(Parser)]
#[command(name = "freqalloc", version, about = "Distributed frequency allocation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config and write its result files.
    Run { config: PathBuf },
    /// Check a config without running it.
    Validate { config: PathBuf },
    /// Print a figure-reproduction config.
    Preset {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(PRESETS))]
        name: String,
        /// Write to this file instead of stdout.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

fn base_dir(config: &Path) -> PathBuf {
    config.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn validate(path: &Path) -> Result<(), CliError> {
    let cfg = load_config(path)?;
    cfg.validate()?;
    let clusters = match cfg.topology {
        TopologySpec::File { .. } => Some(cfg.topology.build(cfg.p0, cfg.eta, cfg.base_seed, &base_dir(path))?.len()),
        _ => None,
    };
    let report = cfg.validate_with(clusters)?;
    println!("{}: valid", path.display());
    let d = &report.derived;
    if let Some(n) = d.clusters {
        println!("  clusters: {n}");
    }
    if let Some(tau) = d.tau {
        println!("  tau: {tau}");
    }
    if let Some(w) = d.warmup {
        println!("  warmup: {w}");
    }
    for p in &d.points {
        println!("  alpha {}: lambda {}, stability margin {}", p.alpha, p.lambda, p.margin);
    }
    for w in &report.warnings {
        println!("warning: {w}");
    }
    Ok(())
}

fn run(path: &Path) -> Result<(), CliError> {
    let cfg = load_config(path)?;
    let out = std::env::var_os(OUT_DIR_ENV).map(PathBuf::from);
    let result = run_experiment(&cfg, &base_dir(path), out.as_deref())?;
    for w in &result.summary.validation.warnings {
        eprintln!("warning: {w}");
    }
    for f in &result.files {
        println!("{}", f.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run { config } => run(&config),
        Command::Validate { config } => validate(&config),
        Command::Preset { name, output } => {
            let text = pretty_json(&preset(&name).expect("clap restricts preset names"));
            match output {
                Some(p) => std::fs::write(&p, text).map_err(|e| CliError::io(&p, e)),
                None => {
                    print!("{text}");
                    Ok(())
                }
            }
        }
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let CliError::Runtime { record: Some(r), .. } = &e {
                eprintln!("failure record: {r}");
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
