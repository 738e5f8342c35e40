use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use fdi_cli::presets::PRESETS;
use fdi_cli::{batch, load_config, preset, run, validate_only, ScenarioConfig};

const EXIT_USAGE: u8 = 1;
const EXIT_INADMISSIBLE: u8 = 2;
const EXIT_SIM_FAILURE: u8 = 3;

/// Simulate false-data-injection attacks on an ACC vehicle in a mixed platoon.
///
/// SCENARIO arguments are either a preset name (see `fdi presets`) or a path
/// to a JSON config.
#[derive(Parser)]
#[command(name = "fdi", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one scenario and write trajectory, plot data and summary.
    Run {
        scenario: String,
        /// Output directory [default: config `output.dir`, else out/<name>].
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the integration step (s).
        #[arg(long)]
        dt: Option<f64>,
        /// Skip the SVG charts.
        #[arg(long)]
        no_svg: bool,
    },
    /// Classify the declared attacks without simulating. Exits with status 2
    /// if any attack is inadmissible.
    Validate {
        scenario: String,
        /// Print the verdicts as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Run several scenarios, each into its own directory.
    Batch {
        #[arg(required = true)]
        scenarios: Vec<String>,
        #[arg(long, default_value = "out/batch")]
        out: PathBuf,
        /// Number of worker threads.
        #[arg(long, short = 'j', default_value_t = 4)]
        parallelism: usize,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        no_svg: bool,
    },
    /// Print a scenario as a JSON config.
    DumpConfig {
        scenario: String,
        /// Write to a file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the built-in scenarios.
    Presets,
}

fn resolve(arg: &str, dt: Option<f64>) -> anyhow::Result<ScenarioConfig> {
    let mut cfg = match preset(arg) {
        Some(cfg) => cfg,
        None => {
            let path = Path::new(arg);
            if !path.exists() {
                bail!("`{arg}` is neither a preset nor an existing file (see `fdi presets`)");
            }
            load_config(path)?
        }
    };
    if let Some(dt) = dt {
        cfg.dt = dt;
        cfg.prepare()
            .with_context(|| format!("{arg} with --dt {dt}"))?;
    }
    Ok(cfg)
}

fn execute(cli: Cli) -> anyhow::Result<u8> {
    match cli.command {
        Command::Run {
            scenario,
            out,
            dt,
            no_svg,
        } => {
            let mut cfg = resolve(&scenario, dt)?;
            cfg.output.svg &= !no_svg;
            let dir = out
                .or_else(|| cfg.output.dir.clone())
                .unwrap_or_else(|| Path::new("out").join(&cfg.name));
            let summary = run(&cfg, &dir)?;
            print!("{summary}");
            println!("output: {}", dir.display());
            Ok(if summary.failure.is_some() {
                EXIT_SIM_FAILURE
            } else {
                0
            })
        }
        Command::Validate { scenario, json } => {
            let cfg = resolve(&scenario, None)?;
            let outcome = validate_only(&cfg)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&outcome)?);
            } else {
                print!("{outcome}");
            }
            Ok(if outcome.any_inadmissible() {
                EXIT_INADMISSIBLE
            } else {
                0
            })
        }
        Command::Batch {
            scenarios,
            out,
            parallelism,
            dt,
            no_svg,
        } => {
            let configs = scenarios
                .iter()
                .map(|s| {
                    let mut cfg = resolve(s, dt)?;
                    cfg.output.svg &= !no_svg;
                    Ok(cfg)
                })
                .collect::<anyhow::Result<Vec<_>>>()?;
            let items = batch(&configs, parallelism, &out)?;
            let mut code = 0;
            for item in items {
                match item.result {
                    Ok(summary) => {
                        let asv = summary
                            .metrics
                            .as_ref()
                            .map_or("n/a".into(), |m| format!("{:.6}", m.asv));
                        let status = match &summary.failure {
                            Some(e) => {
                                code = EXIT_SIM_FAILURE;
                                format!("FAILED: {e}")
                            }
                            None => "ok".into(),
                        };
                        println!(
                            "{:<12} ASV {asv:>10}  collisions {:>2}  {status}  -> {}",
                            item.name,
                            summary.collisions.len(),
                            item.dir.display()
                        );
                    }
                    Err(e) => {
                        code = EXIT_SIM_FAILURE;
                        println!("{:<12} error: {e}", item.name);
                    }
                }
            }
            Ok(code)
        }
        Command::DumpConfig { scenario, out } => {
            let cfg = resolve(&scenario, None)?;
            let json = cfg.to_json();
            match out {
                Some(path) => std::fs::write(&path, json)
                    .with_context(|| format!("cannot write {}", path.display()))?,
                None => print!("{json}"),
            }
            Ok(0)
        }
        Command::Presets => {
            for (name, about) in PRESETS {
                println!("{name:<10} {about}");
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match execute(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}
