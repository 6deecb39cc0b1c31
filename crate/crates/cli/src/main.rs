use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use kirchhoff::comparison::suite::LemmaInstance;
use kirchhoff::energies::compute_constants;
use kirchhoff::harness::{self, OUTPUT_ROOT_ENV};
use kirchhoff::rates::{FitMode, Quantity};

#[derive(Parser)]
#[command(name = "kirchhoff", version, about = "Damped Kirchhoff equation experiments")]
struct Cli {
    /// Root for relative output directories.
    #[arg(long, global = true, env = OUTPUT_ROOT_ENV)]
    output_root: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario file.
    Simulate { config: PathBuf },
    /// Run a scenario file with a [sweep] table over its grid.
    Sweep { config: PathBuf },
    /// Fit a power law to one column of a trajectory CSV.
    Fit {
        csv: PathBuf,
        #[arg(long, default_value = "a12u2")]
        quantity: Quantity,
        /// `lo,hi`; defaults to the last two decades.
        #[arg(long, value_parser = parse_window)]
        window: Option<(f64, f64)>,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
    },
    /// Run the randomized comparison-bound suites, or replay saved instances.
    VerifyLemmas {
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        count: usize,
        /// JSON file with one instance or a list of them.
        #[arg(long, conflicts_with_all = ["seed", "count"])]
        replay: Option<PathBuf>,
    },
    /// Print the estimate constants for a scenario's data.
    Constants { config: PathBuf },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum ModeArg {
    Point,
    Envelope,
}

fn parse_window(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected `lo,hi`")?;
    let parse = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("`{x}`: {e}"));
    Ok((parse(a)?, parse(b)?))
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn run(cli: Cli) -> Result<bool> {
    if let Some(root) = &cli.output_root {
        std::env::set_var(OUTPUT_ROOT_ENV, root);
    }
    match cli.command {
        Command::Simulate { config } => {
            let cfg = harness::load_config(&config).with_context(|| format!("loading {}", config.display()))?;
            let manifest = harness::run_scenario(&cfg)?;
            for f in &manifest.failures {
                eprintln!("FAIL {f}");
            }
            eprintln!(
                "{} -> {} ({:.2} s)",
                cfg.name,
                cfg.resolved_output_dir().display(),
                manifest.wall_clock.total_s
            );
            Ok(manifest.passed)
        }
        Command::Sweep { config } => {
            let text = std::fs::read_to_string(&config).with_context(|| format!("reading {}", config.display()))?;
            let sweep = harness::parse_sweep(&text)?;
            let report = harness::run_sweep(&sweep)?;
            for c in report.cells.iter().filter(|c| !c.passed) {
                eprintln!(
                    "FAIL cell {} {:?}: {}",
                    c.index,
                    c.overrides,
                    c.error.as_deref().unwrap_or("")
                );
            }
            eprintln!("{} cells -> {}", report.cells.len(), report.aggregate.display());
            Ok(report.passed())
        }
        Command::Fit {
            csv,
            quantity,
            window,
            mode,
        } => {
            let mode = match mode {
                Some(ModeArg::Point) => FitMode::PointFit,
                Some(ModeArg::Envelope) => FitMode::EnvelopeFit,
                None => quantity.default_mode(),
            };
            print_json(&harness::fit_csv(&csv, quantity, window, mode)?)?;
            Ok(true)
        }
        Command::VerifyLemmas { seed, count, replay } => {
            if let Some(path) = replay {
                let text = std::fs::read_to_string(&path)?;
                let value: serde_json::Value = serde_json::from_str(&text)?;
                let list: Vec<LemmaInstance> = match value {
                    serde_json::Value::Array(_) => serde_json::from_value(value)?,
                    single => vec![serde_json::from_value(single)?],
                };
                let outcomes = list.iter().map(|i| i.evaluate()).collect::<Result<Vec<_>, _>>()?;
                let ok = outcomes.iter().all(|o| o.passed);
                print_json(&outcomes)?;
                return Ok(ok);
            }
            let report = harness::verify_lemmas(seed, count)?;
            print_json(&report)?;
            if !report.passed() {
                let instances: Vec<_> = report.failures.iter().map(|f| &f.instance).collect();
                let path = std::env::var_os(OUTPUT_ROOT_ENV)
                    .map(PathBuf::from)
                    .unwrap_or_default()
                    .join(format!("lemma_failures_seed{seed}.json"));
                std::fs::write(&path, serde_json::to_string_pretty(&instances)?)?;
                eprintln!(
                    "{} failing instances saved to {} (replay with --replay)",
                    instances.len(),
                    path.display()
                );
            }
            Ok(report.passed())
        }
        Command::Constants { config } => {
            let cfg = harness::load_config(&config)?;
            if !cfg.mode.hyperbolic() {
                bail!("constants are defined for hyperbolic scenarios");
            }
            let (u0, u1) = cfg.initial_data()?;
            let c = compute_constants(&cfg.params()?, &cfg.operator()?, &u0, &u1, cfg.theorem_mode()?)?;
            print_json(&c)?;
            if let Some(eps) = cfg.epsilon {
                if eps > c.eps0 {
                    eprintln!("note: epsilon = {eps} exceeds eps0 = {}", c.eps0);
                }
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
