use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vfm_cli::commands::{cmd_detect, cmd_report, cmd_run, cmd_simulate, cmd_tune};
use vfm_cli::config::{Case, StudyConfig};
use vfm_cli::tune::hyper_table_markdown;
use vfm_cli::CliError;

#[derive(Parser)]
#[command(name = "vfm", version, about = "Passive learning studies for virtual flow meter models")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Study configuration (TOML); defaults apply to missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `out_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Global seed; overrides `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Restrict to one case.
    #[arg(long, global = true)]
    case: Option<Case>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic well streams as CSV.
    Simulate,
    /// Search optimizer settings per model and method.
    Tune,
    /// Run the full study: initial fits, batch and online learning, metrics.
    Run,
    /// Estimate update frequencies with the Hotelling T² scan.
    Detect,
    /// Recompute metrics from the logs of a previous run.
    Report,
    /// Print the configuration.
    Config {
        /// Print the built-in defaults instead of the resolved configuration.
        #[arg(long)]
        defaults: bool,
    },
}

fn resolve(c: &Common) -> Result<StudyConfig, CliError> {
    let mut cfg = match &c.config {
        Some(p) => StudyConfig::load(p)?,
        None => StudyConfig::default(),
    };
    if let Some(out) = &c.out {
        cfg.out_dir = out.clone();
    }
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    if let Some(case) = c.case {
        cfg.cases = vec![case];
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Command::Config { defaults: true } = cli.command {
        print!("{}", StudyConfig::default().to_toml());
        return Ok(());
    }
    let cfg = resolve(&cli.common)?;
    match cli.command {
        Command::Simulate => {
            for p in cmd_simulate(&cfg, &cfg.out_dir)? {
                println!("{}", p.display());
            }
        }
        Command::Tune => {
            let outcome = cmd_tune(&cfg, &cfg.out_dir)?;
            for &case in &cfg.cases {
                println!("Case: {}\n", case.title());
                println!("{}", hyper_table_markdown(&cfg, &outcome.hyper, case));
            }
        }
        Command::Run => {
            for r in cmd_run(&cfg, &cfg.out_dir)? {
                println!("Case: {} (MAPE %)\n{}", r.case.title(), r.table.to_text());
            }
        }
        Command::Detect => {
            for (case, rows) in cmd_detect(&cfg, &cfg.out_dir)? {
                println!("Case: {}", case.title());
                for row in rows {
                    match row.report {
                        Ok(r) => match r.estimated_tau {
                            Some(tau) => println!("  well {}: shift after {:.1} days", row.well_id, tau as f64 / 86_400.0),
                            None => println!("  well {}: no confirmed shift", row.well_id),
                        },
                        Err(e) => println!("  well {}: skipped ({e})", row.well_id),
                    }
                }
            }
        }
        Command::Report => {
            for (case, table) in cmd_report(&cfg, &cfg.out_dir)? {
                println!("Case: {} (MAPE %)\n{}", case.title(), table.to_text());
            }
        }
        Command::Config { .. } => print!("{}", cfg.to_toml()),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            // usage mistakes count as configuration errors
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("vfm: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
