use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use needle_steer::commands::{cmd_run, cmd_simulate, cmd_study};
use needle_steer::config::{strategy, StrategyKind, TaskKind};
use needle_steer::{CliError, RunConfiguration};

/// Needle insertion simulator and shape-manipulation study runner.
#[derive(Parser)]
#[command(name = "needle-steer", version)]
struct Cli {
    /// TOML run configuration; defaults are used when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    Path,
    Point,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    #[value(alias = "data-driven")]
    Data,
    #[value(alias = "mechanics")]
    Mech,
}

#[derive(Subcommand)]
enum Command {
    /// Straight open-loop insertion to a depth.
    Simulate {
        /// Insertion depth, mm.
        #[arg(long)]
        depth: f64,
        /// Lateral offset of base and template at entry, mm.
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        offset: f64,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// One control run to a biopsy target.
    Run {
        /// Target number, 1-12.
        #[arg(long)]
        target: u8,
        #[arg(long, value_enum)]
        task: TaskArg,
        /// Defaults to the configured strategy.
        #[arg(long, value_enum)]
        strategy: Option<StrategyArg>,
        /// Model μ multiplier of the mechanics strategy.
        #[arg(long)]
        scale: Option<f64>,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Full study matrix; writes summary.csv and one trajectory per cell.
    Study {
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Print the effective configuration as TOML.
    PrintConfig,
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let config = RunConfiguration::load_or_default(cli.config.as_deref())?;
    let out_dir =
        |out: Option<PathBuf>| out.unwrap_or_else(|| config.experiment.output_dir.clone());
    match cli.command {
        Command::Simulate { depth, offset, out } => {
            cmd_simulate(&config, depth, offset, &out_dir(out))?;
        }
        Command::Run {
            target,
            task,
            strategy: kind,
            scale,
            out,
        } => {
            let kind = match kind {
                Some(StrategyArg::Data) => StrategyKind::Data,
                Some(StrategyArg::Mech) => StrategyKind::Mech,
                None => config.controller.strategy,
            };
            let scale = scale.unwrap_or(config.controller.scale);
            if !(scale > 0.0 && scale.is_finite()) {
                return Err(CliError::Usage(format!(
                    "scale must be positive, got {scale}"
                )));
            }
            let task = match task {
                TaskArg::Path => TaskKind::Path,
                TaskArg::Point => TaskKind::Point,
            };
            cmd_run(
                &config,
                target,
                task.into(),
                strategy(kind, scale),
                &out_dir(out),
            )?;
        }
        Command::Study { out } => {
            cmd_study(&config, &out_dir(out))?;
        }
        Command::PrintConfig => print!("{}", config.to_toml()),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
