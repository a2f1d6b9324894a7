//! `evfl`: generate fleets, run federated experiments, sweep and render tables.
//!
//! Exit codes: 0 success, 1 invalid input, 2 failure while running. Errors
//! are printed to stderr as one line: `error: <validation|runtime>: <message>`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use evfl_core::experiment::{
    cmd_gen_data, cmd_report, cmd_run, cmd_sweep, parse_override, ExperimentConfig, SweepAxis,
};
use evfl_core::Error;

#[derive(Debug, Parser)]
#[command(
    name = "evfl",
    version,
    about = "Federated energy-consumption experiments for electric vehicle fleets"
)]
struct Cli {
    /// Flat dotted-key TOML config file.
    #[arg(long, short, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Override one config key, e.g. `--set fl.rounds=30`. Repeatable; applied after the file.
    #[arg(long = "set", short = 's', global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the synthetic fleet as one CSV per vehicle into `data.dir`.
    GenData,
    /// Run the configured experiment into `output.dir`.
    Run,
    /// One run per value along an axis, combined into one table.
    Sweep {
        /// rounds, split or window.
        #[arg(long)]
        axis: String,
        /// Comma-separated values, e.g. `15,30,45,60` or `4:1:5,5:1:4`.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
    },
    /// Render report.json / sweep.json files (or their directories) as tables.
    Report {
        #[arg(required = true, value_name = "PATH")]
        paths: Vec<PathBuf>,
        /// Also write `table_<n>.csv` and `tables.txt` here.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let overrides = cli
        .overrides
        .iter()
        .map(|o| parse_override(o))
        .collect::<Result<Vec<_>, _>>()?;
    ExperimentConfig::load(cli.config.as_deref(), &overrides)
}

fn execute(cli: &Cli) -> Result<(), Error> {
    if let Command::Report { paths, out } = &cli.command {
        print!("{}", cmd_report(paths, out.as_deref())?);
        return Ok(());
    }
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::GenData => {
            for path in cmd_gen_data(&cfg)? {
                println!("{}", path.display());
            }
        }
        Command::Run => {
            let reports = cmd_run(&cfg)?;
            let dirs: Vec<PathBuf> = if reports.len() == 1 {
                vec![cfg.output_dir.clone()]
            } else {
                reports
                    .iter()
                    .map(|r| cfg.output_dir.join(&r.groups[0].name))
                    .collect()
            };
            print!("{}", cmd_report(&dirs, None)?);
        }
        Command::Sweep { axis, values } => {
            let axis: SweepAxis = axis.parse()?;
            cmd_sweep(&cfg, axis, values)?;
            print!(
                "{}",
                cmd_report(std::slice::from_ref(&cfg.output_dir), None)?
            );
        }
        Command::Report { .. } => unreachable!("handled above"),
    }
    Ok(())
}

fn one_line(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or_default();
            eprintln!(
                "error: validation: {}",
                one_line(first.trim_start_matches("error: "))
            );
            return ExitCode::from(1);
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (kind, code) = if e.is_validation() {
                ("validation", 1)
            } else {
                ("runtime", 2)
            };
            eprintln!("error: {kind}: {}", one_line(&e.to_string()));
            ExitCode::from(code)
        }
    }
}
