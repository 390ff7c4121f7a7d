use std::io::Write;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use runoff_cli::commands::{cmd_elect, cmd_oracle, cmd_report, cmd_top2, cmd_update, TableOutput};
use runoff_cli::config::Overrides;
use runoff_cli::{CliError, ExitStatus, RunConfig};

/// Exact first- and second-round probabilities from opinion polls.
///
/// Exit status: 0 success, 1 input or parse error, 2 a kernel missed its
/// quadrature tolerance, 3 the Monte Carlo oracle disagrees (|z| > 4).
#[derive(Debug, Parser)]
#[command(name = "runoff", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Chain the polls in --polls into posteriors and write --store.
    Update(Overrides),
    /// Write top2.csv, elected.csv and scenarios.csv for every poll date.
    Report(Overrides),
    /// Print election probabilities for one date.
    Elect(Overrides),
    /// Print top-two pair probabilities for one date.
    Top2(Overrides),
    /// Compare every kernel of the latest report with Monte Carlo.
    Oracle(Overrides),
}

fn print_table(out: TableOutput) -> Result<(), CliError> {
    std::io::stdout()
        .write_all(&out.table)
        .map_err(|e| CliError::Input(format!("stdout: {e}")))?;
    if out.failures > 0 {
        return Err(CliError::Convergence {
            count: out.failures,
        });
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Update(flags) => {
            let config = RunConfig::resolve(&flags)?;
            let s = cmd_update(&config)?;
            eprintln!(
                "wrote {} posteriors in {} chains to {}",
                s.records,
                s.chains,
                config.store.display()
            );
        }
        Command::Report(flags) => {
            let config = RunConfig::resolve(&flags)?;
            let s = cmd_report(&config)?;
            eprintln!(
                "{} reports; wrote {} to {}",
                s.reports.len(),
                s.files.join(", "),
                config.out.display()
            );
        }
        Command::Elect(flags) => print_table(cmd_elect(&RunConfig::resolve(&flags)?)?)?,
        Command::Top2(flags) => print_table(cmd_top2(&RunConfig::resolve(&flags)?)?)?,
        Command::Oracle(flags) => {
            let config = RunConfig::resolve(&flags)?;
            let s = cmd_oracle(&config)?;
            eprintln!(
                "{} comparisons, max |z| = {:.2}; wrote {}",
                s.rows.len(),
                s.max_abs_z,
                config
                    .out
                    .join(runoff_cli::commands::ORACLE_TABLE)
                    .display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("runoff: {e}");
            let status = e.exit_status();
            debug_assert_ne!(status, ExitStatus::Ok);
            ExitCode::from(status as u8)
        }
    }
}
