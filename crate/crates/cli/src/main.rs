use clap::Parser;
use forecast_market_cli::cli::{Cli, Command, PlotKind};
use forecast_market_cli::run::{self, CommandOutput, RunOptions};
use forecast_market_cli::scenario::Scenario;
use forecast_market_cli::CliError;
use std::path::Path;
use std::process::ExitCode;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help and --version print and succeed; real parse errors
            // are usage problems.
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

fn execute(cli: Cli) -> Result<(), CliError> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::Validation("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Validation(format!("--jobs: {e}")))?;
    }
    let opts = RunOptions {
        seed: cli.seed,
        grid_size: cli.grid_size,
        full_precision: cli.full_precision,
    };

    let output = match &cli.command {
        Command::Score { scenario } => run::score(&load(scenario)?, opts)?,
        Command::Aggregate { scenario } => run::aggregate(&load(scenario)?, opts)?,
        Command::Settle { scenario } => run::settle(&load(scenario)?, opts)?,
        Command::Simulate { scenario } => run::simulate(&load(scenario)?, dir_of(scenario), opts)?,
        Command::CheckProperties {
            sessions,
            environments,
            samples,
        } => run::check_properties(cli.seed, *sessions, *environments, *samples)?,
        Command::EmitPlotData {
            scenario,
            kind,
            points,
            mesh_steps,
        } => {
            let s = load(scenario)?;
            match kind {
                PlotKind::Density => run::plot_density(&s, opts, *points)?,
                PlotKind::Scores => run::plot_scores(&s, dir_of(scenario), opts)?,
                PlotKind::PayoffVsWager => {
                    run::plot_payoff_vs_wager(&s, dir_of(scenario), opts, *mesh_steps)?
                }
            }
        }
    };
    emit(&output, cli.output.as_deref())?;
    match output.failure {
        None => Ok(()),
        Some(detail) => Err(CliError::PropertyFailure(detail)),
    }
}

fn load(path: &Path) -> Result<Scenario, CliError> {
    Scenario::load(path)
}

fn dir_of(path: &Path) -> &Path {
    path.parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."))
}

fn emit(output: &CommandOutput, target: Option<&Path>) -> Result<(), CliError> {
    match target {
        None => {
            print!("{}", output.stdout);
            Ok(())
        }
        Some(path) => std::fs::write(path, &output.stdout)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display()))),
    }
}
