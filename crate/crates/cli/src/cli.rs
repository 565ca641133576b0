//! Command-line surface: subcommands and global flags.

use clap::{Parser, Subcommand, ValueEnum};
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(
    name = "forecast-market",
    about = "Wagering market for probabilistic forecasts: score, pool, settle, and verify.",
    version
)]
pub struct Cli {
    /// Seed for anything randomized (property generators, Monte Carlo).
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Override the quantile grid resolution for continuous reports.
    #[arg(long, global = true)]
    pub grid_size: Option<usize>,

    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    /// Append shortest round-trip columns next to the rounded ones.
    #[arg(long, global = true)]
    pub full_precision: bool,

    /// Write output to a file instead of stdout.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score every report in a single-mode scenario against its outcome.
    Score { scenario: PathBuf },
    /// Print the pooled forecast a single-mode scenario delivers.
    Aggregate { scenario: PathBuf },
    /// Settle one session (scores or single mode) and print payoffs.
    Settle { scenario: PathBuf },
    /// Run an hourly scenario: settle every hour, then total per player.
    Simulate { scenario: PathBuf },
    /// Verify the market's economic guarantees on generated sessions.
    CheckProperties {
        /// Sessions for the exact checks (budget balance, anonymity,
        /// sybilproofness, stimulant).
        #[arg(long, default_value_t = 1000)]
        sessions: u64,
        /// Environments for the Monte Carlo incentive checks; 0 skips them.
        #[arg(long, default_value_t = 0)]
        environments: u64,
        /// Monte Carlo samples per incentive check.
        #[arg(long, default_value_t = 50_000)]
        samples: usize,
    },
    /// Emit plain CSV series for plotting.
    EmitPlotData {
        scenario: PathBuf,
        #[arg(long, value_enum)]
        kind: PlotKind,
        /// Grid points for `--kind density`.
        #[arg(long, default_value_t = 201)]
        points: usize,
        /// Wager mesh resolution per axis for `--kind payoff-vs-wager`.
        #[arg(long, default_value_t = 8)]
        mesh_steps: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PlotKind {
    /// Density curve of the delivered aggregate (single mode).
    Density,
    /// Per-hour oriented scores (hourly mode).
    Scores,
    /// Payoff share across a two-player wager mesh.
    PayoffVsWager,
}
