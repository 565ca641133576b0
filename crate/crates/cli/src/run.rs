//! Scenario execution and output rendering.
//!
//! Every renderer emits delimited tabular text with a header row and a
//! stable column order, so outputs are byte-identical across runs given
//! the same scenario and flags. Display tables round currency to 2
//! decimals and scores to 4; `--full-precision` appends shortest
//! round-trip columns. Data outputs (aggregates, plot data) always carry
//! full precision.

use crate::hourly::{self, HourlyData};
use crate::scenario::{Scenario, ScenarioMode};
use crate::CliError;
use forecast_market::properties::{
    check_client_truthfulness, check_individual_rationality, random_environment, run_exact_suite,
};
use forecast_market::{
    cdf_eval, oriented_score, settle_scores, ContinuousDist, MarketSession, Outcome,
    PlayerSubmission, PredictiveReport, Settlement,
};
use std::fmt::Write as _;
use std::path::Path;

/// Global flags that affect execution.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub seed: u64,
    pub grid_size: Option<usize>,
    pub full_precision: bool,
}

/// Rendered output plus an optional property failure: the table is still
/// printed, then the process exits with the property-check code.
#[derive(Debug, Clone, PartialEq)]
pub struct CommandOutput {
    pub stdout: String,
    pub failure: Option<String>,
}

impl CommandOutput {
    fn ok(stdout: String) -> Self {
        CommandOutput {
            stdout,
            failure: None,
        }
    }
}

fn money(x: f64) -> String {
    format!("{x:.2}")
}

fn score4(x: f64) -> String {
    format!("{x:.4}")
}

/// Shortest representation that parses back to the same double.
fn full(x: f64) -> String {
    format!("{x:?}")
}

// ============================================================================
// settle
// ============================================================================

/// Build and settle a single-mode session against its outcome.
fn settle_single(scenario: &Scenario, opts: RunOptions) -> Result<Settlement, CliError> {
    let session = build_session(scenario, opts)?;
    let outcome = scenario
        .outcome
        .expect("validated: outcome present")
        .to_outcome()?;
    Ok(session.settle(&outcome)?)
}

/// Open the session described by a single-mode scenario and deliver its
/// aggregate.
pub fn build_session(scenario: &Scenario, opts: RunOptions) -> Result<MarketSession, CliError> {
    let spec = scenario.grid_spec(opts.grid_size)?;
    let config = scenario.market_config(opts.grid_size)?;
    let client = scenario.client_spec(spec)?;
    let mut session = MarketSession::open(config, client, scenario.wager_bounds()?)?;
    for (i, p) in scenario.players.iter().enumerate() {
        let report = p
            .report
            .as_ref()
            .expect("validated: report present")
            .to_report(spec, &format!("players[{i}].report"))?;
        session.submit(PlayerSubmission {
            player_id: p.id.clone(),
            report,
            wager: p.wager,
        })?;
    }
    session.deliver_aggregate()?;
    Ok(session)
}

fn settle_from_scores(scenario: &Scenario) -> Result<Settlement, CliError> {
    let scores = scenario.scores.expect("validated: scores present");
    Ok(settle_scores(
        scenario.players.iter().map(|p| p.id.clone()).collect(),
        scenario.players.iter().map(|p| p.wager).collect(),
        scenario
            .players
            .iter()
            .map(|p| p.score.expect("validated: score present"))
            .collect(),
        scores.client,
        scores.aggregate,
        &scenario.utility.to_mode(),
    )?)
}

/// The `settle` subcommand: one settlement table plus a summary block,
/// then the embedded expectations.
pub fn settle(scenario: &Scenario, opts: RunOptions) -> Result<CommandOutput, CliError> {
    let settlement = match scenario.mode {
        ScenarioMode::Scores => settle_from_scores(scenario)?,
        ScenarioMode::Single => settle_single(scenario, opts)?,
        ScenarioMode::Hourly => {
            return Err(CliError::Validation(
                "hourly scenarios settle via `simulate`".into(),
            ))
        }
    };
    let mut out = String::new();
    header(&mut out, opts, HEADER_SETTLE, 1);
    out.push_str(&render_settlement_table(&settlement, opts, None));
    out.push('\n');
    render_settlement_summary(&mut out, &settlement, opts);
    let failure = check_expected_profits(scenario, &settlement.profits(), "profits");
    Ok(CommandOutput {
        stdout: out,
        failure,
    })
}

fn render_settlement_table(settlement: &Settlement, opts: RunOptions, hour: Option<u32>) -> String {
    let mut out = String::new();
    let profits = settlement.profits();
    for (i, id) in settlement.player_ids.iter().enumerate() {
        let cells = [
            settlement.wagers[i],
            settlement.player_scores[i],
            settlement.wager_payoffs[i],
            settlement.utility_shares[i],
            settlement.total_payoffs[i],
            profits[i],
        ];
        row(&mut out, opts, hour, id, &cells, &[1]);
    }
    out
}

const HEADER_SETTLE: &str = "entity,wager,score,wager-payoff,utility-share,total-payoff,profit";

/// Write the header, with `-full` twins of the value columns appended
/// under --full-precision; the first `label_cols` columns are labels.
fn header(out: &mut String, opts: RunOptions, base: &str, label_cols: usize) {
    out.push_str(base);
    if opts.full_precision {
        for name in base.split(',').skip(label_cols) {
            let _ = write!(out, ",{name}-full");
        }
    }
    out.push('\n');
}

/// One table row: display-rounded cells (indices in `score_cols` use the
/// 4-decimal score format, others currency), then full-precision twins.
fn row(
    out: &mut String,
    opts: RunOptions,
    hour: Option<u32>,
    entity: &str,
    cells: &[f64],
    score_cols: &[usize],
) {
    if let Some(h) = hour {
        let _ = write!(out, "{h},");
    }
    out.push_str(entity);
    for (i, &v) in cells.iter().enumerate() {
        let text = if score_cols.contains(&i) {
            score4(v)
        } else {
            money(v)
        };
        let _ = write!(out, ",{text}");
    }
    if opts.full_precision {
        for &v in cells {
            let _ = write!(out, ",{}", full(v));
        }
    }
    out.push('\n');
}

fn render_settlement_summary(out: &mut String, settlement: &Settlement, opts: RunOptions) {
    header(out, opts, "summary,value", 1);
    let rows = [
        ("client-score", settlement.client_score, true),
        ("aggregate-score", settlement.aggregate_score, true),
        ("utility-pool", settlement.utility_pool, false),
        ("refunded-to-client", settlement.refunded_to_client, false),
        ("total-wagered", settlement.total_wagered(), false),
    ];
    for (name, v, is_score) in rows {
        let text = if is_score { score4(v) } else { money(v) };
        out.push_str(name);
        let _ = write!(out, ",{text}");
        if opts.full_precision {
            let _ = write!(out, ",{}", full(v));
        }
        out.push('\n');
    }
    // residuals are diagnostics; always shortest full precision
    let _ = writeln!(
        out,
        "budget-residual,{}",
        full(settlement.budget_residual())
    );
    let _ = writeln!(
        out,
        "wager-zero-sum-residual,{}",
        full(settlement.wager_zero_sum_residual())
    );
}

fn check_expected_profits(scenario: &Scenario, profits: &[f64], which: &str) -> Option<String> {
    let expected = scenario.expected.as_ref()?;
    let wanted = match which {
        "profits" => expected.profits.as_ref()?,
        _ => expected.total_profits.as_ref()?,
    };
    let mut drifts = Vec::new();
    for (i, (&got, &want)) in profits.iter().zip(wanted).enumerate() {
        if (got - want).abs() > expected.tolerance {
            drifts.push(format!(
                "expected.{which}[{i}] ({}): wanted {want}, got {got} (tolerance {})",
                scenario.players[i].id, expected.tolerance
            ));
        }
    }
    if drifts.is_empty() {
        None
    } else {
        Some(drifts.join("\n"))
    }
}

// ============================================================================
// score
// ============================================================================

/// The `score` subcommand: oriented scores of every player, the client,
/// and the delivered aggregate, for a single-mode scenario.
pub fn score(scenario: &Scenario, opts: RunOptions) -> Result<CommandOutput, CliError> {
    if scenario.mode != ScenarioMode::Single {
        return Err(CliError::Validation(
            "`score` needs a single-mode scenario (reports plus an outcome)".into(),
        ));
    }
    let spec = scenario.grid_spec(opts.grid_size)?;
    let rule = scenario.market_config(opts.grid_size)?.scoring_rule;
    let session = build_session(scenario, opts)?;
    let outcome = scenario.outcome.unwrap().to_outcome()?;

    let mut out = String::new();
    header(&mut out, opts, "entity,score", 1);
    let mut emit = |entity: &str, value: f64| {
        out.push_str(entity);
        let _ = write!(out, ",{}", score4(value));
        if opts.full_precision {
            let _ = write!(out, ",{}", full(value));
        }
        out.push('\n');
    };
    for sub in session.submissions() {
        emit(
            &sub.player_id,
            oriented_score(rule, &sub.report, &outcome, spec)?,
        );
    }
    emit(
        "client",
        oriented_score(rule, &session.client().own_report, &outcome, spec)?,
    );
    emit(
        "aggregate",
        oriented_score(
            rule,
            session.aggregate_report().expect("delivered"),
            &outcome,
            spec,
        )?,
    );
    Ok(CommandOutput::ok(out))
}

// ============================================================================
// aggregate
// ============================================================================

/// The `aggregate` subcommand: the delivered aggregate report as data
/// rows — `prob` for binary, `category,prob` for categorical, `tau,value`
/// for continuous. Always full precision.
pub fn aggregate(scenario: &Scenario, opts: RunOptions) -> Result<CommandOutput, CliError> {
    if scenario.mode != ScenarioMode::Single {
        return Err(CliError::Validation(
            "`aggregate` needs a single-mode scenario".into(),
        ));
    }
    let spec = scenario.grid_spec(opts.grid_size)?;
    let session = build_session(scenario, opts)?;
    let mut out = String::new();
    match session.aggregate_report().expect("delivered") {
        PredictiveReport::Binary { prob } => {
            let _ = writeln!(out, "prob\n{}", full(*prob));
        }
        PredictiveReport::Categorical { probs } => {
            out.push_str("category,prob\n");
            for (j, p) in probs.iter().enumerate() {
                let _ = writeln!(out, "{},{}", j + 1, full(*p));
            }
        }
        PredictiveReport::Continuous(dist) => {
            let grid = forecast_market::to_quantile_grid(dist, spec)?;
            out.push_str("tau,value\n");
            for (t, v) in grid.taus().iter().zip(grid.values()) {
                let _ = writeln!(out, "{},{}", full(*t), full(*v));
            }
        }
    }
    Ok(CommandOutput::ok(out))
}

// ============================================================================
// simulate
// ============================================================================

/// One settled hour plus the hour label.
pub struct HourRecord {
    pub hour: u32,
    pub settlement: Settlement,
}

/// Run every hour of an hourly scenario as an independent session.
pub fn run_hourly(
    scenario: &Scenario,
    data: &HourlyData,
    opts: RunOptions,
    wager_override: Option<&[f64]>,
) -> Result<Vec<HourRecord>, CliError> {
    let spec = scenario.grid_spec(opts.grid_size)?;
    let config = scenario.market_config(opts.grid_size)?;
    let static_client = scenario.client_spec(spec)?;
    let bounds = scenario.wager_bounds()?;
    let mut records = Vec::with_capacity(data.hours.len());
    for (h, &hour) in data.hours.iter().enumerate() {
        let mut client = static_client.clone();
        if let Some(per_hour) = &data.client_reports {
            client.own_report = per_hour[h].clone();
        }
        let mut session = MarketSession::open(config, client, bounds)?;
        for (i, p) in scenario.players.iter().enumerate() {
            let wager = wager_override.map_or(p.wager, |w| w[i]);
            session.submit(PlayerSubmission {
                player_id: p.id.clone(),
                report: data.player_reports[i][h].clone(),
                wager,
            })?;
        }
        session.deliver_aggregate()?;
        let settlement = session.settle(&Outcome::Real(data.observations[h]))?;
        records.push(HourRecord { hour, settlement });
    }
    Ok(records)
}

/// The `simulate` subcommand: per-hour settlement rows, per-player
/// totals, and a run summary. Fails (exit code 2) when any hour breaks
/// budget balance or the embedded expected totals drift.
pub fn simulate(
    scenario: &Scenario,
    scenario_dir: &Path,
    opts: RunOptions,
) -> Result<CommandOutput, CliError> {
    if scenario.mode != ScenarioMode::Hourly {
        return Err(CliError::Validation(
            "`simulate` needs an hourly scenario".into(),
        ));
    }
    let spec = scenario.grid_spec(opts.grid_size)?;
    let data = hourly::load(scenario, scenario_dir, spec)?;
    let records = run_hourly(scenario, &data, opts, None)?;

    let mut out = String::new();
    header(&mut out, opts, &format!("hour,{HEADER_SETTLE}"), 2);
    for rec in &records {
        out.push_str(&render_settlement_table(
            &rec.settlement,
            opts,
            Some(rec.hour),
        ));
        // the client and delivered aggregate earn scores but hold no stake
        let s = &rec.settlement;
        let _ = write!(out, "{},client,,{},,,,", rec.hour, score4(s.client_score));
        if opts.full_precision {
            let _ = write!(out, ",,{},,,,", full(s.client_score));
        }
        out.push('\n');
        let _ = write!(
            out,
            "{},aggregate,,{},,,,",
            rec.hour,
            score4(s.aggregate_score)
        );
        if opts.full_precision {
            let _ = write!(out, ",,{},,,,", full(s.aggregate_score));
        }
        out.push('\n');
    }
    out.push('\n');

    // per-player totals across the day
    header(&mut out, opts, "entity,total-payoff,total-profit", 1);
    let n = scenario.players.len();
    let mut failure_notes = Vec::new();
    let mut total_profits = Vec::with_capacity(n);
    for (i, p) in scenario.players.iter().enumerate() {
        let payoff: f64 = records.iter().map(|r| r.settlement.total_payoffs[i]).sum();
        let profit: f64 = records.iter().map(|r| r.settlement.profits()[i]).sum();
        total_profits.push(profit);
        row(&mut out, opts, None, &p.id, &[payoff, profit], &[]);
    }
    out.push('\n');

    // run summary
    header(&mut out, opts, "summary,value", 1);
    let hours = records.len();
    let distributed: f64 = records
        .iter()
        .map(|r| r.settlement.distributed_utility())
        .sum();
    let max_residual = records
        .iter()
        .map(|r| r.settlement.budget_residual())
        .fold(0.0f64, f64::max);
    let _ = writeln!(out, "hours,{hours}");
    out.push_str("utility-distributed,");
    out.push_str(&money(distributed));
    if opts.full_precision {
        let _ = write!(out, ",{}", full(distributed));
    }
    out.push('\n');
    let _ = writeln!(out, "max-hour-budget-residual,{}", full(max_residual));

    for rec in &records {
        let residual = rec.settlement.budget_residual();
        if residual >= 1e-9 {
            failure_notes.push(format!(
                "hour {}: budget residual {residual:.3e} breaches 1e-9",
                rec.hour
            ));
        }
    }
    if let Some(drift) = check_expected_profits(scenario, &total_profits, "total-profits") {
        failure_notes.push(drift);
    }
    Ok(CommandOutput {
        stdout: out,
        failure: if failure_notes.is_empty() {
            None
        } else {
            Some(failure_notes.join("\n"))
        },
    })
}

// ============================================================================
// check-properties
// ============================================================================

/// The `check-properties` subcommand: the exact suite over generated
/// sessions (one record per property per session), then — when requested
/// — the Monte Carlo incentive checks over generated environments. Exit
/// code 2 when an exact check fails or an incentive check passes in
/// fewer than 95% of environments.
pub fn check_properties(
    seed: u64,
    sessions: u64,
    environments: u64,
    samples: usize,
) -> Result<CommandOutput, CliError> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record(["session", "property", "pass", "residual", "detail"])
        .expect("in-memory write");
    let results = run_exact_suite(seed, sessions);
    let mut exact_failures = 0u64;
    for r in &results {
        for p in &r.reports {
            exact_failures += u64::from(!p.pass);
            writer
                .write_record([
                    r.index.to_string(),
                    p.property.to_string(),
                    p.pass.to_string(),
                    p.residual.map_or_else(String::new, full),
                    p.detail.clone(),
                ])
                .expect("in-memory write");
        }
    }
    let mut out = String::from_utf8(writer.into_inner().expect("flushed")).expect("utf8");
    let mut failures = Vec::new();
    if exact_failures > 0 {
        failures.push(format!(
            "{exact_failures} exact check(s) failed over {sessions} sessions"
        ));
    }

    if environments > 0 {
        use rayon::prelude::*;
        let checks: Vec<(u64, Vec<forecast_market::PropertyReport>)> = (0..environments)
            .into_par_iter()
            .map(|index| {
                let env = random_environment(seed, index);
                let check_seed = forecast_market::properties::derive_seed(seed, index) ^ 0x3C;
                let ir = check_individual_rationality(
                    &env.template,
                    &env.belief,
                    env.wager,
                    samples,
                    check_seed,
                )
                .expect("valid environment");
                let client = check_client_truthfulness(
                    &env.template,
                    &env.belief,
                    &env.alt,
                    samples,
                    check_seed ^ 0xC11E,
                )
                .expect("valid environment");
                (index, vec![ir, client])
            })
            .collect();

        let mut mc = csv::Writer::from_writer(Vec::new());
        mc.write_record([
            "environment",
            "property",
            "pass",
            "estimate",
            "halfwidth",
            "seed",
        ])
        .expect("in-memory write");
        let mut pass_counts = [0u64; 2];
        for (index, reports) in &checks {
            for (slot, p) in reports.iter().enumerate() {
                pass_counts[slot] += u64::from(p.pass);
                mc.write_record([
                    index.to_string(),
                    p.property.to_string(),
                    p.pass.to_string(),
                    p.estimate.map_or_else(String::new, full),
                    p.halfwidth.map_or_else(String::new, full),
                    p.seed.map_or_else(String::new, |s| s.to_string()),
                ])
                .expect("in-memory write");
            }
        }
        out.push('\n');
        out.push_str(&String::from_utf8(mc.into_inner().expect("flushed")).expect("utf8"));
        let threshold = (environments as f64 * 0.95).ceil() as u64;
        for (slot, name) in [(0, "individual-rationality"), (1, "client-truthfulness")] {
            if pass_counts[slot] < threshold {
                failures.push(format!(
                    "{name}: {}/{} environments passed, need {threshold}",
                    pass_counts[slot], environments
                ));
            }
        }
    }

    Ok(CommandOutput {
        stdout: out,
        failure: if failures.is_empty() {
            None
        } else {
            Some(failures.join("\n"))
        },
    })
}

// ============================================================================
// emit-plot-data
// ============================================================================

/// Density curve of the delivered aggregate: `x,pdf` rows on a uniform
/// grid, by central finite difference of the aggregate's CDF.
pub fn plot_density(
    scenario: &Scenario,
    opts: RunOptions,
    points: usize,
) -> Result<CommandOutput, CliError> {
    if scenario.mode != ScenarioMode::Single {
        return Err(CliError::Validation(
            "`--kind density` needs a single-mode scenario".into(),
        ));
    }
    if points < 2 {
        return Err(CliError::Validation("--points must be at least 2".into()));
    }
    let spec = scenario.grid_spec(opts.grid_size)?;
    let session = build_session(scenario, opts)?;
    let dist = match session.aggregate_report().expect("delivered") {
        PredictiveReport::Continuous(d) => d.clone(),
        _ => {
            return Err(CliError::Validation(
                "`--kind density` needs a continuous aggregate".into(),
            ))
        }
    };
    let grid = forecast_market::to_quantile_grid(&dist, spec)?;
    let (lo, hi) = grid
        .support()
        .unwrap_or((grid.values()[0], grid.values()[grid.values().len() - 1]));
    let dist = ContinuousDist::Grid(grid);
    let step = (hi - lo) / (points - 1) as f64;
    let mut out = String::from("x,pdf\n");
    for i in 0..points {
        let x = lo + step * i as f64;
        let pdf = (cdf_eval(&dist, x + 0.5 * step) - cdf_eval(&dist, x - 0.5 * step)) / step;
        let _ = writeln!(out, "{},{}", full(x), full(pdf));
    }
    Ok(CommandOutput::ok(out))
}

/// Per-hour oriented scores of an hourly run: `hour,entity,score` rows.
pub fn plot_scores(
    scenario: &Scenario,
    scenario_dir: &Path,
    opts: RunOptions,
) -> Result<CommandOutput, CliError> {
    if scenario.mode != ScenarioMode::Hourly {
        return Err(CliError::Validation(
            "`--kind scores` needs an hourly scenario".into(),
        ));
    }
    let spec = scenario.grid_spec(opts.grid_size)?;
    let data = hourly::load(scenario, scenario_dir, spec)?;
    let records = run_hourly(scenario, &data, opts, None)?;
    let mut out = String::from("hour,entity,score\n");
    for rec in &records {
        let s = &rec.settlement;
        for (i, id) in s.player_ids.iter().enumerate() {
            let _ = writeln!(out, "{},{},{}", rec.hour, id, full(s.player_scores[i]));
        }
        let _ = writeln!(out, "{},client,{}", rec.hour, full(s.client_score));
        let _ = writeln!(out, "{},aggregate,{}", rec.hour, full(s.aggregate_score));
    }
    Ok(CommandOutput::ok(out))
}

/// Payoff share over a wager mesh for two-player scenarios:
/// `m1,m2,player,share` rows, where share is the player's total payoff
/// divided by the total money flow (wagers plus distributed utility,
/// summed over hours). Re-settles the whole scenario at every mesh point.
pub fn plot_payoff_vs_wager(
    scenario: &Scenario,
    scenario_dir: &Path,
    opts: RunOptions,
    steps: usize,
) -> Result<CommandOutput, CliError> {
    if scenario.players.len() != 2 {
        return Err(CliError::Validation(
            "`--kind payoff-vs-wager` needs exactly two players".into(),
        ));
    }
    if steps < 2 {
        return Err(CliError::Validation(
            "--mesh-steps must be at least 2".into(),
        ));
    }
    let spec = scenario.grid_spec(opts.grid_size)?;
    let (bounds_lo, bounds_hi) = match &scenario.bounds {
        Some(b) => (b.lo, b.hi),
        None => {
            return Err(CliError::Validation(
                "`--kind payoff-vs-wager` needs a [bounds] section".into(),
            ))
        }
    };
    let data = match scenario.mode {
        ScenarioMode::Hourly => hourly::load(scenario, scenario_dir, spec)?,
        ScenarioMode::Single => {
            return plot_payoff_mesh_single(scenario, opts, steps, bounds_lo, bounds_hi)
        }
        ScenarioMode::Scores => {
            return Err(CliError::Validation(
                "`--kind payoff-vs-wager` needs reports (single or hourly mode)".into(),
            ))
        }
    };

    let mesh = mesh_values(bounds_lo, bounds_hi, steps);
    use rayon::prelude::*;
    let cells: Vec<Result<String, CliError>> = mesh
        .iter()
        .flat_map(|&m1| mesh.iter().map(move |&m2| (m1, m2)))
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(m1, m2)| {
            let records = run_hourly(scenario, &data, opts, Some(&[m1, m2]))?;
            Ok(render_mesh_cell(scenario, m1, m2, &records))
        })
        .collect();
    let mut out = String::from("m1,m2,player,share\n");
    for cell in cells {
        out.push_str(&cell?);
    }
    Ok(CommandOutput::ok(out))
}

fn plot_payoff_mesh_single(
    scenario: &Scenario,
    opts: RunOptions,
    steps: usize,
    lo: f64,
    hi: f64,
) -> Result<CommandOutput, CliError> {
    let outcome = scenario
        .outcome
        .expect("validated: outcome present")
        .to_outcome()?;
    let spec = scenario.grid_spec(opts.grid_size)?;
    let config = scenario.market_config(opts.grid_size)?;
    let client = scenario.client_spec(spec)?;
    let bounds = scenario.wager_bounds()?;
    let reports: Vec<PredictiveReport> = scenario
        .players
        .iter()
        .enumerate()
        .map(|(i, p)| {
            p.report
                .as_ref()
                .expect("validated")
                .to_report(spec, &format!("players[{i}].report"))
        })
        .collect::<Result<_, _>>()?;

    let mesh = mesh_values(lo, hi, steps);
    use rayon::prelude::*;
    let cells: Vec<Result<String, CliError>> = mesh
        .iter()
        .flat_map(|&m1| mesh.iter().map(move |&m2| (m1, m2)))
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(m1, m2)| {
            let mut session = MarketSession::open(config, client.clone(), bounds)?;
            for (i, p) in scenario.players.iter().enumerate() {
                session.submit(PlayerSubmission {
                    player_id: p.id.clone(),
                    report: reports[i].clone(),
                    wager: if i == 0 { m1 } else { m2 },
                })?;
            }
            session.deliver_aggregate()?;
            let settlement = session.settle(&outcome)?;
            let records = vec![HourRecord {
                hour: 0,
                settlement,
            }];
            Ok(render_mesh_cell(scenario, m1, m2, &records))
        })
        .collect();
    let mut out = String::from("m1,m2,player,share\n");
    for cell in cells {
        out.push_str(&cell?);
    }
    Ok(CommandOutput::ok(out))
}

fn mesh_values(lo: f64, hi: f64, steps: usize) -> Vec<f64> {
    (0..steps)
        .map(|k| lo + (hi - lo) * k as f64 / (steps - 1) as f64)
        .collect()
}

fn render_mesh_cell(scenario: &Scenario, m1: f64, m2: f64, records: &[HourRecord]) -> String {
    let inflow: f64 = records
        .iter()
        .map(|r| r.settlement.total_wagered() + r.settlement.distributed_utility())
        .sum();
    let mut cell = String::new();
    for (i, p) in scenario.players.iter().enumerate() {
        let payoff: f64 = records.iter().map(|r| r.settlement.total_payoffs[i]).sum();
        let _ = writeln!(
            cell,
            "{},{},{},{}",
            full(m1),
            full(m2),
            p.id,
            full(payoff / inflow)
        );
    }
    cell
}
