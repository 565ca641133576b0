//! Scenario files: the TOML schema, parsing, and validation.
//!
//! Scenarios use explicit keys throughout (no positional records) so that
//! table reproductions stay auditable — every number in a shipped file is
//! visible next to its name. Numbers are parsed as full-precision
//! doubles. Validation happens at parse time and reports the offending
//! field; everything downstream can assume a well-formed scenario.

use crate::CliError;
use forecast_market::properties::censored_normal_grid;
use forecast_market::{
    AggregationMethod, ClientSpec, ContinuousDist, GridSpec, MarketConfig, Outcome,
    PredictiveReport, QuantileGrid, ScoringRule, UtilityMode, WagerBounds,
};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Grid resolution used when a scenario does not pin one.
pub const DEFAULT_GRID_SIZE: usize = 999;

/// How the scenario drives settlement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioMode {
    /// Players carry published oriented scores; settle straight from them.
    Scores,
    /// Players carry reports; one outcome is observed and settled.
    Single,
    /// Quantile forecasts and observations per hour come from CSV files;
    /// every hour settles as an independent session.
    Hourly,
}

/// One market session as described on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct Scenario {
    pub task: String,
    pub mode: ScenarioMode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub market: Option<MarketSection>,
    pub utility: UtilitySection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub client: Option<ClientSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bounds: Option<BoundsSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scores: Option<ScoresSection>,
    pub players: Vec<PlayerSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub outcome: Option<OutcomeSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hourly: Option<HourlySection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expected: Option<ExpectedSection>,
}

/// Scoring rule, pooling method, and grid resolution for report-driven
/// modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct MarketSection {
    pub scoring_rule: ScoringRule,
    pub aggregation: AggregationMethod,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_size: Option<usize>,
}

/// The utility rule funding the client-paid pool.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum UtilitySection {
    #[serde(rename_all = "kebab-case")]
    Proportional {
        reward_rate: f64,
    },
    Exogenous {
        pool: f64,
    },
}

impl UtilitySection {
    pub fn to_mode(self) -> UtilityMode {
        match self {
            UtilitySection::Proportional { reward_rate } => {
                UtilityMode::Proportional { reward_rate }
            }
            UtilitySection::Exogenous { pool } => UtilityMode::Exogenous { pool },
        }
    }
}

/// The client's own reference report and posted reward rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ClientSection {
    pub report: ReportSpec,
    pub reward_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct BoundsSection {
    pub lo: f64,
    pub hi: f64,
}

/// Pre-scored settlement inputs (scores mode): the client's own oriented
/// score and the aggregate's.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ScoresSection {
    pub client: f64,
    pub aggregate: f64,
}

/// One player: id, wager, and — depending on mode — a report or a score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct PlayerSection {
    pub id: String,
    pub wager: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<ReportSpec>,
}

/// CSV inputs for hourly mode, relative to the scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct HourlySection {
    pub forecasts: String,
    pub observations: String,
    /// Hourly client forecasts; when absent the static `[client]` report
    /// stands in every hour.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub client_forecasts: Option<String>,
}

/// The observed outcome, exactly one field set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct OutcomeSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub binary: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub category: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub real: Option<f64>,
}

impl OutcomeSpec {
    pub fn to_outcome(self) -> Result<Outcome, CliError> {
        match (self.binary, self.category, self.real) {
            (Some(b), None, None) => Ok(Outcome::Binary(b)),
            (None, Some(j), None) => Ok(Outcome::Category(j)),
            (None, None, Some(x)) => Ok(Outcome::Real(x)),
            _ => Err(CliError::Validation(
                "outcome: set exactly one of `binary`, `category`, `real`".into(),
            )),
        }
    }

    pub fn from_outcome(outcome: &Outcome) -> Self {
        let mut spec = OutcomeSpec {
            binary: None,
            category: None,
            real: None,
        };
        match outcome {
            Outcome::Binary(b) => spec.binary = Some(*b),
            Outcome::Category(j) => spec.category = Some(*j),
            Outcome::Real(x) => spec.real = Some(*x),
        }
        spec
    }
}

/// Expected values embedded in shipped scenarios; runs re-verify them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ExpectedSection {
    /// Absolute tolerance on currency amounts.
    pub tolerance: f64,
    /// Per-player profits in `[[players]]` order (scores/single mode).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub profits: Option<Vec<f64>>,
    /// Per-player profits summed over all hours (hourly mode).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub total_profits: Option<Vec<f64>>,
    /// Oriented score of the delivered aggregate (single mode).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub aggregate_score: Option<f64>,
    /// Absolute tolerance on scores; defaults to 1e-4.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub score_tolerance: Option<f64>,
}

/// A forecast report as written in scenario files: one flat table with a
/// `form` tag and the parameters spelled out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "kebab-case")]
pub enum ReportSpec {
    Binary {
        prob: f64,
    },
    Categorical {
        probs: Vec<f64>,
    },
    #[serde(rename_all = "kebab-case")]
    Beta {
        alpha: f64,
        beta: f64,
    },
    #[serde(rename_all = "kebab-case")]
    Normal {
        mean: f64,
        std_dev: f64,
    },
    /// A normal censored onto `[0, 1]`: materialized as a quantile grid
    /// with atoms at the ends.
    #[serde(rename_all = "kebab-case")]
    CensoredNormal {
        mean: f64,
        std_dev: f64,
    },
    Uniform {
        lo: f64,
        hi: f64,
    },
    /// Explicit quantile grid. Taus must match the session grid (they are
    /// snapped onto it after a 1e-9 check, keeping aggregation bitwise).
    Grid {
        taus: Vec<f64>,
        values: Vec<f64>,
        #[serde(skip_serializing_if = "Option::is_none")]
        support: Option<(f64, f64)>,
    },
}

impl ReportSpec {
    /// Materialize against the session grid, validating as we go.
    pub fn to_report(&self, spec: GridSpec, context: &str) -> Result<PredictiveReport, CliError> {
        let report = match self {
            ReportSpec::Binary { prob } => PredictiveReport::Binary { prob: *prob },
            ReportSpec::Categorical { probs } => PredictiveReport::Categorical {
                probs: probs.clone(),
            },
            ReportSpec::Beta { alpha, beta } => {
                PredictiveReport::Continuous(ContinuousDist::Beta {
                    alpha: *alpha,
                    beta: *beta,
                })
            }
            ReportSpec::Normal { mean, std_dev } => {
                PredictiveReport::Continuous(ContinuousDist::Normal {
                    mean: *mean,
                    std_dev: *std_dev,
                })
            }
            ReportSpec::CensoredNormal { mean, std_dev } => {
                let normal = ContinuousDist::Normal {
                    mean: *mean,
                    std_dev: *std_dev,
                };
                if let Some(e) = normal.validate().into_iter().next() {
                    return Err(CliError::Validation(format!("{context}: {e}")));
                }
                censored_normal_grid(*mean, *std_dev, spec)
            }
            ReportSpec::Uniform { lo, hi } => {
                PredictiveReport::Continuous(ContinuousDist::Uniform { lo: *lo, hi: *hi })
            }
            ReportSpec::Grid {
                taus,
                values,
                support,
            } => {
                let reference = spec.taus();
                if taus.len() != spec.size {
                    return Err(CliError::Validation(format!(
                        "{context}: grid has {} taus, session grid needs {}",
                        taus.len(),
                        spec.size
                    )));
                }
                for (k, (&got, &want)) in taus.iter().zip(&reference).enumerate() {
                    if (got - want).abs() > 1e-9 {
                        return Err(CliError::Validation(format!(
                            "{context}: tau #{k} is {got}, session grid has {want}"
                        )));
                    }
                }
                let grid = QuantileGrid::new(reference, values.clone(), *support)
                    .map_err(|e| CliError::Validation(format!("{context}: {e}")))?;
                PredictiveReport::Continuous(ContinuousDist::Grid(grid))
            }
        };
        let errs = report.validate();
        if let Some(e) = errs.into_iter().next() {
            return Err(CliError::Validation(format!("{context}: {e}")));
        }
        Ok(report)
    }

    /// The file-side form of an in-memory report (used when generating
    /// scenarios programmatically).
    pub fn from_report(report: &PredictiveReport) -> Self {
        match report {
            PredictiveReport::Binary { prob } => ReportSpec::Binary { prob: *prob },
            PredictiveReport::Categorical { probs } => ReportSpec::Categorical {
                probs: probs.clone(),
            },
            PredictiveReport::Continuous(dist) => match dist {
                ContinuousDist::Beta { alpha, beta } => ReportSpec::Beta {
                    alpha: *alpha,
                    beta: *beta,
                },
                ContinuousDist::Normal { mean, std_dev } => ReportSpec::Normal {
                    mean: *mean,
                    std_dev: *std_dev,
                },
                ContinuousDist::Uniform { lo, hi } => ReportSpec::Uniform { lo: *lo, hi: *hi },
                ContinuousDist::Grid(g) => ReportSpec::Grid {
                    taus: g.taus().to_vec(),
                    values: g.values().to_vec(),
                    support: g.support(),
                },
            },
        }
    }
}

impl Scenario {
    /// Parse and validate a scenario file. Read failures are I/O errors;
    /// everything about the content is a validation error.
    pub fn load(path: &Path) -> Result<Scenario, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let scenario: Scenario = toml::from_str(&text)
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("scenario serializes")
    }

    /// The session grid: the scenario's `grid-size` unless overridden on
    /// the command line.
    pub fn grid_spec(&self, override_size: Option<usize>) -> Result<GridSpec, CliError> {
        let size = override_size
            .or_else(|| self.market.as_ref().and_then(|m| m.grid_size))
            .unwrap_or(DEFAULT_GRID_SIZE);
        GridSpec::new(size).map_err(|e| CliError::Validation(e.to_string()))
    }

    /// Market config for report-driven modes.
    pub fn market_config(&self, override_size: Option<usize>) -> Result<MarketConfig, CliError> {
        let market = self
            .market
            .as_ref()
            .expect("validated: market present in report-driven modes");
        Ok(MarketConfig {
            scoring_rule: market.scoring_rule,
            aggregation: market.aggregation,
            utility_mode: self.utility.to_mode(),
            grid_spec: self.grid_spec(override_size)?,
        })
    }

    pub fn client_spec(&self, spec: GridSpec) -> Result<ClientSpec, CliError> {
        let client = self
            .client
            .as_ref()
            .expect("validated: client present in report-driven modes");
        Ok(ClientSpec {
            task_id: self.task.clone(),
            own_report: client.report.to_report(spec, "client.report")?,
            reward_rate: client.reward_rate,
        })
    }

    pub fn wager_bounds(&self) -> Result<WagerBounds, CliError> {
        let b = self
            .bounds
            .as_ref()
            .expect("validated: bounds present in report-driven modes");
        WagerBounds::new(b.lo, b.hi).map_err(|e| CliError::Validation(e.to_string()))
    }

    /// Check mode-appropriate structure; `load` runs this on every file,
    /// and programmatically built scenarios can call it directly.
    pub fn validate(&self) -> Result<(), CliError> {
        let fail = |msg: String| Err(CliError::Validation(msg));
        if self.task.is_empty() {
            return fail("task: must not be empty".into());
        }
        if self.players.is_empty() {
            return fail("players: at least one player is required".into());
        }
        for (i, p) in self.players.iter().enumerate() {
            if !valid_id(&p.id) {
                return fail(format!(
                    "players[{i}].id: `{}` — use letters, digits, `-`, `_`, `.`",
                    p.id
                ));
            }
            if !p.wager.is_finite() || p.wager <= 0.0 {
                return fail(format!(
                    "players[{i}].wager: must be positive, got {}",
                    p.wager
                ));
            }
            if let Some(dup) = self.players[..i].iter().find(|q| q.id == p.id) {
                return fail(format!("players[{i}].id: `{}` already used", dup.id));
            }
        }
        if let Some(b) = &self.bounds {
            if !(b.lo.is_finite() && b.hi.is_finite() && 0.0 < b.lo && b.lo <= b.hi) {
                return fail(format!(
                    "bounds: need 0 < lo <= hi, got [{}, {}]",
                    b.lo, b.hi
                ));
            }
            for (i, p) in self.players.iter().enumerate() {
                if p.wager < b.lo || p.wager > b.hi {
                    return fail(format!(
                        "players[{i}].wager: {} outside bounds [{}, {}]",
                        p.wager, b.lo, b.hi
                    ));
                }
            }
        }
        match self.utility {
            UtilitySection::Proportional { reward_rate } => {
                if !reward_rate.is_finite() || reward_rate <= 0.0 {
                    return fail(format!(
                        "utility.reward-rate: must be positive, got {reward_rate}"
                    ));
                }
                if let Some(c) = &self.client {
                    if c.reward_rate != reward_rate {
                        return fail(format!(
                            "utility.reward-rate {} must equal client.reward-rate {}",
                            reward_rate, c.reward_rate
                        ));
                    }
                }
            }
            UtilitySection::Exogenous { pool } => {
                if !pool.is_finite() || pool < 0.0 {
                    return fail(format!("utility.pool: must be nonnegative, got {pool}"));
                }
            }
        }
        if let Some(c) = &self.client {
            if !c.reward_rate.is_finite() || c.reward_rate <= 0.0 {
                return fail(format!(
                    "client.reward-rate: must be positive, got {}",
                    c.reward_rate
                ));
            }
        }
        if let Some(e) = &self.expected {
            if !e.tolerance.is_finite() || e.tolerance <= 0.0 {
                return fail(format!(
                    "expected.tolerance: must be positive, got {}",
                    e.tolerance
                ));
            }
            for (name, values) in [("profits", &e.profits), ("total-profits", &e.total_profits)] {
                if let Some(v) = values {
                    if v.len() != self.players.len() {
                        return fail(format!(
                            "expected.{name}: {} values for {} players",
                            v.len(),
                            self.players.len()
                        ));
                    }
                }
            }
        }

        match self.mode {
            ScenarioMode::Scores => self.validate_scores_mode(),
            ScenarioMode::Single => self.validate_single_mode(),
            ScenarioMode::Hourly => self.validate_hourly_mode(),
        }
    }

    fn validate_scores_mode(&self) -> Result<(), CliError> {
        let fail = |msg: &str| Err(CliError::Validation(format!("scores mode: {msg}")));
        if self.scores.is_none() {
            return fail("a [scores] section with `client` and `aggregate` is required");
        }
        for section in [
            ("market", self.market.is_some()),
            ("client", self.client.is_some()),
            ("bounds", self.bounds.is_some()),
            ("outcome", self.outcome.is_some()),
            ("hourly", self.hourly.is_some()),
        ] {
            if section.1 {
                return fail(&format!("the [{}] section does not apply", section.0));
            }
        }
        let s = self.scores.as_ref().unwrap();
        for (name, v) in [("client", s.client), ("aggregate", s.aggregate)] {
            if !(0.0..=1.0).contains(&v) {
                return fail(&format!("scores.{name} must lie in [0, 1], got {v}"));
            }
        }
        for (i, p) in self.players.iter().enumerate() {
            match p.score {
                None => {
                    return fail(&format!("players[{i}].score is required"));
                }
                Some(s) if !(0.0..=1.0).contains(&s) => {
                    return fail(&format!("players[{i}].score must lie in [0, 1], got {s}"));
                }
                _ => {}
            }
            if p.report.is_some() {
                return fail(&format!("players[{i}].report does not apply"));
            }
        }
        Ok(())
    }

    fn validate_single_mode(&self) -> Result<(), CliError> {
        let fail = |msg: &str| Err(CliError::Validation(format!("single mode: {msg}")));
        for (name, present) in [
            ("market", self.market.is_some()),
            ("client", self.client.is_some()),
            ("bounds", self.bounds.is_some()),
            ("outcome", self.outcome.is_some()),
        ] {
            if !present {
                return fail(&format!("the [{name}] section is required"));
            }
        }
        for (name, absent) in [
            ("scores", self.scores.is_none()),
            ("hourly", self.hourly.is_none()),
        ] {
            if !absent {
                return fail(&format!("the [{name}] section does not apply"));
            }
        }
        self.outcome.unwrap().to_outcome()?;
        for (i, p) in self.players.iter().enumerate() {
            if p.report.is_none() {
                return fail(&format!("players[{i}].report is required"));
            }
            if p.score.is_some() {
                return fail(&format!("players[{i}].score does not apply"));
            }
        }
        Ok(())
    }

    fn validate_hourly_mode(&self) -> Result<(), CliError> {
        let fail = |msg: &str| Err(CliError::Validation(format!("hourly mode: {msg}")));
        for (name, present) in [
            ("market", self.market.is_some()),
            ("client", self.client.is_some()),
            ("bounds", self.bounds.is_some()),
            ("hourly", self.hourly.is_some()),
        ] {
            if !present {
                return fail(&format!("the [{name}] section is required"));
            }
        }
        for (name, absent) in [
            ("scores", self.scores.is_none()),
            ("outcome", self.outcome.is_none()),
        ] {
            if !absent {
                return fail(&format!("the [{name}] section does not apply"));
            }
        }
        for (i, p) in self.players.iter().enumerate() {
            if p.report.is_some() || p.score.is_some() {
                return fail(&format!(
                    "players[{i}]: forecasts come from the CSV; only id and wager apply"
                ));
            }
        }
        Ok(())
    }
}

fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}
