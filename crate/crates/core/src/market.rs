//! Market sessions and settlement.
//!
//! A session runs: the client posts a task with their own reference report
//! `r_c` and a reward rate `φ`; players submit reports with wagers inside
//! the posted bounds; the platform delivers the wager-weighted aggregate
//! `r̂` to the client; the outcome `ω` is observed; settlement pays each
//! player
//!
//! ```text
//! Π̂_i = Π_i + share_i
//! Π_i  = m_i · (1 + s_i − Σ_j s_j m_j / Σ_j m_j)        (skill component)
//! share_i = s̃_i m_i / Σ_j s̃_j m_j · U,  s̃_i = 1{s_i > s̄}·s_i   (utility)
//! ```
//!
//! where `s_i = s(r_i, ω)` is the oriented `[0, 1]` score, `s̄ = s(r_c, ω)`
//! the client's own score, and `U` the utility pool — either `φ·(ŝ − s̄)⁺`
//! or a fixed amount released only when the aggregate beats the client.
//! The skill component redistributes the wager pool (zero-sum); the
//! utility component is funded by the client and only ever flows to
//! players who outscored the client's own report. If nobody did, the pool
//! is returned to the client and the settlement records the refund.
//!
//! Per-player sums use canonical-order compensated summation, which makes
//! settlement bitwise anonymous: permuting the submissions permutes the
//! payoffs exactly.

use crate::aggregate::{aggregate, normalize_wagers, AggError, AggregationMethod};
use crate::dist::{ContinuousDist, DistError, GridSpec, Outcome, PredictiveReport, ReportForm};
use crate::numeric::stable_sum;
use crate::scoring::{oriented_score, ScoreError, ScoringRule};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative tolerance for the budget-balance invariant.
pub const BUDGET_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error, Serialize, Deserialize)]
pub enum MarketError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("wager {wager} outside bounds [{lo}, {hi}]")]
    WagerOutOfBounds { wager: f64, lo: f64, hi: f64 },
    #[error("player {0} already submitted")]
    DuplicatePlayer(String),
    #[error("session is closed to submissions")]
    SessionClosed,
    #[error("session not closed: deliver the aggregate before settling")]
    SessionNotClosed,
    #[error("no submissions to aggregate")]
    NoSubmissions,
    #[error("form mismatch: {0}")]
    FormMismatch(String),
    #[error("oriented score {0} outside [0, 1]")]
    ScoreOutOfRange(f64),
    #[error("utility pool is positive but no player outscored the client")]
    AllIneligibleWithPositiveU,
    #[error("invalid submission: {0}")]
    InvalidSubmission(String),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Agg(#[from] AggError),
    #[error(transparent)]
    Dist(#[from] DistError),
}

/// The client side of a session: the task, the client's own reference
/// report `r_c`, and the reward rate `φ` (currency per unit of oriented
/// score improvement).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientSpec {
    pub task_id: String,
    pub own_report: PredictiveReport,
    pub reward_rate: f64,
}

impl ClientSpec {
    pub fn validate(&self) -> Result<(), MarketError> {
        if !self.reward_rate.is_finite() || self.reward_rate <= 0.0 {
            return Err(MarketError::InvalidConfig(format!(
                "reward rate must be positive, got {}",
                self.reward_rate
            )));
        }
        let errs = self.own_report.validate();
        if !errs.is_empty() {
            return Err(MarketError::InvalidConfig(format!(
                "client report invalid: {}",
                errs[0]
            )));
        }
        Ok(())
    }
}

/// One player's forecast report and accompanying wager.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerSubmission {
    pub player_id: String,
    pub report: PredictiveReport,
    pub wager: f64,
}

/// Lower and upper wager bounds posted with the task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WagerBounds {
    pub lo: f64,
    pub hi: f64,
}

impl WagerBounds {
    pub fn new(lo: f64, hi: f64) -> Result<Self, MarketError> {
        let b = WagerBounds { lo, hi };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<(), MarketError> {
        if !(self.lo.is_finite() && self.hi.is_finite() && 0.0 < self.lo && self.lo <= self.hi) {
            return Err(MarketError::InvalidConfig(format!(
                "wager bounds require 0 < lo <= hi, got [{}, {}]",
                self.lo, self.hi
            )));
        }
        Ok(())
    }

    pub fn contains(&self, wager: f64) -> bool {
        wager.is_finite() && self.lo <= wager && wager <= self.hi
    }
}

/// How the utility pool `U` is determined at settlement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UtilityMode {
    /// `U = φ · max(0, ŝ − s̄)`: pay per unit of improvement the aggregate
    /// delivers over the client's own report.
    Proportional { reward_rate: f64 },
    /// A fixed pool, released in full when the aggregate beats the
    /// client's own report and withheld entirely otherwise.
    Exogenous { pool: f64 },
}

/// The mechanism parameters the platform publicly posts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketConfig {
    pub scoring_rule: ScoringRule,
    pub aggregation: AggregationMethod,
    pub utility_mode: UtilityMode,
    pub grid_spec: GridSpec,
}

impl MarketConfig {
    pub fn validate(&self) -> Result<(), MarketError> {
        if !self.scoring_rule.orientable() {
            return Err(MarketError::InvalidConfig(format!(
                "scoring rule `{}` has no [0, 1] orientation and cannot settle",
                self.scoring_rule
            )));
        }
        match self.utility_mode {
            UtilityMode::Proportional { reward_rate } => {
                if !reward_rate.is_finite() || reward_rate <= 0.0 {
                    return Err(MarketError::InvalidConfig(format!(
                        "proportional utility needs a positive reward rate, got {reward_rate}"
                    )));
                }
            }
            UtilityMode::Exogenous { pool } => {
                if !pool.is_finite() || pool < 0.0 {
                    return Err(MarketError::InvalidConfig(format!(
                        "exogenous utility pool must be nonnegative, got {pool}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// A market session moving through open → aggregated → settled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketSession {
    config: MarketConfig,
    client: ClientSpec,
    bounds: WagerBounds,
    submissions: Vec<PlayerSubmission>,
    aggregate: Option<PredictiveReport>,
}

impl MarketSession {
    /// Open a session for submissions. Rejects inconsistent configs: an
    /// unorientable scoring rule, a rule that cannot score the task form,
    /// a proportional mode whose rate disagrees with the client's posted
    /// rate, or invalid bounds.
    pub fn open(
        config: MarketConfig,
        client: ClientSpec,
        bounds: WagerBounds,
    ) -> Result<Self, MarketError> {
        config.validate()?;
        client.validate()?;
        bounds.validate()?;
        if !config.scoring_rule.supports_form(client.own_report.form()) {
            return Err(MarketError::InvalidConfig(format!(
                "rule `{}` cannot score a {:?} task",
                config.scoring_rule,
                client.own_report.form()
            )));
        }
        if let UtilityMode::Proportional { reward_rate } = config.utility_mode {
            if reward_rate != client.reward_rate {
                return Err(MarketError::InvalidConfig(format!(
                    "proportional rate {reward_rate} disagrees with the client's posted rate {}",
                    client.reward_rate
                )));
            }
        }
        Ok(MarketSession {
            config,
            client,
            bounds,
            submissions: Vec::new(),
            aggregate: None,
        })
    }

    pub fn config(&self) -> &MarketConfig {
        &self.config
    }

    pub fn client(&self) -> &ClientSpec {
        &self.client
    }

    pub fn bounds(&self) -> WagerBounds {
        self.bounds
    }

    pub fn submissions(&self) -> &[PlayerSubmission] {
        &self.submissions
    }

    pub fn task_form(&self) -> ReportForm {
        self.client.own_report.form()
    }

    /// Record a submission. Fails once the aggregate has been delivered.
    pub fn submit(&mut self, submission: PlayerSubmission) -> Result<(), MarketError> {
        if self.aggregate.is_some() {
            return Err(MarketError::SessionClosed);
        }
        if !self.bounds.contains(submission.wager) {
            return Err(MarketError::WagerOutOfBounds {
                wager: submission.wager,
                lo: self.bounds.lo,
                hi: self.bounds.hi,
            });
        }
        if self
            .submissions
            .iter()
            .any(|s| s.player_id == submission.player_id)
        {
            return Err(MarketError::DuplicatePlayer(submission.player_id));
        }
        if submission.report.form() != self.task_form() {
            return Err(MarketError::FormMismatch(format!(
                "report form {:?} does not match task form {:?}",
                submission.report.form(),
                self.task_form()
            )));
        }
        let errs = submission.report.validate();
        if !errs.is_empty() {
            return Err(MarketError::InvalidSubmission(format!(
                "report invalid: {}",
                errs[0]
            )));
        }
        if let PredictiveReport::Continuous(ContinuousDist::Grid(g)) = &submission.report {
            if !g.matches_spec(self.config.grid_spec) {
                return Err(MarketError::InvalidSubmission(
                    "grid report does not match the session grid spec".into(),
                ));
            }
        }
        self.submissions.push(submission);
        Ok(())
    }

    /// Close submissions and return the aggregate forecast `r̂` for the
    /// client. Idempotent: later calls return the cached aggregate.
    pub fn deliver_aggregate(&mut self) -> Result<PredictiveReport, MarketError> {
        if let Some(agg) = &self.aggregate {
            return Ok(agg.clone());
        }
        if self.submissions.is_empty() {
            return Err(MarketError::NoSubmissions);
        }
        let reports: Vec<PredictiveReport> =
            self.submissions.iter().map(|s| s.report.clone()).collect();
        let wagers: Vec<f64> = self.submissions.iter().map(|s| s.wager).collect();
        let weights = normalize_wagers(&wagers)?;
        let agg = aggregate(
            self.config.aggregation,
            &reports,
            &weights,
            self.config.grid_spec,
        )?;
        self.aggregate = Some(agg.clone());
        Ok(agg)
    }

    pub fn aggregate_report(&self) -> Option<&PredictiveReport> {
        self.aggregate.as_ref()
    }

    /// Settle the session against the observed outcome: score everyone
    /// with the session rule, redistribute the wager pool by relative
    /// skill, and distribute (or refund) the utility pool.
    pub fn settle(&self, outcome: &Outcome) -> Result<Settlement, MarketError> {
        let aggregate = self
            .aggregate
            .as_ref()
            .ok_or(MarketError::SessionNotClosed)?;
        outcome
            .validate(&self.task_form())
            .map_err(|e| MarketError::FormMismatch(e.to_string()))?;

        let spec = self.config.grid_spec;
        let rule = self.config.scoring_rule;
        let mut player_ids = Vec::with_capacity(self.submissions.len());
        let mut wagers = Vec::with_capacity(self.submissions.len());
        let mut scores = Vec::with_capacity(self.submissions.len());
        for s in &self.submissions {
            player_ids.push(s.player_id.clone());
            wagers.push(s.wager);
            scores.push(oriented_score(rule, &s.report, outcome, spec)?);
        }
        let client_score = oriented_score(rule, &self.client.own_report, outcome, spec)?;
        let aggregate_score = oriented_score(rule, aggregate, outcome, spec)?;

        settle_components(
            player_ids,
            wagers,
            scores,
            client_score,
            aggregate_score,
            &self.config.utility_mode,
            Some(*outcome),
        )
    }
}

/// Everything the settlement determines.
///
/// `outcome` is `None` for score-driven settlements (table reproductions
/// where the published inputs are scores rather than reports).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Settlement {
    pub outcome: Option<Outcome>,
    pub player_ids: Vec<String>,
    pub wagers: Vec<f64>,
    pub player_scores: Vec<f64>,
    pub client_score: f64,
    pub aggregate_score: f64,
    /// The pool `U` the utility rule produced.
    pub utility_pool: f64,
    /// Equal to `utility_pool` when nobody outscored the client (the pool
    /// goes back to the client), zero otherwise.
    pub refunded_to_client: f64,
    pub wager_payoffs: Vec<f64>,
    pub utility_shares: Vec<f64>,
    pub total_payoffs: Vec<f64>,
    pub eligibility: Vec<bool>,
}

impl Settlement {
    /// Per-player profit `Π̂_i − m_i`.
    pub fn profits(&self) -> Vec<f64> {
        self.total_payoffs
            .iter()
            .zip(&self.wagers)
            .map(|(p, m)| p - m)
            .collect()
    }

    pub fn total_wagered(&self) -> f64 {
        stable_sum(self.wagers.iter().copied())
    }

    /// Utility that actually reached players.
    pub fn distributed_utility(&self) -> f64 {
        self.utility_pool - self.refunded_to_client
    }

    /// Relative budget residual `|Σ Π̂_i − (Σ m_i + U_distributed)| / (Σ m_i + U_distributed)`.
    pub fn budget_residual(&self) -> f64 {
        let inflow = self.total_wagered() + self.distributed_utility();
        let outflow = stable_sum(self.total_payoffs.iter().copied());
        (outflow - inflow).abs() / inflow
    }

    /// Relative residual of the zero-sum skill component,
    /// `|Σ Π_i − Σ m_i| / Σ m_i`.
    pub fn wager_zero_sum_residual(&self) -> f64 {
        let pool = self.total_wagered();
        let paid = stable_sum(self.wager_payoffs.iter().copied());
        (paid - pool).abs() / pool
    }
}

/// Skill component: `Π_i = m_i(1 + s_i − Σ_j s_j m_j / Σ_j m_j)`.
///
/// Redistributes the wager pool: `Σ Π_i = Σ m_i`, and `Π_i ≥ 0` because
/// oriented scores live in `[0, 1]`. When all scores are equal (including
/// the single-player case) everyone gets their wager back bitwise.
pub fn wager_payoff(scores: &[f64], wagers: &[f64]) -> Result<Vec<f64>, MarketError> {
    if scores.len() != wagers.len() || scores.is_empty() {
        return Err(MarketError::InvalidSubmission(format!(
            "scores/wagers length mismatch: {} vs {}",
            scores.len(),
            wagers.len()
        )));
    }
    for &s in scores {
        if !s.is_finite() || !(-1e-9..=1.0 + 1e-9).contains(&s) {
            return Err(MarketError::ScoreOutOfRange(s));
        }
    }
    for &m in wagers {
        if !m.is_finite() || m <= 0.0 {
            return Err(MarketError::InvalidSubmission(format!(
                "wager {m} is not strictly positive"
            )));
        }
    }
    if scores.iter().all(|&s| s == scores[0]) {
        return Ok(wagers.to_vec());
    }
    let total = stable_sum(wagers.iter().copied());
    let weighted_mean = stable_sum(scores.iter().zip(wagers).map(|(s, m)| s * m)) / total;
    Ok(scores
        .iter()
        .zip(wagers)
        .map(|(s, m)| m * (1.0 + s - weighted_mean))
        .collect())
}

/// Utility rule: how large a pool the client funds given the aggregate's
/// score `ŝ` and the client's own score `s̄`.
pub fn utility_pool(aggregate_score: f64, client_score: f64, mode: &UtilityMode) -> f64 {
    match mode {
        UtilityMode::Proportional { reward_rate } => {
            reward_rate * (aggregate_score - client_score).max(0.0)
        }
        UtilityMode::Exogenous { pool } => {
            if aggregate_score > client_score {
                pool.max(0.0)
            } else {
                0.0
            }
        }
    }
}

/// Split the pool among players who outscored the client, in proportion
/// to `s̃_i m_i` with `s̃_i = 1{s_i > s̄}·s_i`.
///
/// With `U > 0` and no eligible player this is
/// [`MarketError::AllIneligibleWithPositiveU`]; the session settlement
/// catches that case and records the refund instead.
pub fn utility_shares(
    scores: &[f64],
    wagers: &[f64],
    client_score: f64,
    pool: f64,
) -> Result<Vec<f64>, MarketError> {
    if scores.len() != wagers.len() {
        return Err(MarketError::InvalidSubmission(format!(
            "scores/wagers length mismatch: {} vs {}",
            scores.len(),
            wagers.len()
        )));
    }
    if pool <= 0.0 {
        return Ok(vec![0.0; scores.len()]);
    }
    let eligible_mass: Vec<f64> = scores
        .iter()
        .zip(wagers)
        .map(|(&s, &m)| if s > client_score { s * m } else { 0.0 })
        .collect();
    let denom = stable_sum(eligible_mass.iter().copied());
    if denom <= 0.0 {
        return Err(MarketError::AllIneligibleWithPositiveU);
    }
    Ok(eligible_mass.iter().map(|em| em / denom * pool).collect())
}

/// Settle directly from oriented scores (no reports), for score-driven
/// scenarios. `aggregate_score` feeds the utility rule exactly as a scored
/// aggregate report would.
pub fn settle_scores(
    player_ids: Vec<String>,
    wagers: Vec<f64>,
    scores: Vec<f64>,
    client_score: f64,
    aggregate_score: f64,
    mode: &UtilityMode,
) -> Result<Settlement, MarketError> {
    for &s in scores
        .iter()
        .chain(std::iter::once(&client_score))
        .chain(std::iter::once(&aggregate_score))
    {
        if !s.is_finite() || !(-1e-9..=1.0 + 1e-9).contains(&s) {
            return Err(MarketError::ScoreOutOfRange(s));
        }
    }
    settle_components(
        player_ids,
        wagers,
        scores,
        client_score,
        aggregate_score,
        mode,
        None,
    )
}

fn settle_components(
    player_ids: Vec<String>,
    wagers: Vec<f64>,
    scores: Vec<f64>,
    client_score: f64,
    aggregate_score: f64,
    mode: &UtilityMode,
    outcome: Option<Outcome>,
) -> Result<Settlement, MarketError> {
    let wager_payoffs = wager_payoff(&scores, &wagers)?;
    let pool = utility_pool(aggregate_score, client_score, mode);
    let (shares, refunded) = match utility_shares(&scores, &wagers, client_score, pool) {
        Ok(shares) => (shares, 0.0),
        Err(MarketError::AllIneligibleWithPositiveU) => (vec![0.0; scores.len()], pool),
        Err(e) => return Err(e),
    };
    let total_payoffs: Vec<f64> = wager_payoffs
        .iter()
        .zip(&shares)
        .map(|(p, sh)| p + sh)
        .collect();
    let eligibility: Vec<bool> = scores
        .iter()
        .map(|&s| s > client_score && pool > 0.0)
        .collect();
    Ok(Settlement {
        outcome,
        player_ids,
        wagers,
        player_scores: scores,
        client_score,
        aggregate_score,
        utility_pool: pool,
        refunded_to_client: refunded,
        wager_payoffs,
        utility_shares: shares,
        total_payoffs,
        eligibility,
    })
}
