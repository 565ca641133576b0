//! Wagering-based forecast elicitation: reports, scoring rules, pooling,
//! and market settlement with its economic guarantees.
//!
//! The crate is organized around the lifecycle of one forecasting session:
//!
//! 1. [`dist`] — players express forecasts as binary probabilities,
//!    categorical distributions, or continuous distributions (parametric or
//!    quantile grids).
//! 2. [`aggregate`] — the platform pools reports, wager-weighted, into the
//!    forecast delivered to the client (linear opinion pool or quantile
//!    averaging).
//! 3. [`scoring`] — once the outcome is observed, every report is scored
//!    with a proper scoring rule oriented to `[0, 1]`.
//! 4. [`market`] — payoffs combine a zero-sum wager redistribution with a
//!    client-funded utility pool for forecasts that beat the client's own.
//! 5. [`properties`] — the economic guarantees (budget balance, anonymity,
//!    sybilproofness, individual rationality, truthfulness incentives, and
//!    the stimulant effect of larger wagers) as executable checks.

pub mod aggregate;
pub mod dist;
pub mod market;
pub mod numeric;
pub mod properties;
pub mod scoring;

pub use aggregate::{lop, normalize_wagers, qa, wasserstein2, AggError, AggregationMethod};
pub use dist::{
    cdf_eval, quantile_eval, sample_outcome, to_quantile_grid, ContinuousDist, DistError, GridSpec,
    Outcome, PredictiveReport, QuantileGrid, ReportForm,
};
pub use market::{
    settle_scores, utility_pool, utility_shares, wager_payoff, ClientSpec, MarketConfig,
    MarketError, MarketSession, PlayerSubmission, Settlement, UtilityMode, WagerBounds,
};
pub use properties::{
    check_anonymity, check_budget_balance, check_client_truthfulness,
    check_conditional_truthfulness, check_individual_rationality, check_stimulant,
    check_sybilproof, estimate_expected_profit, random_environment, random_session,
    run_exact_suite, BeliefModel, Environment, GeneratedSession, PropError, PropertyId,
    PropertyReport, SessionTemplate, SuiteSessionResult,
};
pub use scoring::{oriented_score, propriety_gap, score, OrientedScorer, ScoreError, ScoringRule};
