//! Scoring rules, their orientation to `[0, 1]`, and propriety diagnostics.
//!
//! Settlement needs positively oriented scores in `[0, 1]` — the payoff
//! algebra in the market module depends on that range — so each raw rule
//! that admits an orientation gets one: Brier becomes `1 − BS`, RPS becomes
//! `1 − RPS/(J−1)`, and CRPS becomes `1 − CRPS` (legal only on unit
//! support, where CRPS ≤ 1). The quadratic and log scores are diagnostics:
//! the quadratic score is insensitive to distance and the log score is
//! local, so neither is accepted for settlement.

use crate::dist::{
    sample_outcome, to_quantile_grid, ContinuousDist, DistError, GridSpec, Outcome,
    PredictiveReport, QuantileGrid, ReportForm,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, Continuous, ContinuousCDF, Normal, Uniform};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// Tolerance for the unit-support requirement of the oriented CRPS.
pub const UNIT_SUPPORT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error, Serialize, Deserialize)]
pub enum ScoreError {
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
    #[error("oriented CRPS requires unit support: {0}")]
    SupportNotUnit(String),
    #[error("report has zero density/probability at the outcome")]
    ZeroDensityAtOutcome,
    #[error("log score is undefined for quantile grids (no density)")]
    UnsupportedForGrids,
    #[error("quadrature failure: {0}")]
    QuadratureFailure(String),
    #[error("oriented score {0} falls outside [0, 1]")]
    ScoreOutOfRange(f64),
    #[error("rule {0} has no [0, 1] orientation and cannot settle a market")]
    NotOrientable(ScoringRule),
    #[error(transparent)]
    Dist(#[from] DistError),
}

/// The scoring rules the engine knows about.
///
/// `NormalizedRps` and `OrientedCrps` are the oriented forms; `Brier`,
/// `Rps`, and `Crps` are their raw (lower-is-better) counterparts and
/// orient on demand. `Quadratic` and `Log` never orient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoringRule {
    Brier,
    Quadratic,
    Rps,
    NormalizedRps,
    Log,
    Crps,
    OrientedCrps,
}

impl ScoringRule {
    pub const ALL: [ScoringRule; 7] = [
        ScoringRule::Brier,
        ScoringRule::Quadratic,
        ScoringRule::Rps,
        ScoringRule::NormalizedRps,
        ScoringRule::Log,
        ScoringRule::Crps,
        ScoringRule::OrientedCrps,
    ];

    /// Raw output already lies in `[0, 1]` with higher-is-better.
    pub fn is_oriented(&self) -> bool {
        matches!(self, ScoringRule::NormalizedRps | ScoringRule::OrientedCrps)
    }

    /// An oriented `[0, 1]` form exists (possibly the rule itself).
    pub fn orientable(&self) -> bool {
        !matches!(self, ScoringRule::Quadratic | ScoringRule::Log)
    }

    /// Raw convention: does a larger raw value mean a better forecast?
    pub fn raw_higher_is_better(&self) -> bool {
        matches!(
            self,
            ScoringRule::Quadratic | ScoringRule::NormalizedRps | ScoringRule::OrientedCrps
        )
    }

    /// Which report form the rule scores.
    pub fn supports_form(&self, form: ReportForm) -> bool {
        match self {
            ScoringRule::Brier => matches!(form, ReportForm::Binary),
            ScoringRule::Quadratic | ScoringRule::Rps | ScoringRule::NormalizedRps => {
                matches!(form, ReportForm::Categorical(_))
            }
            ScoringRule::Log => matches!(form, ReportForm::Categorical(_) | ReportForm::Continuous),
            ScoringRule::Crps | ScoringRule::OrientedCrps => {
                matches!(form, ReportForm::Continuous)
            }
        }
    }
}

impl fmt::Display for ScoringRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            ScoringRule::Brier => "brier",
            ScoringRule::Quadratic => "quadratic",
            ScoringRule::Rps => "rps",
            ScoringRule::NormalizedRps => "normalized-rps",
            ScoringRule::Log => "log",
            ScoringRule::Crps => "crps",
            ScoringRule::OrientedCrps => "oriented-crps",
        };
        f.write_str(name)
    }
}

impl FromStr for ScoringRule {
    type Err = ScoreError;

    fn from_str(s: &str) -> Result<Self, ScoreError> {
        match s {
            "brier" => Ok(ScoringRule::Brier),
            "quadratic" => Ok(ScoringRule::Quadratic),
            "rps" => Ok(ScoringRule::Rps),
            "normalized-rps" => Ok(ScoringRule::NormalizedRps),
            "log" => Ok(ScoringRule::Log),
            "crps" => Ok(ScoringRule::Crps),
            "oriented-crps" => Ok(ScoringRule::OrientedCrps),
            other => Err(ScoreError::TypeMismatch(format!(
                "unknown scoring rule `{other}`"
            ))),
        }
    }
}

// ============================================================================
// Individual rules
// ============================================================================

/// Brier score `(p − ω)²`; lower is better, range `[0, 1]`.
pub fn brier(prob: f64, occurred: bool) -> f64 {
    let omega = if occurred { 1.0 } else { 0.0 };
    (prob - omega) * (prob - omega)
}

/// Quadratic score `2·r(j) − Σ_i r(i)²`; higher is better, range `[−1, 1]`.
/// `j` is the 1-based index of the observed category.
pub fn quadratic_score(probs: &[f64], j: usize) -> Result<f64, ScoreError> {
    check_category(probs, j)?;
    let sq: f64 = probs.iter().map(|p| p * p).sum();
    Ok(2.0 * probs[j - 1] - sq)
}

/// Ranked probability score `Σ_i (R(i) − O(i))²` over cumulative
/// probabilities; lower is better, range `[0, J−1]`.
pub fn rps(probs: &[f64], j: usize) -> Result<f64, ScoreError> {
    check_category(probs, j)?;
    let mut cum = 0.0;
    let mut total = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        cum += p;
        let o = if i + 1 >= j { 1.0 } else { 0.0 };
        total += (cum - o) * (cum - o);
    }
    Ok(total)
}

/// RPS oriented to `[0, 1]`: `1 − RPS/(J−1)`.
///
/// The divisor `J−1` is the worst case (all mass at one end, outcome at
/// the other), so the image is exactly `[0, 1]`.
pub fn normalized_rps(probs: &[f64], j: usize) -> Result<f64, ScoreError> {
    let raw = rps(probs, j)?;
    Ok(1.0 - raw / (probs.len() - 1) as f64)
}

fn check_category(probs: &[f64], j: usize) -> Result<(), ScoreError> {
    if probs.len() < 2 {
        return Err(ScoreError::TypeMismatch(
            "categorical rules need at least 2 categories".into(),
        ));
    }
    if j < 1 || j > probs.len() {
        return Err(ScoreError::TypeMismatch(format!(
            "category {j} outside 1..={}",
            probs.len()
        )));
    }
    Ok(())
}

/// CRPS `∫ (R(x) − 1{x ≥ ω})² dx` by quadrature; lower is better.
///
/// Parametric forecasts are discretized on `spec`; grid forecasts are
/// integrated on their own breakpoints. The quadrature is trapezoidal on
/// the grid breakpoints plus `ω`, split at `ω` where the integrand kinks.
pub fn crps(dist: &ContinuousDist, omega: f64, spec: GridSpec) -> Result<f64, ScoreError> {
    if !omega.is_finite() {
        return Err(ScoreError::TypeMismatch("outcome must be finite".into()));
    }
    let value = match dist {
        ContinuousDist::Grid(g) => CrpsEvaluator::new(g).crps(omega),
        _ => CrpsEvaluator::new(&to_quantile_grid(dist, spec)?).crps(omega),
    };
    if !value.is_finite() || value < 0.0 {
        return Err(ScoreError::QuadratureFailure(format!(
            "CRPS quadrature produced {value}"
        )));
    }
    Ok(value)
}

/// CRPS oriented to `[0, 1]`: `1 − CRPS`, valid only when the forecast
/// support and the outcome both lie in `[0, 1]` (then CRPS ≤ 1).
pub fn oriented_crps(dist: &ContinuousDist, omega: f64, spec: GridSpec) -> Result<f64, ScoreError> {
    require_unit_support(dist, omega)?;
    let raw = crps(dist, omega, spec)?;
    finish_oriented(1.0 - raw)
}

fn require_unit_support(dist: &ContinuousDist, omega: f64) -> Result<(), ScoreError> {
    if !(-UNIT_SUPPORT_TOL..=1.0 + UNIT_SUPPORT_TOL).contains(&omega) {
        return Err(ScoreError::SupportNotUnit(format!(
            "outcome {omega} outside [0, 1]"
        )));
    }
    match dist.bounded_support() {
        Some((lo, hi)) if lo >= -UNIT_SUPPORT_TOL && hi <= 1.0 + UNIT_SUPPORT_TOL => Ok(()),
        Some((lo, hi)) => Err(ScoreError::SupportNotUnit(format!(
            "support [{lo}, {hi}] not contained in [0, 1]"
        ))),
        None => Err(ScoreError::SupportNotUnit("unbounded support".into())),
    }
}

fn finish_oriented(value: f64) -> Result<f64, ScoreError> {
    if !value.is_finite() {
        return Err(ScoreError::QuadratureFailure(format!(
            "oriented score is {value}"
        )));
    }
    if !(-UNIT_SUPPORT_TOL..=1.0 + UNIT_SUPPORT_TOL).contains(&value) {
        return Err(ScoreError::ScoreOutOfRange(value));
    }
    Ok(value.clamp(0.0, 1.0))
}

/// Log score `−log density(ω)` (continuous, parametric only) or
/// `−log r(j)` (categorical); lower is better, unbounded.
///
/// A locality diagnostic only: it sees nothing but the mass at the realized
/// outcome, so it never settles a market.
pub fn log_score(report: &PredictiveReport, outcome: &Outcome) -> Result<f64, ScoreError> {
    match (report, outcome) {
        (PredictiveReport::Categorical { probs }, Outcome::Category(j)) => {
            check_category(probs, *j)?;
            let p = probs[*j - 1];
            if p > 0.0 {
                Ok(-p.ln())
            } else {
                Err(ScoreError::ZeroDensityAtOutcome)
            }
        }
        (PredictiveReport::Continuous(dist), Outcome::Real(x)) => {
            let density = match dist {
                ContinuousDist::Beta { alpha, beta } => {
                    Beta::new(*alpha, *beta).expect("validated").pdf(*x)
                }
                ContinuousDist::Normal { mean, std_dev } => {
                    Normal::new(*mean, *std_dev).expect("validated").pdf(*x)
                }
                ContinuousDist::Uniform { lo, hi } => {
                    Uniform::new(*lo, *hi).expect("validated").pdf(*x)
                }
                ContinuousDist::Grid(_) => return Err(ScoreError::UnsupportedForGrids),
            };
            if density > 0.0 && density.is_finite() {
                Ok(-density.ln())
            } else {
                Err(ScoreError::ZeroDensityAtOutcome)
            }
        }
        _ => Err(ScoreError::TypeMismatch(format!(
            "log score takes categorical or continuous input, got {:?} / {:?}",
            report.form(),
            outcome
        ))),
    }
}

/// Closed-form CRPS of a normal forecast: `σ·[z(2Φ(z)−1) + 2φ(z) − 1/√π]`
/// with `z = (ω−μ)/σ`. Serves as the quadrature oracle.
pub fn crps_normal_closed_form(mean: f64, std_dev: f64, omega: f64) -> f64 {
    let z = (omega - mean) / std_dev;
    let n01 = Normal::new(0.0, 1.0).unwrap();
    std_dev * (z * (2.0 * n01.cdf(z) - 1.0) + 2.0 * n01.pdf(z) - 1.0 / std::f64::consts::PI.sqrt())
}

// ============================================================================
// Dispatch over rules
// ============================================================================

/// Raw score of `report` against `outcome` under `rule`.
pub fn score(
    rule: ScoringRule,
    report: &PredictiveReport,
    outcome: &Outcome,
    spec: GridSpec,
) -> Result<f64, ScoreError> {
    match rule {
        ScoringRule::Brier => {
            let (p, occurred) = as_binary(report, outcome)?;
            Ok(brier(p, occurred))
        }
        ScoringRule::Quadratic => {
            let (probs, j) = as_categorical(report, outcome)?;
            quadratic_score(probs, j)
        }
        ScoringRule::Rps => {
            let (probs, j) = as_categorical(report, outcome)?;
            rps(probs, j)
        }
        ScoringRule::NormalizedRps => {
            let (probs, j) = as_categorical(report, outcome)?;
            normalized_rps(probs, j)
        }
        ScoringRule::Log => log_score(report, outcome),
        ScoringRule::Crps => {
            let (dist, omega) = as_continuous(report, outcome)?;
            crps(dist, omega, spec)
        }
        ScoringRule::OrientedCrps => {
            let (dist, omega) = as_continuous(report, outcome)?;
            oriented_crps(dist, omega, spec)
        }
    }
}

/// Positively oriented `[0, 1]` score under `rule`; the form used for
/// settlement. `Quadratic` and `Log` return [`ScoreError::NotOrientable`].
pub fn oriented_score(
    rule: ScoringRule,
    report: &PredictiveReport,
    outcome: &Outcome,
    spec: GridSpec,
) -> Result<f64, ScoreError> {
    match rule {
        ScoringRule::Brier => {
            let (p, occurred) = as_binary(report, outcome)?;
            finish_oriented(1.0 - brier(p, occurred))
        }
        ScoringRule::Rps | ScoringRule::NormalizedRps => {
            let (probs, j) = as_categorical(report, outcome)?;
            finish_oriented(normalized_rps(probs, j)?)
        }
        ScoringRule::Crps | ScoringRule::OrientedCrps => {
            let (dist, omega) = as_continuous(report, outcome)?;
            oriented_crps(dist, omega, spec)
        }
        ScoringRule::Quadratic | ScoringRule::Log => Err(ScoreError::NotOrientable(rule)),
    }
}

fn as_binary(report: &PredictiveReport, outcome: &Outcome) -> Result<(f64, bool), ScoreError> {
    match (report, outcome) {
        (PredictiveReport::Binary { prob }, Outcome::Binary(occurred)) => Ok((*prob, *occurred)),
        _ => Err(ScoreError::TypeMismatch(format!(
            "expected binary report and outcome, got {:?} / {:?}",
            report.form(),
            outcome
        ))),
    }
}

fn as_categorical<'a>(
    report: &'a PredictiveReport,
    outcome: &Outcome,
) -> Result<(&'a [f64], usize), ScoreError> {
    match (report, outcome) {
        (PredictiveReport::Categorical { probs }, Outcome::Category(j)) => Ok((probs, *j)),
        _ => Err(ScoreError::TypeMismatch(format!(
            "expected categorical report and outcome, got {:?} / {:?}",
            report.form(),
            outcome
        ))),
    }
}

fn as_continuous<'a>(
    report: &'a PredictiveReport,
    outcome: &Outcome,
) -> Result<(&'a ContinuousDist, f64), ScoreError> {
    match (report, outcome) {
        (PredictiveReport::Continuous(dist), Outcome::Real(x)) => Ok((dist, *x)),
        _ => Err(ScoreError::TypeMismatch(format!(
            "expected continuous report and real outcome, got {:?} / {:?}",
            report.form(),
            outcome
        ))),
    }
}

// ============================================================================
// Fast repeated CRPS
// ============================================================================

/// Precomputed prefix integrals of one forecast grid, for scoring the same
/// forecast against many outcomes (Monte Carlo propriety runs, hourly
/// settlement). One evaluation is `O(log M)` after `O(M)` setup.
pub struct CrpsEvaluator {
    taus: Vec<f64>,
    values: Vec<f64>,
    /// `left[k]` = ∫ from `values[0]` to `values[k]` of `R(x)²` dx.
    left: Vec<f64>,
    /// `right[k]` = ∫ from `values[k]` to the last value of `(1 − R(x))²` dx.
    right: Vec<f64>,
}

impl CrpsEvaluator {
    pub fn new(grid: &QuantileGrid) -> Self {
        let taus = grid.taus().to_vec();
        let values = grid.values().to_vec();
        let n = values.len();
        let mut left = vec![0.0; n];
        for k in 0..n - 1 {
            let w = values[k + 1] - values[k];
            left[k + 1] = left[k] + w * (taus[k] * taus[k] + taus[k + 1] * taus[k + 1]) / 2.0;
        }
        let mut right = vec![0.0; n];
        for k in (0..n - 1).rev() {
            let w = values[k + 1] - values[k];
            let a = 1.0 - taus[k];
            let b = 1.0 - taus[k + 1];
            right[k] = right[k + 1] + w * (a * a + b * b) / 2.0;
        }
        CrpsEvaluator {
            taus,
            values,
            left,
            right,
        }
    }

    pub fn from_dist(dist: &ContinuousDist, spec: GridSpec) -> Result<Self, ScoreError> {
        match dist {
            ContinuousDist::Grid(g) => Ok(CrpsEvaluator::new(g)),
            _ => Ok(CrpsEvaluator::new(&to_quantile_grid(dist, spec)?)),
        }
    }

    /// CRPS of the stored forecast against outcome `omega`.
    pub fn crps(&self, omega: f64) -> f64 {
        let v = &self.values;
        let t = &self.taus;
        let n = v.len();
        if omega <= v[0] {
            // R = 0 to the left of the grid: (1 − R)² = 1 on [ω, v₀].
            return (v[0] - omega) + self.right[0];
        }
        if omega >= v[n - 1] {
            return self.left[n - 1] + (omega - v[n - 1]);
        }
        // v[k] <= ω < v[k+1] with a positive-length segment
        let k = v.partition_point(|&w| w <= omega) - 1;
        let width = v[k + 1] - v[k];
        let t_omega = t[k] + (t[k + 1] - t[k]) * (omega - v[k]) / width;
        let left_piece = (omega - v[k]) * (t[k] * t[k] + t_omega * t_omega) / 2.0;
        let a = 1.0 - t_omega;
        let b = 1.0 - t[k + 1];
        let right_piece = (v[k + 1] - omega) * (a * a + b * b) / 2.0;
        self.left[k] + left_piece + right_piece + self.right[k + 1]
    }

    /// Oriented form `1 − CRPS`; the caller is responsible for having
    /// checked unit support.
    pub fn oriented(&self, omega: f64) -> f64 {
        (1.0 - self.crps(omega)).clamp(0.0, 1.0)
    }
}

/// Precomputed oriented scorer for one fixed report under a settlement
/// rule, for scoring that report against many outcomes (Monte Carlo
/// settlement estimates, hourly runs). The CRPS prefix integrals are built
/// once; evaluation then mirrors [`oriented_score`].
pub struct OrientedScorer {
    inner: OrientedScorerInner,
}

enum OrientedScorerInner {
    Binary { prob: f64 },
    Categorical { probs: Vec<f64> },
    Continuous { evaluator: CrpsEvaluator },
}

impl OrientedScorer {
    pub fn new(
        rule: ScoringRule,
        report: &PredictiveReport,
        spec: GridSpec,
    ) -> Result<Self, ScoreError> {
        if !rule.orientable() {
            return Err(ScoreError::NotOrientable(rule));
        }
        if !rule.supports_form(report.form()) {
            return Err(ScoreError::TypeMismatch(format!(
                "rule {rule} cannot score a {:?} report",
                report.form()
            )));
        }
        let inner = match report {
            PredictiveReport::Binary { prob } => OrientedScorerInner::Binary { prob: *prob },
            PredictiveReport::Categorical { probs } => OrientedScorerInner::Categorical {
                probs: probs.clone(),
            },
            PredictiveReport::Continuous(dist) => {
                // any in-range stand-in outcome works for the support check
                require_unit_support(dist, 0.5)?;
                OrientedScorerInner::Continuous {
                    evaluator: CrpsEvaluator::from_dist(dist, spec)?,
                }
            }
        };
        Ok(OrientedScorer { inner })
    }

    pub fn eval(&self, outcome: &Outcome) -> Result<f64, ScoreError> {
        match (&self.inner, outcome) {
            (OrientedScorerInner::Binary { prob }, Outcome::Binary(occurred)) => {
                Ok(1.0 - brier(*prob, *occurred))
            }
            (OrientedScorerInner::Categorical { probs }, Outcome::Category(j)) => {
                normalized_rps(probs, *j)
            }
            (OrientedScorerInner::Continuous { evaluator }, Outcome::Real(x)) => {
                if !(-UNIT_SUPPORT_TOL..=1.0 + UNIT_SUPPORT_TOL).contains(x) {
                    return Err(ScoreError::SupportNotUnit(format!(
                        "outcome {x} outside [0, 1]"
                    )));
                }
                Ok(evaluator.oriented(*x))
            }
            _ => Err(ScoreError::TypeMismatch(format!(
                "outcome {outcome:?} does not match the prepared report form"
            ))),
        }
    }
}

// ============================================================================
// Propriety diagnostics
// ============================================================================

/// Monte Carlo estimate of the propriety gap
/// `E_truth[directed(rule, truth)] − E_truth[directed(rule, report)]`
/// with a 95% normal-approximation halfwidth, where `directed` is the
/// higher-is-better form of the rule (oriented where one exists, sign-flip
/// for the log score). Both reports are scored on the same sample path, so
/// `truth == report` yields a gap of exactly zero.
pub fn propriety_gap(
    rule: ScoringRule,
    truth: &PredictiveReport,
    report: &PredictiveReport,
    n_samples: usize,
    seed: u64,
    spec: GridSpec,
) -> Result<(f64, f64), ScoreError> {
    if truth.form() != report.form() {
        return Err(ScoreError::TypeMismatch(format!(
            "truth and report disagree on form: {:?} vs {:?}",
            truth.form(),
            report.form()
        )));
    }
    if n_samples == 0 {
        return Err(ScoreError::TypeMismatch("n_samples must be > 0".into()));
    }
    let truth_scorer = DirectedScorer::new(rule, truth, spec)?;
    let report_scorer = DirectedScorer::new(rule, report, spec)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..n_samples {
        let omega = sample_outcome(truth, &mut rng);
        let d = truth_scorer.eval(&omega)? - report_scorer.eval(&omega)?;
        sum += d;
        sum_sq += d * d;
    }
    let n = n_samples as f64;
    let mean = sum / n;
    let var = if n_samples > 1 {
        ((sum_sq - sum * sum / n) / (n - 1.0)).max(0.0)
    } else {
        0.0
    };
    let halfwidth = 1.96 * (var / n).sqrt();
    Ok((mean, halfwidth))
}

/// Higher-is-better scorer for one fixed report, with the CRPS prefix
/// integrals precomputed so Monte Carlo loops stay cheap.
enum DirectedScorer<'a> {
    General {
        rule: ScoringRule,
        report: &'a PredictiveReport,
        spec: GridSpec,
        flip: bool,
    },
    Crps {
        evaluator: CrpsEvaluator,
        oriented: bool,
    },
}

impl<'a> DirectedScorer<'a> {
    fn new(
        rule: ScoringRule,
        report: &'a PredictiveReport,
        spec: GridSpec,
    ) -> Result<Self, ScoreError> {
        match rule {
            ScoringRule::Crps | ScoringRule::OrientedCrps => {
                let dist = match report {
                    PredictiveReport::Continuous(d) => d,
                    _ => {
                        return Err(ScoreError::TypeMismatch(format!(
                            "{rule} needs a continuous report, got {:?}",
                            report.form()
                        )))
                    }
                };
                let oriented = rule == ScoringRule::OrientedCrps;
                if oriented {
                    // any finite outcome in [0,1] will do for the support check
                    require_unit_support(dist, 0.5)?;
                }
                Ok(DirectedScorer::Crps {
                    evaluator: CrpsEvaluator::from_dist(dist, spec)?,
                    oriented,
                })
            }
            _ => Ok(DirectedScorer::General {
                rule,
                report,
                spec,
                flip: !rule.raw_higher_is_better() && !rule.orientable(),
            }),
        }
    }

    fn eval(&self, outcome: &Outcome) -> Result<f64, ScoreError> {
        match self {
            DirectedScorer::Crps {
                evaluator,
                oriented,
            } => {
                let omega = match outcome {
                    Outcome::Real(x) => *x,
                    _ => return Err(ScoreError::TypeMismatch("CRPS needs a real outcome".into())),
                };
                Ok(if *oriented {
                    evaluator.oriented(omega)
                } else {
                    -evaluator.crps(omega)
                })
            }
            DirectedScorer::General {
                rule,
                report,
                spec,
                flip,
            } => {
                let v = if rule.orientable() {
                    oriented_score(*rule, report, outcome, *spec)?
                } else {
                    score(*rule, report, outcome, *spec)?
                };
                Ok(if *flip { -v } else { v })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::cdf_eval;
    use rand::Rng;

    const SPEC: GridSpec = GridSpec { size: 999 };

    fn cat(probs: &[f64]) -> PredictiveReport {
        PredictiveReport::Categorical {
            probs: probs.to_vec(),
        }
    }

    fn degenerate(x: f64) -> ContinuousDist {
        ContinuousDist::Grid(QuantileGrid::degenerate(x, GridSpec { size: 9 }).unwrap())
    }

    // ---- Brier ----

    #[test]
    fn brier_examples() {
        assert_eq!(brier(1.0, true), 0.0);
        assert_eq!(brier(0.5, false), 0.25);
        assert!((brier(0.1, false) - 0.01).abs() < 1e-15);
    }

    // ---- quadratic and RPS: the three-forecast example ----
    //
    // Five ordered categories, outcome in the middle; E1 spreads mass evenly
    // around the mode, E2 concentrates adjacent, E3 pushes mass outward.
    const E1: [f64; 5] = [0.1, 0.1, 0.6, 0.1, 0.1];
    const E2: [f64; 5] = [0.0, 0.2, 0.6, 0.2, 0.0];
    const E3: [f64; 5] = [0.2, 0.0, 0.6, 0.0, 0.2];

    #[test]
    fn quadratic_score_examples() {
        assert!((quadratic_score(&E1, 3).unwrap() - 0.8).abs() < 1e-12);
        assert!((quadratic_score(&E2, 3).unwrap() - 0.76).abs() < 1e-12);
        assert!((quadratic_score(&E3, 3).unwrap() - 0.76).abs() < 1e-12);
        let one_hot = [0.0, 0.0, 1.0, 0.0, 0.0];
        assert!((quadratic_score(&one_hot, 3).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rps_examples() {
        assert!((rps(&E1, 3).unwrap() - 0.10).abs() < 1e-12);
        assert!((rps(&E3, 3).unwrap() - 0.16).abs() < 1e-12);
        let one_hot = [0.0, 0.0, 1.0, 0.0, 0.0];
        assert_eq!(rps(&one_hot, 3).unwrap(), 0.0);
    }

    #[test]
    fn normalized_rps_examples() {
        assert!((normalized_rps(&E1, 3).unwrap() - 0.975).abs() < 1e-12);
        assert!((normalized_rps(&E2, 3).unwrap() - 0.98).abs() < 1e-12);
        assert!((normalized_rps(&E3, 3).unwrap() - 0.96).abs() < 1e-12);
    }

    #[test]
    fn quadratic_is_insensitive_to_distance_where_nrps_is_not() {
        // E2 keeps mass adjacent to the outcome, E3 pushes it outward:
        // the quadratic score cannot tell them apart, normalized RPS can.
        let q2 = quadratic_score(&E2, 3).unwrap();
        let q3 = quadratic_score(&E3, 3).unwrap();
        assert!((q2 - q3).abs() < 1e-15);
        assert!(normalized_rps(&E2, 3).unwrap() > normalized_rps(&E3, 3).unwrap());
    }

    #[test]
    fn nrps_penalizes_mean_preserving_outward_shifts() {
        // moving ε from the outcome's neighbors to the outer categories is
        // mean-preserving but strictly worse under normalized RPS
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let core: f64 = rng.gen_range(0.3..0.8);
            let side = (1.0 - core) / 2.0;
            let outer: f64 = rng.gen_range(0.0..side / 2.0);
            let inner = side - outer;
            let base = [outer, inner, core, inner, outer];
            let eps: f64 = rng.gen_range(1e-3..inner.min(0.2));
            let shifted = [outer + eps, inner - eps, core, inner - eps, outer + eps];
            assert!(
                normalized_rps(&base, 3).unwrap() > normalized_rps(&shifted, 3).unwrap(),
                "outward shift must lower the score: base {base:?}, eps {eps}"
            );
        }
    }

    // ---- CRPS ----

    #[test]
    fn crps_of_point_forecast_is_absolute_error() {
        let d = degenerate(0.4);
        assert!((crps(&d, 0.9, SPEC).unwrap() - 0.5).abs() < 1e-15);
        assert!((crps(&d, 0.4, SPEC).unwrap()).abs() < 1e-15);
        assert!((crps(&d, 0.1, SPEC).unwrap() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn crps_uniform_matches_closed_form() {
        // For U(0,1): CRPS(ω) = ω³/3 + (1−ω)³/3
        let u = ContinuousDist::Uniform { lo: 0.0, hi: 1.0 };
        // outcomes at the support edges see the largest tail-rectangle
        // truncation error (~1e-6 at a 999-point grid); interior ones are
        // orders of magnitude tighter
        for &omega in &[0.0f64, 0.2, 0.5, 0.83, 1.0] {
            let exact = omega.powi(3) / 3.0 + (1.0 - omega).powi(3) / 3.0;
            let got = crps(&u, omega, SPEC).unwrap();
            assert!(
                (got - exact).abs() < 1e-5,
                "omega {omega}: {got} vs {exact}"
            );
        }
        assert!((crps(&u, 0.5, SPEC).unwrap() - 1.0 / 12.0).abs() < 1e-6);
    }

    #[test]
    fn crps_normal_matches_closed_form() {
        // frozen independently computed value at z = 0: 2/√(2π) − 1/√π
        const NORMAL_CRPS_AT_MEAN: f64 = 0.23369497725510913;
        let closed = crps_normal_closed_form(0.0, 1.0, 0.0);
        assert!((closed - NORMAL_CRPS_AT_MEAN).abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..20 {
            let mean: f64 = rng.gen_range(-1.0..1.0);
            let std_dev: f64 = rng.gen_range(0.1..2.0);
            let omega = mean + std_dev * rng.gen_range(-2.0..2.0);
            let d = ContinuousDist::Normal { mean, std_dev };
            let got = crps(&d, omega, SPEC).unwrap();
            let exact = crps_normal_closed_form(mean, std_dev, omega);
            assert!(
                (got - exact).abs() < 1e-4,
                "N({mean},{std_dev}) at {omega}: {got} vs {exact}"
            );
        }
    }

    #[test]
    fn crps_outcome_outside_grid_range() {
        // outcome beyond the sampled quantiles: tail rectangles take over
        let u = ContinuousDist::Uniform { lo: 0.0, hi: 1.0 };
        let exact = |omega: f64| {
            if omega >= 1.0 {
                // ∫₀¹ (x − 1)²... careful: R=x on [0,1], outcome above
                1.0 / 3.0 + (omega - 1.0)
            } else {
                -omega + 1.0 / 3.0 + omega * omega
            }
        };
        for &omega in &[1.5, 2.0, -0.25] {
            let want = if omega >= 1.0 {
                exact(omega)
            } else {
                // ω < 0: ∫_ω⁰ 1 dx + ∫₀¹ (1−x)² dx
                -omega + 1.0 / 3.0
            };
            let got = crps(&u, omega, SPEC).unwrap();
            assert!((got - want).abs() < 1e-5, "omega {omega}: {got} vs {want}");
        }
    }

    #[test]
    fn evaluator_agrees_with_one_shot_crps() {
        let d = ContinuousDist::Beta {
            alpha: 2.0,
            beta: 5.0,
        };
        let eval = CrpsEvaluator::from_dist(&d, SPEC).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let omega: f64 = rng.gen_range(0.0..1.0);
            let a = eval.crps(omega);
            let b = crps(&d, omega, SPEC).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }

    // ---- oriented scores ----

    #[test]
    fn oriented_crps_examples() {
        let at = |x: f64| degenerate(x);
        assert!((oriented_crps(&at(0.7), 0.7, SPEC).unwrap() - 1.0).abs() < 1e-15);
        assert!((oriented_crps(&at(0.0), 1.0, SPEC).unwrap()).abs() < 1e-15);
        let u = ContinuousDist::Uniform { lo: 0.0, hi: 1.0 };
        assert!((oriented_crps(&u, 0.5, SPEC).unwrap() - (1.0 - 1.0 / 12.0)).abs() < 1e-6);
    }

    #[test]
    fn oriented_crps_rejects_non_unit_support() {
        let n = ContinuousDist::Normal {
            mean: 0.5,
            std_dev: 0.1,
        };
        assert!(matches!(
            oriented_crps(&n, 0.5, SPEC),
            Err(ScoreError::SupportNotUnit(_))
        ));
        let u = ContinuousDist::Uniform { lo: -0.5, hi: 0.5 };
        assert!(matches!(
            oriented_crps(&u, 0.2, SPEC),
            Err(ScoreError::SupportNotUnit(_))
        ));
        let ok = ContinuousDist::Uniform { lo: 0.0, hi: 1.0 };
        assert!(matches!(
            oriented_crps(&ok, 1.5, SPEC),
            Err(ScoreError::SupportNotUnit(_))
        ));
    }

    #[test]
    fn oriented_dispatch_matches_direct_forms() {
        let b = PredictiveReport::Binary { prob: 0.8 };
        let s = oriented_score(ScoringRule::Brier, &b, &Outcome::Binary(true), SPEC).unwrap();
        assert!((s - (1.0 - 0.04)).abs() < 1e-15);

        let c = cat(&E1);
        let s = oriented_score(ScoringRule::Rps, &c, &Outcome::Category(3), SPEC).unwrap();
        assert!((s - 0.975).abs() < 1e-12);

        let quad = oriented_score(ScoringRule::Quadratic, &c, &Outcome::Category(3), SPEC);
        assert!(matches!(quad, Err(ScoreError::NotOrientable(_))));
    }

    #[test]
    fn oriented_scores_stay_in_unit_interval() {
        // 1000 random valid inputs on unit support across all three forms
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for i in 0..1000 {
            let (rule, report, outcome) = match i % 3 {
                0 => {
                    let p: f64 = rng.gen();
                    (
                        ScoringRule::Brier,
                        PredictiveReport::Binary { prob: p },
                        Outcome::Binary(rng.gen::<f64>() < 0.5),
                    )
                }
                1 => {
                    let j = rng.gen_range(2..6usize);
                    let mut probs: Vec<f64> = (0..j).map(|_| rng.gen_range(0.01..1.0)).collect();
                    let total: f64 = probs.iter().sum();
                    probs.iter_mut().for_each(|p| *p /= total);
                    let cat_out = rng.gen_range(1..=j);
                    (
                        ScoringRule::NormalizedRps,
                        cat(&probs),
                        Outcome::Category(cat_out),
                    )
                }
                _ => {
                    let a: f64 = rng.gen_range(0.5..10.0);
                    let b: f64 = rng.gen_range(0.5..10.0);
                    (
                        ScoringRule::OrientedCrps,
                        PredictiveReport::Continuous(ContinuousDist::Beta { alpha: a, beta: b }),
                        Outcome::Real(rng.gen_range(0.0..1.0)),
                    )
                }
            };
            let spec = GridSpec { size: 199 };
            let s = oriented_score(rule, &report, &outcome, spec).unwrap();
            assert!((0.0..=1.0).contains(&s), "case {i}: score {s}");
        }
    }

    // ---- log score and locality ----

    #[test]
    fn log_score_examples() {
        let one_hot = cat(&[0.0, 1.0, 0.0]);
        assert_eq!(log_score(&one_hot, &Outcome::Category(2)).unwrap(), 0.0);

        let u = PredictiveReport::Continuous(ContinuousDist::Uniform { lo: 0.0, hi: 1.0 });
        assert_eq!(log_score(&u, &Outcome::Real(0.3)).unwrap(), 0.0);

        let half = cat(&[0.5, 0.5]);
        let s = log_score(&half, &Outcome::Category(1)).unwrap();
        assert!((s - std::f64::consts::LN_2).abs() < 1e-15);

        assert!(matches!(
            log_score(&one_hot, &Outcome::Category(1)),
            Err(ScoreError::ZeroDensityAtOutcome)
        ));
        let g = PredictiveReport::Continuous(degenerate(0.5));
        assert!(matches!(
            log_score(&g, &Outcome::Real(0.5)),
            Err(ScoreError::UnsupportedForGrids)
        ));
    }

    #[test]
    fn crps_is_non_local_where_log_score_is_local() {
        // equal density at ω, different tails
        let near = ContinuousDist::Uniform { lo: 0.0, hi: 1.0 };
        let far = ContinuousDist::Uniform { lo: 0.2, hi: 1.2 };
        let omega = 0.3;
        let log_near = log_score(
            &PredictiveReport::Continuous(near.clone()),
            &Outcome::Real(omega),
        );
        let log_far = log_score(
            &PredictiveReport::Continuous(far.clone()),
            &Outcome::Real(omega),
        );
        assert_eq!(log_near.unwrap(), log_far.unwrap());

        let c_near = crps(&near, omega, SPEC).unwrap();
        let c_far = crps(&far, omega, SPEC).unwrap();
        assert!(
            (c_near - c_far).abs() > 0.05,
            "CRPS must see the tails: {c_near} vs {c_far}"
        );
    }

    // ---- propriety ----

    #[test]
    fn propriety_gap_is_exactly_zero_for_identical_reports() {
        let truth = PredictiveReport::Binary { prob: 0.63 };
        let (gap, hw) =
            propriety_gap(ScoringRule::Brier, &truth, &truth.clone(), 5000, 42, SPEC).unwrap();
        assert_eq!(gap, 0.0);
        assert_eq!(hw, 0.0);
    }

    #[test]
    fn brier_propriety_gap_matches_closed_form() {
        // E[1−(r−ω)²] gap between r=p and r=q is (p−q)² for Bernoulli(p)
        let truth = PredictiveReport::Binary { prob: 0.7 };
        let report = PredictiveReport::Binary { prob: 0.2 };
        let (gap, hw) =
            propriety_gap(ScoringRule::Brier, &truth, &report, 200_000, 11, SPEC).unwrap();
        assert!(hw < 0.01, "halfwidth {hw}");
        assert!((gap - 0.25).abs() < 0.01, "gap {gap}");
    }

    #[test]
    fn oriented_crps_propriety_gap_for_separated_normals() {
        // normals rescaled onto the unit interval, censored to grids so the
        // support is bounded
        let spec = GridSpec { size: 499 };
        let truth = PredictiveReport::Continuous(ContinuousDist::Grid(
            to_quantile_grid(
                &ContinuousDist::Normal {
                    mean: 0.5,
                    std_dev: 0.1,
                },
                spec,
            )
            .unwrap(),
        ));
        let report = PredictiveReport::Continuous(ContinuousDist::Grid(
            to_quantile_grid(
                &ContinuousDist::Normal {
                    mean: 0.6,
                    std_dev: 0.1,
                },
                spec,
            )
            .unwrap(),
        ));
        let (gap, hw) = propriety_gap(
            ScoringRule::OrientedCrps,
            &truth,
            &report,
            100_000,
            17,
            spec,
        )
        .unwrap();
        assert!(gap > hw, "gap {gap} not beyond halfwidth {hw}");
    }

    #[test]
    fn random_pairs_have_positive_propriety_gap() {
        // strictly proper rules: gap + halfwidth must stay positive on
        // well-separated random pairs
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let spec = GridSpec { size: 199 };
        for trial in 0..50 {
            let (rule, truth, report) = match trial % 3 {
                0 => {
                    let p: f64 = rng.gen_range(0.05..0.95);
                    let shift: f64 = rng.gen_range(0.15..0.4);
                    let q = if p > 0.5 { p - shift } else { p + shift };
                    (
                        ScoringRule::Brier,
                        PredictiveReport::Binary { prob: p },
                        PredictiveReport::Binary {
                            prob: q.clamp(0.01, 0.99),
                        },
                    )
                }
                1 => {
                    let mut t: Vec<f64> = (0..4).map(|_| rng.gen_range(0.05..1.0)).collect();
                    let s: f64 = t.iter().sum();
                    t.iter_mut().for_each(|p| *p /= s);
                    let mut r = t.clone();
                    r.rotate_right(1);
                    (ScoringRule::NormalizedRps, cat(&t), cat(&r))
                }
                _ => {
                    let a1: f64 = rng.gen_range(1.0..6.0);
                    let b1: f64 = rng.gen_range(1.0..6.0);
                    (
                        ScoringRule::OrientedCrps,
                        PredictiveReport::Continuous(ContinuousDist::Beta {
                            alpha: a1,
                            beta: b1,
                        }),
                        PredictiveReport::Continuous(ContinuousDist::Beta {
                            alpha: b1 + 1.5,
                            beta: a1 + 0.5,
                        }),
                    )
                }
            };
            let (gap, hw) =
                propriety_gap(rule, &truth, &report, 20_000, 1000 + trial, spec).unwrap();
            assert!(
                gap + hw > 0.0,
                "trial {trial} rule {rule}: gap {gap}, halfwidth {hw}"
            );
        }
    }

    #[test]
    fn rule_metadata() {
        assert!(ScoringRule::NormalizedRps.is_oriented());
        assert!(ScoringRule::Brier.orientable() && !ScoringRule::Brier.is_oriented());
        assert!(!ScoringRule::Log.orientable());
        assert!(ScoringRule::Brier.supports_form(ReportForm::Binary));
        assert!(!ScoringRule::Brier.supports_form(ReportForm::Continuous));
        for rule in ScoringRule::ALL {
            assert_eq!(rule.to_string().parse::<ScoringRule>().unwrap(), rule);
        }
    }

    #[test]
    fn grid_cdf_consistency_check() {
        // sanity tie-in: the CRPS evaluator and the grid CDF describe the
        // same distribution
        let d = ContinuousDist::Beta {
            alpha: 3.0,
            beta: 2.0,
        };
        let g = to_quantile_grid(&d, SPEC).unwrap();
        let gd = ContinuousDist::Grid(g);
        assert!((cdf_eval(&gd, 0.5) - cdf_eval(&d, 0.5)).abs() < 1e-3);
    }
}
