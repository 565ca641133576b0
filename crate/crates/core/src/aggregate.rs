//! Combining player reports into the aggregate forecast delivered to the
//! client.
//!
//! Weights come from wagers (`w_i = m_i / Σ m_j`). Two pooling operators
//! are provided: the linear opinion pool (LOP), which averages the reports
//! "vertically" (mixture of CDFs), and quantile averaging (QA), which
//! averages "horizontally" (mixture of inverse CDFs). For continuous
//! forecasts QA is the barycenter under the 2-Wasserstein distance, and it
//! yields a sharper pool than LOP.
//!
//! Every sum over (report, weight) pairs goes through the canonical-order
//! compensated summation in [`crate::numeric`], so both operators are
//! bitwise invariant under permuting the pairs — which in turn keeps full
//! settlements bitwise anonymous.

use crate::dist::{
    cdf_eval, quantile_eval, ContinuousDist, DistError, GridSpec, PredictiveReport, QuantileGrid,
    ReportForm,
};
use crate::numeric::stable_sum;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Weights must sum to one within this absolute tolerance.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error, Serialize, Deserialize)]
pub enum AggError {
    #[error("wager {0} is not strictly positive")]
    NonPositiveWager(f64),
    #[error("reports mix forms; aggregation needs a single form")]
    MixedForms,
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("no reports to aggregate")]
    EmptyInput,
    #[error("report grid does not match the session grid spec")]
    GridSpecMismatch,
    #[error("bad weights: {0}")]
    BadWeights(String),
    #[error(transparent)]
    Dist(#[from] DistError),
}

/// Normalized aggregation weights: strictly positive, summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    weights: Vec<f64>,
}

impl WeightVector {
    pub fn new(weights: Vec<f64>) -> Result<Self, AggError> {
        if weights.is_empty() {
            return Err(AggError::EmptyInput);
        }
        for &w in &weights {
            if !w.is_finite() || w <= 0.0 {
                return Err(AggError::BadWeights(format!(
                    "weight {w} is not strictly positive"
                )));
            }
        }
        let sum = stable_sum(weights.iter().copied());
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(AggError::BadWeights(format!("weights sum to {sum}")));
        }
        Ok(WeightVector { weights })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// How the platform pools the reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AggregationMethod {
    /// Linear opinion pool: wager-weighted mixture of the reports.
    Lop,
    /// Quantile averaging: wager-weighted average of inverse CDFs
    /// (continuous reports only).
    Qa,
}

impl std::fmt::Display for AggregationMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AggregationMethod::Lop => "lop",
            AggregationMethod::Qa => "qa",
        })
    }
}

impl std::str::FromStr for AggregationMethod {
    type Err = AggError;

    fn from_str(s: &str) -> Result<Self, AggError> {
        match s {
            "lop" => Ok(AggregationMethod::Lop),
            "qa" => Ok(AggregationMethod::Qa),
            other => Err(AggError::BadWeights(format!(
                "unknown aggregation method `{other}`"
            ))),
        }
    }
}

/// Turn raw wagers into normalized weights `m_i / Σ_j m_j`.
pub fn normalize_wagers(wagers: &[f64]) -> Result<WeightVector, AggError> {
    if wagers.is_empty() {
        return Err(AggError::EmptyInput);
    }
    for &m in wagers {
        if !m.is_finite() || m <= 0.0 {
            return Err(AggError::NonPositiveWager(m));
        }
    }
    let total = stable_sum(wagers.iter().copied());
    WeightVector::new(wagers.iter().map(|m| m / total).collect())
}

/// Dispatch to [`lop`] or [`qa`].
pub fn aggregate(
    method: AggregationMethod,
    reports: &[PredictiveReport],
    weights: &WeightVector,
    spec: GridSpec,
) -> Result<PredictiveReport, AggError> {
    match method {
        AggregationMethod::Lop => lop(reports, weights, spec),
        AggregationMethod::Qa => qa(reports, weights, spec),
    }
}

/// Linear opinion pool: the mixture `Σ w_i r_i`.
///
/// Binary and categorical reports average componentwise. Continuous
/// reports produce the mixture CDF `Σ w_i R_i`, returned as a quantile
/// grid by inverting that CDF at every grid level (bisection between the
/// extreme per-report quantiles).
pub fn lop(
    reports: &[PredictiveReport],
    weights: &WeightVector,
    spec: GridSpec,
) -> Result<PredictiveReport, AggError> {
    let w = check_lengths(reports, weights)?;
    match &reports[0] {
        PredictiveReport::Binary { .. } => {
            let ps: Vec<f64> = reports
                .iter()
                .map(|r| match r {
                    PredictiveReport::Binary { prob } => Ok(*prob),
                    _ => Err(AggError::MixedForms),
                })
                .collect::<Result<_, _>>()?;
            let pooled = stable_sum(ps.iter().zip(w).map(|(p, wi)| p * wi)).clamp(0.0, 1.0);
            Ok(PredictiveReport::Binary { prob: pooled })
        }
        PredictiveReport::Categorical { probs } => {
            let j = probs.len();
            let mut columns: Vec<Vec<f64>> = vec![Vec::with_capacity(reports.len()); j];
            for (r, wi) in reports.iter().zip(w) {
                let probs = match r {
                    PredictiveReport::Categorical { probs } if probs.len() == j => probs,
                    PredictiveReport::Categorical { probs } => {
                        return Err(AggError::LengthMismatch {
                            expected: j,
                            got: probs.len(),
                        })
                    }
                    _ => return Err(AggError::MixedForms),
                };
                for (col, p) in columns.iter_mut().zip(probs) {
                    col.push(p * wi);
                }
            }
            let pooled: Vec<f64> = columns
                .into_iter()
                .map(|col| stable_sum(col).clamp(0.0, 1.0))
                .collect();
            Ok(PredictiveReport::Categorical { probs: pooled })
        }
        PredictiveReport::Continuous(_) => {
            let dists = continuous_inputs(reports, spec)?;
            let taus = spec.taus();
            let mut values = Vec::with_capacity(taus.len());
            for &tau in &taus {
                values.push(invert_mixture(&dists, w, tau)?);
            }
            finish_grid(taus, values, &dists)
        }
    }
}

/// Quantile averaging: `R̂⁻¹(τ) = Σ w_i R_i⁻¹(τ)` per grid level.
///
/// A weighted sum of nondecreasing functions is nondecreasing, so the
/// result is always a valid grid. Continuous reports only.
pub fn qa(
    reports: &[PredictiveReport],
    weights: &WeightVector,
    spec: GridSpec,
) -> Result<PredictiveReport, AggError> {
    let w = check_lengths(reports, weights)?;
    let dists = continuous_inputs(reports, spec)?;
    let taus = spec.taus();
    let mut values = Vec::with_capacity(taus.len());
    for &tau in &taus {
        let mut terms = Vec::with_capacity(dists.len());
        for (d, wi) in dists.iter().zip(w) {
            terms.push(wi * quantile_eval(d, tau)?);
        }
        values.push(stable_sum(terms));
    }
    finish_grid(taus, values, &dists)
}

/// 2-Wasserstein distance `W₂ = sqrt(∫₀¹ (R₁⁻¹(τ) − R₂⁻¹(τ))² dτ)`.
///
/// Trapezoidal quadrature on the tau grid; outside the grid the quantile
/// functions are flat (the grids clamp), so the tails contribute
/// rectangles `τ₁·d₁²` and `(1−τ_M)·d_M²`.
pub fn wasserstein2(
    r1: &ContinuousDist,
    r2: &ContinuousDist,
    spec: GridSpec,
) -> Result<f64, AggError> {
    check_grid_spec(r1, spec)?;
    check_grid_spec(r2, spec)?;
    let taus = spec.taus();
    let m = taus.len();
    let mut d = Vec::with_capacity(m);
    for &tau in &taus {
        d.push(quantile_eval(r1, tau)? - quantile_eval(r2, tau)?);
    }
    let mut total = taus[0] * d[0] * d[0] + (1.0 - taus[m - 1]) * d[m - 1] * d[m - 1];
    for k in 0..m - 1 {
        total += (taus[k + 1] - taus[k]) * (d[k] * d[k] + d[k + 1] * d[k + 1]) / 2.0;
    }
    Ok(total.max(0.0).sqrt())
}

/// Mean of the distribution a grid represents: `∫₀¹ R⁻¹(τ) dτ` with the
/// same flat-tail convention as [`wasserstein2`].
pub fn grid_mean(grid: &QuantileGrid) -> f64 {
    integrate_over_tau(grid, |v| v)
}

/// Variance of the distribution a grid represents (central two-pass form).
pub fn grid_variance(grid: &QuantileGrid) -> f64 {
    let mean = grid_mean(grid);
    integrate_over_tau(grid, |v| (v - mean) * (v - mean)).max(0.0)
}

fn integrate_over_tau(grid: &QuantileGrid, f: impl Fn(f64) -> f64) -> f64 {
    let taus = grid.taus();
    let values = grid.values();
    let m = taus.len();
    let mut total = taus[0] * f(values[0]) + (1.0 - taus[m - 1]) * f(values[m - 1]);
    for k in 0..m - 1 {
        total += (taus[k + 1] - taus[k]) * (f(values[k]) + f(values[k + 1])) / 2.0;
    }
    total
}

// ============================================================================
// Internals
// ============================================================================

fn check_lengths<'a>(
    reports: &[PredictiveReport],
    weights: &'a WeightVector,
) -> Result<&'a [f64], AggError> {
    if reports.is_empty() {
        return Err(AggError::EmptyInput);
    }
    if reports.len() != weights.len() {
        return Err(AggError::LengthMismatch {
            expected: reports.len(),
            got: weights.len(),
        });
    }
    let form = reports[0].form();
    let same = reports.iter().all(|r| match (r.form(), form) {
        (ReportForm::Categorical(_), ReportForm::Categorical(_)) => true,
        (a, b) => a == b,
    });
    if !same {
        return Err(AggError::MixedForms);
    }
    Ok(weights.weights())
}

fn continuous_inputs(
    reports: &[PredictiveReport],
    spec: GridSpec,
) -> Result<Vec<&ContinuousDist>, AggError> {
    let mut dists = Vec::with_capacity(reports.len());
    for r in reports {
        match r {
            PredictiveReport::Continuous(d) => {
                check_grid_spec(d, spec)?;
                dists.push(d);
            }
            _ => return Err(AggError::MixedForms),
        }
    }
    Ok(dists)
}

/// Grids inside a session must be sampled on the session's tau levels;
/// silently resampling would change the forecast.
fn check_grid_spec(dist: &ContinuousDist, spec: GridSpec) -> Result<(), AggError> {
    match dist {
        ContinuousDist::Grid(g) if !g.matches_spec(spec) => Err(AggError::GridSpecMismatch),
        _ => Ok(()),
    }
}

/// Solve `Σ w_i R_i(x) = tau` by bisection. The bracket is the interval
/// between the smallest and largest per-report tau-quantiles: each R_i is
/// nondecreasing, so the mixture CDF is ≤ tau at the left end and ≥ tau at
/// the right end.
fn invert_mixture(dists: &[&ContinuousDist], weights: &[f64], tau: f64) -> Result<f64, AggError> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for d in dists {
        let q = quantile_eval(d, tau)?;
        lo = lo.min(q);
        hi = hi.max(q);
    }
    if lo >= hi {
        return Ok(lo);
    }
    let mixture_cdf =
        |x: f64| stable_sum(dists.iter().zip(weights).map(|(d, w)| w * cdf_eval(d, x)));
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if mixture_cdf(mid) < tau {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-13 * (1.0 + mid.abs()) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Assemble an aggregated grid, clamping 1-ulp support overshoot from the
/// weighted sums and carrying the union of the input supports.
fn finish_grid(
    taus: Vec<f64>,
    mut values: Vec<f64>,
    dists: &[&ContinuousDist],
) -> Result<PredictiveReport, AggError> {
    let mut support: Option<(f64, f64)> = Some((f64::INFINITY, f64::NEG_INFINITY));
    for d in dists {
        match (support, d.bounded_support()) {
            (Some((lo, hi)), Some((dlo, dhi))) => {
                support = Some((lo.min(dlo), hi.max(dhi)));
            }
            _ => {
                support = None;
                break;
            }
        }
    }
    if let Some((lo, hi)) = support {
        for v in &mut values {
            *v = v.clamp(lo, hi);
        }
    }
    let grid = QuantileGrid::new(taus, values, support)?;
    Ok(PredictiveReport::Continuous(ContinuousDist::Grid(grid)))
}
